#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

#include "pathogan/dataset.hpp"
#include "pathogan/image.hpp"

namespace pathogan {

// NCHW float tensors in [-1, 1] are the network-side image representation.
torch::Tensor to_tensor(const PlanarImage& image);
torch::Tensor to_tensor(const Image8& image);
PlanarImage to_planar(const torch::Tensor& chw);
Image8 to_image8(const torch::Tensor& chw);

// Loads every manifest tile (paths relative to the manifest) as an N x 3 x S x S batch.
torch::Tensor load_manifest_images(const std::filesystem::path& manifest_path, const Manifest& manifest);

// Bilinear resize (align_corners = false) of an NCHW batch; identity when the size already matches.
torch::Tensor resize_bilinear(const torch::Tensor& images, int size);

// Average-pool an NCHW batch down to `size`.
torch::Tensor downsample_to(const torch::Tensor& images, int size);

// Byte-level digest of a tensor (shape, dtype and contents), for equality checks
// and parameter checksums.
std::uint64_t tensor_digest(const torch::Tensor& t);
std::uint64_t parameters_digest(const torch::nn::Module& module);

// Pins intra-op parallelism to one thread so runs are bitwise reproducible.
void configure_determinism(bool deterministic);

}  // namespace pathogan
