#include "pathogan/tensor_utils.hpp"

#include <cstring>

#include "pathogan/error.hpp"
#include "pathogan/rng.hpp"

namespace pathogan {

torch::Tensor to_tensor(const PlanarImage& image) {
    auto t = torch::empty({image.channels, image.height, image.width}, torch::kFloat32);
    std::memcpy(t.data_ptr<float>(), image.data.data(), image.data.size() * sizeof(float));
    return t;
}

torch::Tensor to_tensor(const Image8& image) { return to_tensor(to_signed_unit(image)); }

PlanarImage to_planar(const torch::Tensor& chw) {
    require(chw.dim() == 3, "expected a CHW tensor");
    const auto c = chw.contiguous().to(torch::kFloat32);
    PlanarImage out(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)), static_cast<int>(c.size(2)));
    std::memcpy(out.data.data(), c.data_ptr<float>(), out.data.size() * sizeof(float));
    return out;
}

Image8 to_image8(const torch::Tensor& chw) { return from_signed_unit(to_planar(chw)); }

torch::Tensor load_manifest_images(const std::filesystem::path& manifest_path, const Manifest& manifest) {
    require(!manifest.entries.empty(), "manifest is empty");
    std::vector<torch::Tensor> images;
    images.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        const Image8 img = read_png(resolve_entry(manifest_path, e));
        if (img.channels != 3) throw InvalidInput("tile is not RGB: " + e.path);
        if (!images.empty() && (img.height != images.front().size(1) || img.width != images.front().size(2)))
            throw InvalidInput("tiles in a manifest must share one size: " + e.path);
        images.push_back(to_tensor(img));
    }
    return torch::stack(images);
}

torch::Tensor resize_bilinear(const torch::Tensor& images, int size) {
    if (images.size(2) == size && images.size(3) == size) return images;
    namespace F = torch::nn::functional;
    return F::interpolate(images, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{size, size})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
}

torch::Tensor downsample_to(const torch::Tensor& images, int size) {
    const auto current = images.size(2);
    if (current == size) return images;
    require(current % size == 0, "downsample factor must be integral");
    return torch::avg_pool2d(images, current / size);
}

std::uint64_t tensor_digest(const torch::Tensor& t) {
    const auto c = t.detach().contiguous().cpu();
    std::string bytes;
    for (auto s : c.sizes()) bytes += std::to_string(s) + ",";
    bytes += std::string(c.dtype().name()) + ":";
    bytes.append(static_cast<const char*>(c.data_ptr()), c.numel() * c.element_size());
    return fnv1a64(bytes);
}

std::uint64_t parameters_digest(const torch::nn::Module& module) {
    std::uint64_t h = 0;
    for (const auto& p : module.named_parameters()) h = splitmix64(h ^ fnv1a64(p.key()) ^ tensor_digest(p.value()));
    for (const auto& b : module.named_buffers()) h = splitmix64(h ^ fnv1a64(b.key()) ^ tensor_digest(b.value()));
    return h;
}

void configure_determinism(bool deterministic) {
    if (deterministic) {
        torch::set_num_threads(1);
        at::globalContext().setDeterministicAlgorithms(true, false);
    }
}

}  // namespace pathogan
