#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

#include "pathogan/anomaly.hpp"
#include "pathogan/inversion.hpp"

namespace pathogan {

struct AnomalyResult {
    torch::Tensor query;           // 3 x S x S
    torch::Tensor reconstruction;  // 3 x S x S
    ResidualMap residual_map;
    double score = 0.0;
    Mask mask;  // residual_map >= threshold
    double threshold = 0.0;
};

// (1 - lambda) mean(residual_map) + lambda * critic feature MSE, evaluated on
// the inversion's reconstruction.
double anomaly_score(const torch::Tensor& query, const InversionResult& inversion, double lambda_disc, Critic& D);

AnomalyResult analyze(const torch::Tensor& query, const InversionResult& inversion, double lambda_disc, Critic& D,
                      const ThresholdPolicy& policy);

// Inverts a batch with the configured strategy, `chunk` images at a time.
// seeds[i] pins image i's initialisation for the optimising strategies.
std::vector<InversionResult> invert_images(const torch::Tensor& images, Generator& G, Critic& D,
                                           const InversionConfig& cfg, Encoder* encoder,
                                           const std::vector<std::uint64_t>& seeds, int chunk = 50);

// Scores every manifest tile. Image seeds derive from (cfg.seed, entry path),
// so a tile's score does not depend on its manifest position.
std::vector<ScoreRow> score_manifest(const std::filesystem::path& manifest_path, Generator& G, Critic& D,
                                     const InversionConfig& cfg, Encoder* encoder, int chunk = 50);

}  // namespace pathogan
