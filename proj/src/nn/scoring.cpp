#include "pathogan/scoring.hpp"

#include "pathogan/error.hpp"
#include "pathogan/log.hpp"
#include "pathogan/rng.hpp"
#include "pathogan/tensor_utils.hpp"

namespace pathogan {

double anomaly_score(const torch::Tensor& query, const InversionResult& inversion, double lambda_disc, Critic& D) {
    require(inversion.reconstruction.defined(), "inversion result has no reconstruction");
    return reconstruction_loss(query, inversion.reconstruction, D, lambda_disc).total;
}

AnomalyResult analyze(const torch::Tensor& query, const InversionResult& inversion, double lambda_disc, Critic& D,
                      const ThresholdPolicy& policy) {
    AnomalyResult r;
    r.query = query;
    r.reconstruction = inversion.reconstruction;
    r.score = anomaly_score(query, inversion, lambda_disc, D);
    r.residual_map = residual_map(to_planar(query), to_planar(inversion.reconstruction));
    auto seg = segment(r.residual_map, policy);
    r.mask = std::move(seg.mask);
    r.threshold = seg.threshold;
    return r;
}

std::vector<InversionResult> invert_images(const torch::Tensor& images, Generator& G, Critic& D,
                                           const InversionConfig& cfg, Encoder* encoder,
                                           const std::vector<std::uint64_t>& seeds, int chunk) {
    require(images.dim() == 4 && images.size(0) >= 1, "no images to invert");
    require(static_cast<std::int64_t>(seeds.size()) == images.size(0), "one seed per image is required");
    require(chunk >= 1, "chunk size must be positive");
    std::vector<InversionResult> out;
    out.reserve(seeds.size());
    for (std::int64_t start = 0; start < images.size(0); start += chunk) {
        const auto end = std::min<std::int64_t>(images.size(0), start + chunk);
        const auto part = images.slice(0, start, end);
        std::vector<InversionResult> results;
        switch (cfg.strategy) {
        case Strategy::iterative:
            results = invert_iterative_batch(part, G, D, cfg,
                                             std::vector<std::uint64_t>(seeds.begin() + start, seeds.begin() + end));
            break;
        case Strategy::encoder:
            if (!encoder) throw DependencyError("the encoder strategy needs a trained encoder (stage: train-encoder)");
            results = invert_encoder_batch(part, *encoder, G, D, cfg.lambda_disc);
            break;
        case Strategy::perceptual:
            for (std::int64_t i = start; i < end; ++i) {
                InversionConfig c = cfg;
                c.seed = seeds[i];
                auto r = invert_perceptual(images[i], G, c);
                r.final = reconstruction_loss(images[i], r.reconstruction, D, cfg.lambda_disc);
                results.push_back(std::move(r));
            }
            break;
        }
        for (auto& r : results) out.push_back(std::move(r));
        log::debug("inverted " + std::to_string(end) + "/" + std::to_string(images.size(0)) + " images");
    }
    return out;
}

std::vector<ScoreRow> score_manifest(const std::filesystem::path& manifest_path, Generator& G, Critic& D,
                                     const InversionConfig& cfg, Encoder* encoder, int chunk) {
    const Manifest m = read_manifest(manifest_path);
    require(!m.entries.empty(), "manifest to score is empty");
    validate_manifest(m, manifest_path.parent_path());
    // Tiles larger than the generator output are average-pooled down to it.
    const auto images = downsample_to(load_manifest_images(manifest_path, m), G->spec().output_resolution);
    std::vector<std::uint64_t> seeds;
    for (const auto& e : m.entries) seeds.push_back(derive_seed(cfg.seed, e.path));
    const auto results = invert_images(images, G, D, cfg, encoder, seeds, chunk);
    std::vector<ScoreRow> rows;
    for (std::size_t i = 0; i < results.size(); ++i)
        rows.push_back({m.entries[i].path, m.entries[i].label,
                        anomaly_score(images[static_cast<std::int64_t>(i)], results[i], cfg.lambda_disc, D)});
    return rows;
}

}  // namespace pathogan
