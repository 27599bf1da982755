#pragma once

#include "torch_doctest.hpp"

#include <filesystem>
#include <vector>

#include "pathogan/generative.hpp"
#include "pathogan/preprocess.hpp"
#include "pathogan/synthetic_corpus.hpp"
#include "pathogan/tensor_utils.hpp"
#include "pathogan/tiling.hpp"

namespace fixtures {

inline std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("pathogan_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline pathogan::GeneratorSpec tiny_spec(pathogan::Architecture arch = pathogan::Architecture::dcgan,
                                         int latent_dim = 8, int base_channels = 4) {
    pathogan::GeneratorSpec s;
    s.latent_dim = latent_dim;
    s.base_channels = base_channels;
    s.output_resolution = 32;
    s.architecture = arch;
    s.critic_feature_width = 12;
    return s;
}

inline bool same_bytes(const torch::Tensor& a, const torch::Tensor& b) {
    return pathogan::tensor_digest(a) == pathogan::tensor_digest(b);
}

struct Tiles {
    std::vector<torch::Tensor> normal;
    std::vector<torch::Tensor> tumor;
};

// High-coverage tiles of a few small synthetic slides, split by label.
inline Tiles corpus_tiles(int n_slides, int slide_size = 512, std::uint64_t seed = 7) {
    using namespace pathogan;
    CorpusSpec spec;
    spec.n_slides = n_slides;
    spec.slide_size = slide_size;
    spec.tumor_region_fraction = 0.3;
    spec.seed = seed;
    Tiles out;
    TilingConfig cfg;
    for (int i = 0; i < n_slides; ++i) {
        const auto s = generate_slide(spec, i);
        for (const auto& p : tile_slide({s.pixels, std::nullopt, s.slide_id}, s.tumor, cfg)) {
            if (p.coverage != CoverageClass::high) continue;
            (p.label == PatchLabel::tumor ? out.tumor : out.normal).push_back(to_tensor(p.pixels));
        }
    }
    return out;
}

// A small DC-style generator trained briefly on downsampled normal tiles.
inline pathogan::TrainState trained_tiny(int latent_dim = 8, std::int64_t steps = 40) {
    using namespace pathogan;
    const auto tiles = corpus_tiles(2);
    const auto real = downsample_to(torch::stack(tiles.normal), 32);
    TrainHyperparams h;
    h.batch_size = 16;
    h.generator_steps = steps;
    h.seed = 21;
    return train_gan(real, tiny_spec(Architecture::dcgan, latent_dim, 8), Objective::wasserstein_gp, h);
}

}  // namespace fixtures
