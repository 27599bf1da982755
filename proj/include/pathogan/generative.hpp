#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pathogan/dataset.hpp"

namespace pathogan {

enum class Architecture {
    dcgan,   // transposed-convolution generator, strided-convolution critic
    resnet,  // residual up/down blocks (the Wasserstein variant's backbone)
    mapped,  // residual blocks plus a mapping network, intermediate latent w and per-level noise maps
};

std::string to_string(Architecture a);
Architecture parse_architecture(const std::string& text);

// One progressive-growing phase: fade the new level in over images_fade
// images, then train it at full strength for images_stable images.
struct GrowthPhase {
    int resolution = 0;
    std::int64_t images_fade = 0;
    std::int64_t images_stable = 0;
};

struct GrowthStage {
    int resolution = 0;
    double fade_alpha = 1.0;
    std::size_t phase = 0;
};

class GrowthSchedule {
public:
    GrowthSchedule() = default;
    GrowthSchedule(std::vector<GrowthPhase> phases, int final_resolution);

    bool empty() const { return phases_.empty(); }
    const std::vector<GrowthPhase>& phases() const { return phases_; }
    // Stage after `images_seen` images; past the last phase the final level
    // stays active with alpha 1.
    GrowthStage stage_at(std::int64_t images_seen) const;
    std::int64_t phase_start(std::size_t phase) const;

private:
    std::vector<GrowthPhase> phases_;
    int final_resolution_ = 0;
};

struct GeneratorSpec {
    int latent_dim = 128;
    int base_channels = 16;
    int output_resolution = 64;
    Architecture architecture = Architecture::resnet;
    int critic_feature_width = 128;
    int mapping_layers = 2;
    std::vector<GrowthPhase> growth_schedule;

    void validate() const;
    // Channel width of the level at `resolution`.
    int channels_at(int resolution) const;
    // 4, 8, ..., output_resolution
    std::vector<int> levels() const;
    bool has_intermediate_latent() const { return architecture == Architecture::mapped; }
};

struct NoiseMap {
    int size = 0;
    std::vector<float> values;  // size x size

    bool operator==(const NoiseMap&) const = default;
};

struct LatentCode {
    std::vector<float> z;
    std::optional<std::vector<float>> w;
    std::vector<NoiseMap> noise_maps;  // one per synthesis level when present

    bool operator==(const LatentCode&) const = default;
};

// Batched view of latent codes as tensors. `w` and `noise` are undefined /
// empty when absent; noise[i] has shape N x 1 x r x r for level i.
struct LatentBatch {
    torch::Tensor z;
    torch::Tensor w;
    std::vector<torch::Tensor> noise;

    std::int64_t size() const { return z.size(0); }
};

LatentBatch to_batch(const std::vector<LatentCode>& codes);
std::vector<LatentCode> from_batch(const LatentBatch& batch);

// i.i.d. standard normal z from the pinned generator (see Rng).
std::vector<LatentCode> sample_latent(int n, int latent_dim, std::uint64_t seed);
std::vector<NoiseMap> sample_noise_maps(const GeneratorSpec& spec, std::uint64_t seed);

class GeneratorImpl : public torch::nn::Module {
public:
    explicit GeneratorImpl(const GeneratorSpec& spec);

    const GeneratorSpec& spec() const { return spec_; }

    // z -> w; identity for architectures without a mapping network.
    torch::Tensor map(const torch::Tensor& z);

    // Images at `resolution` (a level of the spec) with the fade-in blend of
    // the previous level when alpha < 1. Uses batch.w when defined.
    torch::Tensor synthesize(const LatentBatch& batch, int resolution, double alpha);

    // Images at the active growth stage, upsampled to the output resolution.
    torch::Tensor forward(const LatentBatch& batch);

    void set_stage(int resolution, double alpha);
    int active_resolution() const { return active_resolution_; }
    double fade_alpha() const { return fade_alpha_; }

private:
    torch::Tensor block_forward(std::size_t level, torch::Tensor x, const LatentBatch& batch, const torch::Tensor& w);

    GeneratorSpec spec_;
    torch::nn::Sequential mapping_{nullptr};
    torch::nn::Linear stem_{nullptr};
    torch::nn::ModuleList blocks_;
    torch::nn::ModuleList to_rgb_;
    torch::nn::ModuleList styles_;
    std::vector<torch::Tensor> noise_strength_;
    int active_resolution_ = 0;
    double fade_alpha_ = 1.0;
};
TORCH_MODULE(Generator);

class CriticImpl : public torch::nn::Module {
public:
    explicit CriticImpl(const GeneratorSpec& spec);

    const GeneratorSpec& spec() const { return spec_; }
    int feature_width() const { return spec_.critic_feature_width; }

    // Penultimate activations for images at `resolution`.
    torch::Tensor features(const torch::Tensor& images, int resolution, double alpha);
    torch::Tensor score(const torch::Tensor& images, int resolution, double alpha);
    // Scores at the active stage; the input must match the active resolution.
    torch::Tensor forward(const torch::Tensor& images);

    void set_stage(int resolution, double alpha);
    int active_resolution() const { return active_resolution_; }
    double fade_alpha() const { return fade_alpha_; }

private:
    GeneratorSpec spec_;
    torch::nn::ModuleList from_rgb_;
    torch::nn::ModuleList blocks_;
    torch::nn::Linear feature_{nullptr};
    torch::nn::Linear head_{nullptr};
    int active_resolution_ = 0;
    double fade_alpha_ = 1.0;
};
TORCH_MODULE(Critic);

// Deterministic generation: images in [-1, 1], N x 3 x S x S.
torch::Tensor generate(Generator& generator, const std::vector<LatentCode>& codes);

// Critic penultimate features for images at the critic's active resolution.
torch::Tensor critic_features(Critic& critic, const torch::Tensor& images);

using CriticFn = std::function<torch::Tensor(const torch::Tensor&)>;

// mean over interpolates x = e x_real + (1 - e) x_fake, e ~ U[0,1) per sample,
// of (|grad_x D(x)|_2 - 1)^2. The result keeps its graph so it can be
// back-propagated into the critic.
torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               std::uint64_t seed);
torch::Tensor gradient_penalty(Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               std::uint64_t seed);

// (1 - alpha) * upsample(low) + alpha * full, nearest-neighbour upsampling.
// Works on NCHW tensors; runs on the SIMD lerp kernel.
torch::Tensor fade_blend(const torch::Tensor& low_resolution, const torch::Tensor& full_resolution, double alpha);

enum class Objective { nonsaturating, wasserstein_gp };
std::string to_string(Objective o);
Objective parse_objective(const std::string& text);

struct TrainHyperparams {
    double learning_rate = 2e-4;
    double beta1 = 0.0;
    double beta2 = 0.99;
    int batch_size = 32;
    double gp_lambda = 10.0;
    int critic_steps = 0;  // 0 selects the objective's default (5 for WGAN-GP, 1 otherwise)
    std::int64_t generator_steps = 1000;
    std::int64_t checkpoint_every_images = 0;  // 0: only the final checkpoint
    bool flips = true;
    std::uint64_t seed = 0;

    int effective_critic_steps(Objective objective) const;
};

struct LossRecord {
    std::int64_t step = 0;
    std::int64_t images_seen = 0;
    int resolution = 0;
    double fade_alpha = 1.0;
    double critic_real = 0.0;  // mean D(real)
    double critic_fake = 0.0;  // mean D(fake)
    double penalty = 0.0;      // gradient penalty (0 for the non-saturating objective)
    double critic_loss = 0.0;
    double generator_loss = 0.0;
};

struct TrainState {
    GeneratorSpec spec;
    Objective objective = Objective::wasserstein_gp;
    TrainHyperparams hyper;
    Generator generator{nullptr};
    Critic critic{nullptr};
    std::unique_ptr<torch::optim::Adam> generator_optimizer;
    std::unique_ptr<torch::optim::Adam> critic_optimizer;
    std::int64_t images_seen = 0;
    std::int64_t step = 0;
    double fade_alpha = 1.0;
    int resolution = 0;
    std::vector<LossRecord> losses;
    std::vector<std::filesystem::path> checkpoints;

    static TrainState create(const GeneratorSpec& spec, Objective objective, const TrainHyperparams& hyper);
};

struct TrainOptions {
    std::optional<std::filesystem::path> checkpoint_dir;
    std::function<void(const LossRecord&)> on_step;
};

// Alternating critic/generator updates on an in-memory N x 3 x S x S batch of
// real tiles (S = final resolution). Aborts with NumericalError after writing
// a diagnostic checkpoint when a loss becomes non-finite.
void train_gan(TrainState& state, const torch::Tensor& real_images, const TrainOptions& options = {});
TrainState train_gan(const torch::Tensor& real_images, const GeneratorSpec& spec, Objective objective,
                     const TrainHyperparams& hyper, const TrainOptions& options = {});
TrainState train_gan(const std::filesystem::path& manifest_path, const GeneratorSpec& spec, Objective objective,
                     const TrainHyperparams& hyper, const TrainOptions& options = {});

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& losses);

}  // namespace pathogan
