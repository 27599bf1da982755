#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pathogan/generative.hpp"

namespace pathogan {

enum class Strategy { iterative, encoder, perceptual };
std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& text);

struct InversionConfig {
    Strategy strategy = Strategy::iterative;
    int steps = 500;
    double step_size = 0.01;
    double lambda_disc = 0.1;
    double kappa_enc = 1.0;
    bool optimize_noise = true;
    std::uint64_t seed = 0;
    // Fraction of the run over which the step size decays to zero along a
    // cosine; 0 keeps it constant.
    double rampdown = 0.25;
    // Adam moment decays. A short second-moment memory keeps the step from
    // collapsing as the residual shrinks.
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.9;
    // Perceptual projection only.
    std::string perceptual_distance = "pixel-mse";
    double noise_regularization = 1e5;
    int mean_w_samples = 10000;

    void validate() const;
};

struct LossTerms {
    double total = 0.0;
    double residual = 0.0;
    double disc = 0.0;
};

// One logged optimisation step. For the perceptual strategy `residual` holds
// the perceptual distance and `regularization` the weighted noise penalty.
struct TraceEntry {
    int step = 0;
    double residual = 0.0;
    double disc = 0.0;
    double regularization = 0.0;
    double total = 0.0;
    double best_total = 0.0;
};

struct InversionResult {
    LatentCode code;
    torch::Tensor reconstruction;  // 3 x S x S in [-1, 1]
    LossTerms initial;
    LossTerms final;  // at `code`; equal to anomaly_score for the same lambda
    std::vector<TraceEntry> loss_trace;
    double wall_time = 0.0;
};

// residual = mean squared pixel error, disc = mean squared error between the
// critic's penultimate features, total = (1 - lambda) residual + lambda disc.
// `x` is a single 3 x S x S image.
LossTerms inversion_loss(const torch::Tensor& x, Generator& G, Critic& D, const LatentCode& code, double lambda_disc);

// The same terms for an image and a given reconstruction, evaluated with the
// pixel kernels in double precision.
LossTerms reconstruction_loss(const torch::Tensor& x, const torch::Tensor& reconstruction, Critic& D,
                              double lambda_disc);

InversionResult invert_iterative(const torch::Tensor& x, Generator& G, Critic& D, const InversionConfig& cfg);

// Batched iterative inversion of an N x 3 x S x S batch; seeds[i] pins the
// initial z of image i. Equivalent to N independent runs.
std::vector<InversionResult> invert_iterative_batch(const torch::Tensor& images, Generator& G, Critic& D,
                                                    const InversionConfig& cfg,
                                                    const std::vector<std::uint64_t>& seeds);

class EncoderImpl : public torch::nn::Module {
public:
    EncoderImpl(int resolution, int latent_dim, int base_channels);

    int resolution() const { return resolution_; }
    int latent_dim() const { return latent_dim_; }
    int base_channels() const { return base_channels_; }
    torch::Tensor forward(const torch::Tensor& images);

private:
    int resolution_;
    int latent_dim_;
    int base_channels_;
    torch::nn::Sequential body_{nullptr};
    torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Encoder);

struct EncoderHyperparams {
    double learning_rate = 1e-3;
    int batch_size = 32;
    std::int64_t steps = 2000;
    int base_channels = 16;
    bool flips = false;
    std::uint64_t seed = 0;
};

struct EncoderRecord {
    std::int64_t step = 0;
    double pixel = 0.0;
    double feature = 0.0;
    double total = 0.0;  // pixel + kappa * feature
};

struct EncoderTraining {
    Encoder encoder{nullptr};
    std::vector<EncoderRecord> losses;
};

// Minimises MSE(x, G(E(x))) + kappa * MSE(f(x), f(G(E(x)))) over the images
// with G and D frozen.
EncoderTraining train_encoder(Generator& G, Critic& D, const torch::Tensor& images, double kappa_enc,
                              const EncoderHyperparams& hyper);
EncoderTraining train_encoder(Generator& G, Critic& D, const std::filesystem::path& normal_manifest,
                              double kappa_enc, const EncoderHyperparams& hyper);

InversionResult invert_encoder(const torch::Tensor& x, Encoder& E, Generator& G, Critic& D, double lambda_disc);
std::vector<InversionResult> invert_encoder_batch(const torch::Tensor& images, Encoder& E, Generator& G, Critic& D,
                                                  double lambda_disc);

void save_encoder(Encoder& E, const std::filesystem::path& path);
Encoder load_encoder(const std::filesystem::path& path);

// Per-sample distance between two N x 3 x S x S batches; returns N values and
// must be differentiable in its second argument.
using PerceptualDistance = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;

void register_perceptual_distance(const std::string& name, PerceptualDistance distance);
PerceptualDistance perceptual_distance(const std::string& name);
std::vector<std::string> perceptual_distance_names();

// Mean of squared autocorrelations of each noise map at offsets (1,0) and
// (0,1), over a pyramid of 2x average-pooled versions down to 8x8.
torch::Tensor noise_regularization(const std::vector<torch::Tensor>& noise);

// Average of `samples` mapped latents, the projection starting point.
std::vector<float> mean_w(Generator& G, int samples, std::uint64_t seed);

// Optimises w (and the noise maps when cfg.optimize_noise) against the named
// perceptual distance. Initial noise maps come from sample_noise_maps(spec, seed).
InversionResult invert_perceptual(const torch::Tensor& x, Generator& G, const InversionConfig& cfg);

}  // namespace pathogan
