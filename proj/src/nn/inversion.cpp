#include "pathogan/inversion.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "pathogan/anomaly.hpp"
#include "pathogan/error.hpp"
#include "pathogan/rng.hpp"
#include "pathogan/tensor_utils.hpp"

namespace pathogan {

std::string to_string(Strategy s) {
    switch (s) {
    case Strategy::iterative:
        return "iterative";
    case Strategy::encoder:
        return "encoder";
    case Strategy::perceptual:
        return "perceptual";
    }
    return "iterative";
}

Strategy parse_strategy(const std::string& text) {
    if (text == "iterative") return Strategy::iterative;
    if (text == "encoder") return Strategy::encoder;
    if (text == "perceptual") return Strategy::perceptual;
    throw InvalidInput("unknown inversion strategy '" + text + "'");
}

void InversionConfig::validate() const {
    if (strategy != Strategy::encoder) require(steps >= 1, "inversion needs at least one step");
    require(step_size > 0.0, "step size must be positive");
    require(lambda_disc >= 0.0 && lambda_disc <= 1.0, "lambda_disc must lie in [0,1]");
    require(kappa_enc >= 0.0, "kappa_enc must be non-negative");
    require(rampdown >= 0.0 && rampdown <= 1.0, "rampdown must lie in [0,1]");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
            "Adam betas must lie in [0,1)");
    require(noise_regularization >= 0.0, "noise regularization weight must be non-negative");
    require(mean_w_samples >= 1, "mean_w_samples must be positive");
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Disables parameter gradients for the lifetime of the guard so backward
// passes only reach the optimised inputs.
class FreezeGuard {
public:
    explicit FreezeGuard(std::initializer_list<torch::nn::Module*> modules) {
        for (auto* m : modules)
            for (auto& p : m->parameters()) {
                saved_.emplace_back(p, p.requires_grad());
                p.requires_grad_(false);
            }
    }
    ~FreezeGuard() {
        for (auto& [p, flag] : saved_) p.requires_grad_(flag);
    }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    std::vector<std::pair<torch::Tensor, bool>> saved_;
};

double step_scale(int k, int steps, double rampdown) {
    if (rampdown <= 0.0) return 1.0;
    const double t = static_cast<double>(k) / steps;
    const double ramp = std::min(1.0, (1.0 - t) / rampdown);
    return 0.5 - 0.5 * std::cos(ramp * std::numbers::pi);
}

void set_lr(torch::optim::Adam& opt, double lr) {
    for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

void check_image(const torch::Tensor& x, const GeneratorSpec& spec) {
    require(x.defined() && x.dim() == 3, "expected a single 3 x S x S image");
    require(x.size(0) == 3 && x.size(1) == spec.output_resolution && x.size(2) == spec.output_resolution,
            "image shape does not match the generator output");
}

void check_batch(const torch::Tensor& x, const GeneratorSpec& spec) {
    require(x.defined() && x.dim() == 4 && x.size(0) >= 1, "expected a non-empty N x 3 x S x S batch");
    require(x.size(1) == 3 && x.size(2) == spec.output_resolution && x.size(3) == spec.output_resolution,
            "image shape does not match the generator output");
}

// Critic features at the critic's active level; full-resolution inputs are
// pooled down when the critic is still growing.
torch::Tensor features_of(Critic& D, const torch::Tensor& images) {
    return critic_features(D, downsample_to(images, D->active_resolution()));
}

}  // namespace

LossTerms reconstruction_loss(const torch::Tensor& x, const torch::Tensor& reconstruction, Critic& D,
                              double lambda_disc) {
    require(x.dim() == 3 && reconstruction.dim() == 3 && x.sizes() == reconstruction.sizes(),
            "query and reconstruction differ in shape");
    require(lambda_disc >= 0.0 && lambda_disc <= 1.0, "lambda_disc must lie in [0,1]");
    torch::NoGradGuard no_grad;
    LossTerms t;
    t.residual = residual_map(to_planar(x), to_planar(reconstruction)).mean();
    const auto fx = features_of(D, x.unsqueeze(0).to(torch::kFloat32)).to(torch::kFloat64);
    const auto fr = features_of(D, reconstruction.unsqueeze(0).to(torch::kFloat32)).to(torch::kFloat64);
    t.disc = (fx - fr).pow(2).mean().item<double>();
    t.total = (1.0 - lambda_disc) * t.residual + lambda_disc * t.disc;
    return t;
}

LossTerms inversion_loss(const torch::Tensor& x, Generator& G, Critic& D, const LatentCode& code, double lambda_disc) {
    check_image(x, G->spec());
    return reconstruction_loss(x, generate(G, {code})[0], D, lambda_disc);
}

std::vector<InversionResult> invert_iterative_batch(const torch::Tensor& images, Generator& G, Critic& D,
                                                    const InversionConfig& cfg,
                                                    const std::vector<std::uint64_t>& seeds) {
    cfg.validate();
    check_batch(images, G->spec());
    const auto n = images.size(0);
    require(static_cast<std::int64_t>(seeds.size()) == n, "one seed per image is required");
    const auto start = Clock::now();
    const auto& spec = G->spec();
    FreezeGuard freeze({G.get(), D.get()});

    std::vector<LatentCode> init;
    for (auto s : seeds) init.push_back(sample_latent(1, spec.latent_dim, s).front());
    LatentBatch batch = to_batch(init);
    const bool mapped = spec.has_intermediate_latent();
    if (mapped)
        for (int r : spec.levels()) batch.noise.push_back(torch::zeros({n, 1, r, r}));
    auto z = batch.z.clone().requires_grad_(true);
    torch::optim::Adam opt({z}, torch::optim::AdamOptions(cfg.step_size).betas({cfg.adam_beta1, cfg.adam_beta2}));

    const auto x = images.to(torch::kFloat32);
    torch::Tensor fx;
    {
        torch::NoGradGuard no_grad;
        fx = features_of(D, x);
    }
    const double lambda = cfg.lambda_disc;

    std::vector<InversionResult> results(n);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    auto best_z = z.detach().clone();

    // Evaluates the loss at the current z, logs it and returns the summed
    // total for back-propagation.
    auto evaluate = [&](int step) {
        LatentBatch b = batch;
        b.z = z;
        const auto g = G->forward(b);
        const auto residual = (x - g).pow(2).mean({1, 2, 3});
        const auto disc = (fx - features_of(D, g)).pow(2).mean(1);
        const auto r = residual.detach().to(torch::kFloat64);
        const auto d = disc.detach().to(torch::kFloat64);
        const double* rp = r.data_ptr<double>();
        const double* dp = d.data_ptr<double>();
        for (std::int64_t i = 0; i < n; ++i) {
            const double total = (1.0 - lambda) * rp[i] + lambda * dp[i];
            if (!std::isfinite(total))
                throw NumericalError("non-finite inversion loss at step " + std::to_string(step) + " for image " +
                                     std::to_string(i) + " after " + std::to_string(results[i].loss_trace.size()) +
                                     " logged steps");
            if (total < best[i]) {
                best[i] = total;
                best_z[i].copy_(z.detach()[i]);
            }
            if (step == 0)
                results[i].initial = {total, rp[i], dp[i]};
            else
                results[i].loss_trace.push_back({step, rp[i], dp[i], 0.0, total, best[i]});
        }
        return ((1.0 - lambda) * residual + lambda * disc).sum();
    };

    auto loss = evaluate(0);
    for (int k = 1; k <= cfg.steps; ++k) {
        auto grad = torch::autograd::grad({loss}, {z})[0];
        z.mutable_grad() = grad;
        set_lr(opt, cfg.step_size * step_scale(k - 1, cfg.steps, cfg.rampdown));
        opt.step();
        if (k < cfg.steps) {
            loss = evaluate(k);
        } else {
            torch::NoGradGuard no_grad;
            evaluate(k);
        }
    }

    LatentBatch final_batch = batch;
    final_batch.z = best_z;
    torch::Tensor recon;
    {
        torch::NoGradGuard no_grad;
        recon = G->forward(final_batch);
    }
    const auto codes = from_batch(final_batch);
    const double elapsed = seconds_since(start) / static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) {
        results[i].code = codes[i];
        results[i].reconstruction = recon[i].clone();
        results[i].final = reconstruction_loss(x[i], results[i].reconstruction, D, lambda);
        results[i].wall_time = elapsed;
    }
    return results;
}

InversionResult invert_iterative(const torch::Tensor& x, Generator& G, Critic& D, const InversionConfig& cfg) {
    check_image(x, G->spec());
    return invert_iterative_batch(x.unsqueeze(0), G, D, cfg, {cfg.seed}).front();
}

EncoderImpl::EncoderImpl(int resolution, int latent_dim, int base_channels)
    : resolution_(resolution), latent_dim_(latent_dim), base_channels_(base_channels) {
    require(resolution >= 8 && (resolution & (resolution - 1)) == 0, "encoder resolution must be a power of two >= 8");
    require(latent_dim >= 1 && base_channels >= 1, "encoder sizes must be positive");
    namespace nn = torch::nn;
    body_ = nn::Sequential();
    int ch = base_channels;
    body_->push_back(nn::Conv2d(nn::Conv2dOptions(3, ch, 3).padding(1)));
    body_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    for (int r = resolution; r > 4; r /= 2) {
        const int next = std::min(ch * 2, 8 * base_channels);
        body_->push_back(nn::Conv2d(nn::Conv2dOptions(ch, next, 4).stride(2).padding(1)));
        body_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
        ch = next;
    }
    register_module("body", body_);
    head_ = register_module("head", nn::Linear(ch * 16, latent_dim));
}

torch::Tensor EncoderImpl::forward(const torch::Tensor& images) {
    require(images.dim() == 4 && images.size(1) == 3 && images.size(2) == resolution_ && images.size(3) == resolution_,
            "encoder input shape mismatch");
    return head_(body_->forward(images).flatten(1));
}

EncoderTraining train_encoder(Generator& G, Critic& D, const torch::Tensor& images, double kappa_enc,
                              const EncoderHyperparams& hyper) {
    require(images.defined() && images.dim() == 4 && images.size(0) >= 1, "no encoder training images");
    check_batch(images, G->spec());
    require(kappa_enc >= 0.0, "kappa_enc must be non-negative");
    require(hyper.batch_size >= 1 && hyper.steps >= 0 && hyper.learning_rate > 0.0, "invalid encoder hyperparameters");
    const auto& spec = G->spec();
    FreezeGuard freeze({G.get(), D.get()});
    torch::manual_seed(derive_seed(hyper.seed, "encoder-init"));
    EncoderTraining out;
    out.encoder = Encoder(spec.output_resolution, spec.latent_dim, hyper.base_channels);
    auto& E = out.encoder;
    torch::optim::Adam opt(E->parameters(), torch::optim::AdamOptions(hyper.learning_rate));

    const auto data = images.to(torch::kFloat32).contiguous();
    const auto n = data.size(0);
    std::vector<std::int64_t> order(n);
    std::int64_t cursor = n;
    std::int64_t epoch = 0;
    for (std::int64_t step = 0; step < hyper.steps; ++step) {
        std::vector<std::int64_t> idx;
        Rng flip_rng(derive_seed(hyper.seed, "encoder-step#" + std::to_string(step)));
        while (static_cast<int>(idx.size()) < hyper.batch_size) {
            if (cursor == n) {
                std::iota(order.begin(), order.end(), 0);
                Rng rng(derive_seed(hyper.seed, "encoder-epoch#" + std::to_string(epoch++)));
                for (std::int64_t i = n - 1; i > 0; --i)
                    std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
                cursor = 0;
            }
            idx.push_back(order[cursor++]);
        }
        auto x = data.index_select(0, torch::tensor(idx, torch::kInt64));
        if (hyper.flips) {
            std::vector<torch::Tensor> items;
            for (std::int64_t i = 0; i < x.size(0); ++i) {
                auto t = x[i];
                const auto f = flip_rng.below(4);
                if (f & 1) t = t.flip({2});
                if (f & 2) t = t.flip({1});
                items.push_back(t);
            }
            x = torch::stack(items);
        }
        LatentBatch b;
        b.z = E->forward(x);
        const auto g = G->forward(b);
        const auto pixel = (x - g).pow(2).mean();
        torch::Tensor feature = torch::zeros({}, torch::kFloat32);
        if (kappa_enc > 0.0) {
            torch::Tensor fx;
            {
                torch::NoGradGuard no_grad;
                fx = features_of(D, x);
            }
            feature = (fx - features_of(D, g)).pow(2).mean();
        }
        const auto loss = pixel + kappa_enc * feature;
        EncoderRecord rec{step, pixel.item<double>(), feature.item<double>(), 0.0};
        rec.total = rec.pixel + kappa_enc * rec.feature;
        if (!std::isfinite(rec.total)) throw NumericalError("non-finite encoder loss at step " + std::to_string(step));
        out.losses.push_back(rec);
        opt.zero_grad();
        loss.backward();
        opt.step();
    }
    E->eval();
    return out;
}

EncoderTraining train_encoder(Generator& G, Critic& D, const std::filesystem::path& normal_manifest,
                              double kappa_enc, const EncoderHyperparams& hyper) {
    const Manifest m = read_manifest(normal_manifest);
    require(!m.entries.empty(), "encoder manifest is empty");
    for (const auto& e : m.entries)
        require(!e.label || *e.label == PatchLabel::normal, "encoder manifest must contain normal tiles only: " + e.path);
    const auto images = downsample_to(load_manifest_images(normal_manifest, m), G->spec().output_resolution);
    return train_encoder(G, D, images, kappa_enc, hyper);
}

std::vector<InversionResult> invert_encoder_batch(const torch::Tensor& images, Encoder& E, Generator& G, Critic& D,
                                                  double lambda_disc) {
    check_batch(images, G->spec());
    require(E->latent_dim() == G->spec().latent_dim, "encoder and generator latent dimensions differ");
    require(E->resolution() == G->spec().output_resolution, "encoder and generator resolutions differ");
    const auto start = Clock::now();
    const auto x = images.to(torch::kFloat32);
    LatentBatch b;
    torch::Tensor recon;
    {
        torch::NoGradGuard no_grad;
        b.z = E->forward(x);
        if (G->spec().has_intermediate_latent())
            for (int r : G->spec().levels()) b.noise.push_back(torch::zeros({x.size(0), 1, r, r}));
        recon = G->forward(b);
    }
    const double elapsed = seconds_since(start) / static_cast<double>(x.size(0));
    const auto codes = from_batch(b);
    std::vector<InversionResult> results(x.size(0));
    for (std::int64_t i = 0; i < x.size(0); ++i) {
        auto& r = results[i];
        r.code = codes[i];
        r.reconstruction = recon[i].clone();
        r.final = reconstruction_loss(x[i], r.reconstruction, D, lambda_disc);
        r.initial = r.final;
        r.loss_trace.push_back({1, r.final.residual, r.final.disc, 0.0, r.final.total, r.final.total});
        r.wall_time = elapsed;
    }
    return results;
}

InversionResult invert_encoder(const torch::Tensor& x, Encoder& E, Generator& G, Critic& D, double lambda_disc) {
    check_image(x, G->spec());
    return invert_encoder_batch(x.unsqueeze(0), E, G, D, lambda_disc).front();
}

void save_encoder(Encoder& E, const std::filesystem::path& path) {
    const nlohmann::json meta = {{"format", "pathogan-encoder"},
                                 {"resolution", E->resolution()},
                                 {"latent_dim", E->latent_dim()},
                                 {"base_channels", E->base_channels()}};
    torch::serialize::OutputArchive archive, body;
    archive.write("meta", c10::IValue(meta.dump()));
    E->save(body);
    archive.write("encoder", body);
    try {
        archive.save_to(path.string());
    } catch (const c10::Error& e) {
        throw IoError("cannot write encoder " + path.string() + ": " + e.what_without_backtrace());
    }
}

Encoder load_encoder(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("encoder not found: " + path.string());
    torch::serialize::InputArchive archive, body;
    nlohmann::json meta;
    try {
        archive.load_from(path.string());
        c10::IValue text;
        archive.read("meta", text);
        meta = nlohmann::json::parse(text.toStringRef());
        archive.read("encoder", body);
    } catch (const c10::Error& e) {
        throw IoError("cannot read encoder " + path.string() + ": " + e.what_without_backtrace());
    }
    if (meta.value("format", "") != "pathogan-encoder") throw IoError("not an encoder file: " + path.string());
    Encoder E(meta.at("resolution").get<int>(), meta.at("latent_dim").get<int>(), meta.at("base_channels").get<int>());
    E->load(body);
    E->eval();
    return E;
}

namespace {

std::mutex registry_mutex;

std::map<std::string, PerceptualDistance>& registry() {
    static std::map<std::string, PerceptualDistance> r = {
        {"pixel-mse", [](const torch::Tensor& a, const torch::Tensor& b) { return (a - b).pow(2).mean({1, 2, 3}); }},
    };
    return r;
}

}  // namespace

void register_perceptual_distance(const std::string& name, PerceptualDistance distance) {
    require(!name.empty() && distance, "perceptual distance needs a name and a function");
    std::lock_guard lock(registry_mutex);
    registry()[name] = std::move(distance);
}

PerceptualDistance perceptual_distance(const std::string& name) {
    std::lock_guard lock(registry_mutex);
    const auto it = registry().find(name);
    if (it == registry().end()) throw InvalidInput("no perceptual distance registered as '" + name + "'");
    return it->second;
}

std::vector<std::string> perceptual_distance_names() {
    std::lock_guard lock(registry_mutex);
    std::vector<std::string> names;
    for (const auto& [k, v] : registry()) names.push_back(k);
    return names;
}

torch::Tensor noise_regularization(const std::vector<torch::Tensor>& noise) {
    torch::Tensor reg = torch::zeros({}, torch::kFloat32);
    for (auto n : noise) {
        while (true) {
            reg = reg + (n * torch::roll(n, 1, 3)).mean().pow(2) + (n * torch::roll(n, 1, 2)).mean().pow(2);
            if (n.size(2) <= 8) break;
            n = torch::avg_pool2d(n, 2);
        }
    }
    return reg;
}

std::vector<float> mean_w(Generator& G, int samples, std::uint64_t seed) {
    require(G->spec().has_intermediate_latent(), "generator has no intermediate latent space");
    require(samples >= 1, "mean_w needs at least one sample");
    torch::NoGradGuard no_grad;
    const auto codes = sample_latent(samples, G->spec().latent_dim, seed);
    const auto w = G->map(to_batch(codes).z).to(torch::kFloat64).mean(0).to(torch::kFloat32).contiguous();
    return {w.data_ptr<float>(), w.data_ptr<float>() + w.numel()};
}

InversionResult invert_perceptual(const torch::Tensor& x, Generator& G, const InversionConfig& cfg) {
    if (!G->spec().has_intermediate_latent())
        throw UnsupportedStrategy("perceptual projection needs a generator with intermediate latents and noise maps (" +
                                  to_string(G->spec().architecture) + " has none)");
    cfg.validate();
    check_image(x, G->spec());
    const auto distance = perceptual_distance(cfg.perceptual_distance);
    const auto start = Clock::now();
    const auto& spec = G->spec();
    FreezeGuard freeze({G.get()});

    LatentCode init;
    init.z.assign(spec.latent_dim, 0.0f);
    init.w = mean_w(G, cfg.mean_w_samples, derive_seed(cfg.seed, "mean-w"));
    init.noise_maps = sample_noise_maps(spec, cfg.seed);
    LatentBatch batch = to_batch({init});
    auto w = batch.w.clone().requires_grad_(true);
    std::vector<torch::Tensor> noise;
    std::vector<torch::Tensor> params{w};
    for (auto& n : batch.noise) {
        noise.push_back(n.clone().requires_grad_(cfg.optimize_noise));
        if (cfg.optimize_noise) params.push_back(noise.back());
    }
    torch::optim::Adam opt(params, torch::optim::AdamOptions(cfg.step_size).betas({cfg.adam_beta1, cfg.adam_beta2}));
    const auto target = x.unsqueeze(0).to(torch::kFloat32);
    const double reg_weight = cfg.optimize_noise ? cfg.noise_regularization : 0.0;

    InversionResult result;
    double best = std::numeric_limits<double>::infinity();
    auto best_w = w.detach().clone();
    std::vector<torch::Tensor> best_noise;
    for (const auto& n : noise) best_noise.push_back(n.detach().clone());

    auto evaluate = [&](int step) {
        LatentBatch b;
        b.z = batch.z;
        b.w = w;
        b.noise = noise;
        const auto dist = distance(target, G->forward(b)).sum();
        const auto reg = reg_weight > 0.0 ? noise_regularization(noise) : torch::zeros({}, torch::kFloat32);
        const double d = dist.item<double>();
        const double r = reg_weight * reg.item<double>();
        const double total = d + r;
        if (!std::isfinite(total)) throw NumericalError("non-finite projection loss at step " + std::to_string(step));
        if (total < best) {
            best = total;
            best_w.copy_(w.detach());
            for (std::size_t l = 0; l < noise.size(); ++l) best_noise[l].copy_(noise[l].detach());
        }
        if (step == 0)
            result.initial = {total, d, 0.0};
        else
            result.loss_trace.push_back({step, d, 0.0, r, total, best});
        return dist + reg_weight * reg;
    };

    auto loss = evaluate(0);
    for (int k = 1; k <= cfg.steps; ++k) {
        opt.zero_grad();
        loss.backward();
        set_lr(opt, cfg.step_size * step_scale(k - 1, cfg.steps, cfg.rampdown));
        opt.step();
        if (cfg.optimize_noise) {
            torch::NoGradGuard no_grad;
            for (auto& n : noise) {
                const auto mean = n.mean();
                const auto std = (n - mean).pow(2).mean().sqrt();
                n.sub_(mean).div_(std);
            }
        }
        if (k < cfg.steps) {
            loss = evaluate(k);
        } else {
            torch::NoGradGuard no_grad;
            evaluate(k);
        }
    }

    LatentBatch final_batch;
    final_batch.z = batch.z;
    final_batch.w = best_w;
    final_batch.noise = best_noise;
    {
        torch::NoGradGuard no_grad;
        result.reconstruction = G->forward(final_batch)[0].clone();
        const double d = distance(target, result.reconstruction.unsqueeze(0)).sum().item<double>();
        const double r = reg_weight > 0.0 ? reg_weight * noise_regularization(best_noise).item<double>() : 0.0;
        result.final = {d + r, d, 0.0};
    }
    result.code = from_batch(final_batch).front();
    result.wall_time = seconds_since(start);
    return result;
}

}  // namespace pathogan
