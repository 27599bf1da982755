#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "pathogan/error.hpp"
#include "pathogan/generative.hpp"
#include "pathogan/log.hpp"
#include "pathogan/rng.hpp"
#include "pathogan/tensor_utils.hpp"

namespace pathogan {

using json = nlohmann::json;

std::string to_string(Objective o) { return o == Objective::wasserstein_gp ? "wgan-gp" : "nonsaturating"; }

Objective parse_objective(const std::string& text) {
    if (text == "wgan-gp" || text == "wasserstein_gp") return Objective::wasserstein_gp;
    if (text == "nonsaturating" || text == "ns") return Objective::nonsaturating;
    throw InvalidInput("unknown objective '" + text + "'");
}

int TrainHyperparams::effective_critic_steps(Objective objective) const {
    if (critic_steps > 0) return critic_steps;
    return objective == Objective::wasserstein_gp ? 5 : 1;
}

namespace {

void validate(const TrainHyperparams& h) {
    require(h.learning_rate > 0.0, "learning rate must be positive");
    require(h.beta1 >= 0.0 && h.beta1 < 1.0 && h.beta2 >= 0.0 && h.beta2 < 1.0, "Adam betas must lie in [0,1)");
    require(h.batch_size >= 1, "batch size must be >= 1");
    require(h.gp_lambda >= 0.0, "gradient penalty weight must be non-negative");
    require(h.critic_steps >= 0, "critic steps must be non-negative");
    require(h.generator_steps >= 0, "generator steps must be non-negative");
    require(h.checkpoint_every_images >= 0, "checkpoint interval must be non-negative");
}

std::unique_ptr<torch::optim::Adam> make_adam(torch::nn::Module& module, const TrainHyperparams& h) {
    return std::make_unique<torch::optim::Adam>(
        module.parameters(), torch::optim::AdamOptions(h.learning_rate).betas({h.beta1, h.beta2}));
}

json spec_to_json(const GeneratorSpec& s) {
    json phases = json::array();
    for (const auto& p : s.growth_schedule)
        phases.push_back({{"resolution", p.resolution}, {"images_fade", p.images_fade}, {"images_stable", p.images_stable}});
    return {{"latent_dim", s.latent_dim},
            {"base_channels", s.base_channels},
            {"output_resolution", s.output_resolution},
            {"architecture", to_string(s.architecture)},
            {"critic_feature_width", s.critic_feature_width},
            {"mapping_layers", s.mapping_layers},
            {"growth_schedule", phases}};
}

GeneratorSpec spec_from_json(const json& j) {
    GeneratorSpec s;
    s.latent_dim = j.at("latent_dim");
    s.base_channels = j.at("base_channels");
    s.output_resolution = j.at("output_resolution");
    s.architecture = parse_architecture(j.at("architecture"));
    s.critic_feature_width = j.at("critic_feature_width");
    s.mapping_layers = j.at("mapping_layers");
    for (const auto& p : j.at("growth_schedule"))
        s.growth_schedule.push_back({p.at("resolution"), p.at("images_fade"), p.at("images_stable")});
    return s;
}

json hyper_to_json(const TrainHyperparams& h) {
    return {{"learning_rate", h.learning_rate},
            {"beta1", h.beta1},
            {"beta2", h.beta2},
            {"batch_size", h.batch_size},
            {"gp_lambda", h.gp_lambda},
            {"critic_steps", h.critic_steps},
            {"generator_steps", h.generator_steps},
            {"checkpoint_every_images", h.checkpoint_every_images},
            {"flips", h.flips},
            {"seed", h.seed}};
}

TrainHyperparams hyper_from_json(const json& j) {
    TrainHyperparams h;
    h.learning_rate = j.at("learning_rate");
    h.beta1 = j.at("beta1");
    h.beta2 = j.at("beta2");
    h.batch_size = j.at("batch_size");
    h.gp_lambda = j.at("gp_lambda");
    h.critic_steps = j.at("critic_steps");
    h.generator_steps = j.at("generator_steps");
    h.checkpoint_every_images = j.at("checkpoint_every_images");
    h.flips = j.at("flips");
    h.seed = j.at("seed");
    return h;
}

json loss_to_json(const LossRecord& r) {
    return json::array({r.step, r.images_seen, r.resolution, r.fade_alpha, r.critic_real, r.critic_fake, r.penalty,
                        r.critic_loss, r.generator_loss});
}

LossRecord loss_from_json(const json& j) {
    return {j[0], j[1], j[2], j[3], j[4], j[5], j[6], j[7], j[8]};
}

// Index into the real set of the k-th image drawn; each epoch uses its own
// seeded permutation so the stream can be resumed from images_seen alone.
class RealStream {
public:
    RealStream(std::int64_t n, std::uint64_t seed) : n_(n), seed_(seed) {}

    std::int64_t at(std::int64_t k) {
        const std::int64_t epoch = k / n_;
        if (epoch != epoch_) {
            order_.resize(n_);
            std::iota(order_.begin(), order_.end(), 0);
            Rng rng(derive_seed(seed_, "epoch#" + std::to_string(epoch)));
            for (std::int64_t i = n_ - 1; i > 0; --i)
                std::swap(order_[i], order_[rng.below(static_cast<std::uint64_t>(i) + 1)]);
            epoch_ = epoch;
        }
        return order_[k % n_];
    }

private:
    std::int64_t n_;
    std::uint64_t seed_;
    std::int64_t epoch_ = -1;
    std::vector<std::int64_t> order_;
};

torch::Tensor real_batch(const torch::Tensor& real, RealStream& stream, std::int64_t first, int count, bool flips,
                         Rng& rng) {
    std::vector<torch::Tensor> items;
    items.reserve(count);
    for (int i = 0; i < count; ++i) {
        auto x = real[stream.at(first + i)];
        if (flips) {
            const auto f = rng.below(4);
            if (f & 1) x = x.flip({2});
            if (f & 2) x = x.flip({1});
        }
        items.push_back(x);
    }
    return torch::stack(items);
}

// Real images shown to the critic at a growth stage: downsampled to the
// active level and, during a fade, blended with the previous level.
torch::Tensor real_at_stage(const torch::Tensor& images, int resolution, double alpha) {
    auto x = downsample_to(images, resolution);
    if (alpha < 1.0 && resolution > 4) {
        namespace F = torch::nn::functional;
        const auto low = F::interpolate(downsample_to(images, resolution / 2),
                                        F::InterpolateFuncOptions()
                                            .size(std::vector<int64_t>{resolution, resolution})
                                            .mode(torch::kNearest));
        x = alpha * x + (1.0 - alpha) * low;
    }
    return x;
}

LatentBatch draw_latents(const GeneratorSpec& spec, int n, Rng& rng) {
    LatentBatch batch;
    std::vector<float> z(static_cast<std::size_t>(n) * spec.latent_dim);
    rng.fill_normal(z);
    batch.z = torch::from_blob(z.data(), {n, spec.latent_dim}, torch::kFloat32).clone();
    if (spec.has_intermediate_latent()) {
        for (int r : spec.levels()) {
            std::vector<float> noise(static_cast<std::size_t>(n) * r * r);
            rng.fill_normal(noise);
            batch.noise.push_back(torch::from_blob(noise.data(), {n, 1, r, r}, torch::kFloat32).clone());
        }
    }
    return batch;
}

double scalar(const torch::Tensor& t) { return t.detach().to(torch::kFloat64).item<double>(); }

std::string step_name(std::int64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step_%06lld.ckpt", static_cast<long long>(step));
    return buf;
}

}  // namespace

TrainState TrainState::create(const GeneratorSpec& spec, Objective objective, const TrainHyperparams& hyper) {
    spec.validate();
    validate(hyper);
    TrainState s;
    s.spec = spec;
    s.objective = objective;
    s.hyper = hyper;
    torch::manual_seed(derive_seed(hyper.seed, "init"));
    s.generator = Generator(spec);
    s.critic = Critic(spec);
    s.generator_optimizer = make_adam(*s.generator, hyper);
    s.critic_optimizer = make_adam(*s.critic, hyper);
    const GrowthStage stage = GrowthSchedule(spec.growth_schedule, spec.output_resolution).stage_at(0);
    s.resolution = stage.resolution;
    s.fade_alpha = stage.fade_alpha;
    return s;
}

void train_gan(TrainState& state, const torch::Tensor& real_images, const TrainOptions& options) {
    require(real_images.defined() && real_images.dim() == 4 && real_images.size(0) >= 1, "no training images");
    require(real_images.size(1) == 3 && real_images.size(2) == state.spec.output_resolution &&
                real_images.size(3) == state.spec.output_resolution,
            "training tiles do not match the generator's output resolution");
    const auto& h = state.hyper;
    const GrowthSchedule schedule(state.spec.growth_schedule, state.spec.output_resolution);
    const int critic_steps = h.effective_critic_steps(state.objective);
    const auto real = real_images.to(torch::kFloat32).contiguous();
    RealStream stream(real.size(0), derive_seed(h.seed, "data"));
    auto& G = state.generator;
    auto& D = state.critic;
    G->train();
    D->train();

    auto diagnose = [&](const std::string& what) {
        std::filesystem::path path = options.checkpoint_dir
                                         ? *options.checkpoint_dir / "diagnostic.ckpt"
                                         : std::filesystem::temp_directory_path() /
                                               ("pathogan_diagnostic_" + hash_hex(h.seed) + ".ckpt");
        if (options.checkpoint_dir) std::filesystem::create_directories(*options.checkpoint_dir);
        save_checkpoint(state, path);
        throw NumericalError("non-finite " + what + " at step " + std::to_string(state.step) +
                             "; diagnostic checkpoint written to " + path.string());
    };

    while (state.step < h.generator_steps) {
        const GrowthStage stage = schedule.stage_at(state.images_seen);
        state.resolution = stage.resolution;
        state.fade_alpha = stage.fade_alpha;
        G->set_stage(stage.resolution, stage.fade_alpha);
        D->set_stage(stage.resolution, stage.fade_alpha);
        Rng rng(derive_seed(h.seed, "step#" + std::to_string(state.step)));
        LossRecord rec;
        rec.step = state.step;
        rec.resolution = stage.resolution;
        rec.fade_alpha = stage.fade_alpha;

        for (int k = 0; k < critic_steps; ++k) {
            const auto reals = real_at_stage(real_batch(real, stream, state.images_seen, h.batch_size, h.flips, rng),
                                             stage.resolution, stage.fade_alpha);
            torch::Tensor fakes;
            {
                torch::NoGradGuard no_grad;
                fakes = G->synthesize(draw_latents(state.spec, h.batch_size, rng), stage.resolution, stage.fade_alpha);
            }
            const auto d_real = D->score(reals, stage.resolution, stage.fade_alpha).mean().to(torch::kFloat64);
            const auto d_fake = D->score(fakes, stage.resolution, stage.fade_alpha).mean().to(torch::kFloat64);
            torch::Tensor loss, penalty;
            if (state.objective == Objective::wasserstein_gp) {
                penalty = gradient_penalty(
                    [&](const torch::Tensor& x) { return D->score(x, stage.resolution, stage.fade_alpha); }, reals,
                    fakes, rng.next_u64());
                loss = d_fake - d_real + h.gp_lambda * penalty;
            } else {
                loss = torch::softplus(-D->score(reals, stage.resolution, stage.fade_alpha)).mean().to(torch::kFloat64) +
                       torch::softplus(D->score(fakes, stage.resolution, stage.fade_alpha)).mean().to(torch::kFloat64);
            }
            rec.critic_real = scalar(d_real);
            rec.critic_fake = scalar(d_fake);
            rec.penalty = penalty.defined() ? scalar(penalty) : 0.0;
            rec.critic_loss = scalar(loss);
            if (!std::isfinite(rec.critic_loss)) diagnose("critic loss");
            state.critic_optimizer->zero_grad();
            loss.backward();
            state.critic_optimizer->step();
            state.images_seen += h.batch_size;
        }

        const auto fakes = G->synthesize(draw_latents(state.spec, h.batch_size, rng), stage.resolution, stage.fade_alpha);
        const auto scores = D->score(fakes, stage.resolution, stage.fade_alpha);
        const auto g_loss = state.objective == Objective::wasserstein_gp ? -scores.mean() : torch::softplus(-scores).mean();
        rec.generator_loss = scalar(g_loss);
        if (!std::isfinite(rec.generator_loss)) diagnose("generator loss");
        state.generator_optimizer->zero_grad();
        g_loss.backward();
        state.generator_optimizer->step();
        state.critic_optimizer->zero_grad();

        const std::int64_t before = state.images_seen - static_cast<std::int64_t>(critic_steps) * h.batch_size;
        ++state.step;
        rec.images_seen = state.images_seen;
        state.losses.push_back(rec);
        if (options.on_step) options.on_step(rec);
        if (options.checkpoint_dir && h.checkpoint_every_images > 0 &&
            before / h.checkpoint_every_images != state.images_seen / h.checkpoint_every_images) {
            std::filesystem::create_directories(*options.checkpoint_dir);
            const auto path = *options.checkpoint_dir / step_name(state.step);
            save_checkpoint(state, path);
            state.checkpoints.push_back(path);
        }
    }

    const GrowthStage stage = schedule.stage_at(state.images_seen);
    state.resolution = stage.resolution;
    state.fade_alpha = stage.fade_alpha;
    G->set_stage(stage.resolution, stage.fade_alpha);
    D->set_stage(stage.resolution, stage.fade_alpha);
    G->eval();
    D->eval();
    if (options.checkpoint_dir) {
        std::filesystem::create_directories(*options.checkpoint_dir);
        const auto path = *options.checkpoint_dir / "final.ckpt";
        save_checkpoint(state, path);
        state.checkpoints.push_back(path);
        write_loss_log(*options.checkpoint_dir / "train_log.tsv", state.losses);
    }
    log::info("trained " + std::to_string(state.step) + " generator steps over " +
              std::to_string(state.images_seen) + " images");
}

TrainState train_gan(const torch::Tensor& real_images, const GeneratorSpec& spec, Objective objective,
                     const TrainHyperparams& hyper, const TrainOptions& options) {
    TrainState state = TrainState::create(spec, objective, hyper);
    train_gan(state, real_images, options);
    return state;
}

TrainState train_gan(const std::filesystem::path& manifest_path, const GeneratorSpec& spec, Objective objective,
                     const TrainHyperparams& hyper, const TrainOptions& options) {
    const Manifest manifest = read_manifest(manifest_path);
    require(!manifest.entries.empty(), "training manifest is empty");
    validate_manifest(manifest, manifest_path.parent_path());
    return train_gan(downsample_to(load_manifest_images(manifest_path, manifest), spec.output_resolution), spec, objective,
                     hyper, options);
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    json losses = json::array();
    for (const auto& r : state.losses) losses.push_back(loss_to_json(r));
    const json meta = {{"format", "pathogan-gan-checkpoint"},
                       {"version", 1},
                       {"spec", spec_to_json(state.spec)},
                       {"objective", to_string(state.objective)},
                       {"hyper", hyper_to_json(state.hyper)},
                       {"images_seen", state.images_seen},
                       {"step", state.step},
                       {"fade_alpha", state.fade_alpha},
                       {"resolution", state.resolution},
                       {"seed", state.hyper.seed},
                       {"losses", losses}};
    torch::serialize::OutputArchive archive;
    archive.write("meta", c10::IValue(meta.dump()));
    torch::serialize::OutputArchive g, d, go, dopt;
    state.generator->save(g);
    state.critic->save(d);
    if (state.generator_optimizer) state.generator_optimizer->save(go);
    if (state.critic_optimizer) state.critic_optimizer->save(dopt);
    archive.write("generator", g);
    archive.write("critic", d);
    archive.write("generator_optimizer", go);
    archive.write("critic_optimizer", dopt);
    try {
        archive.save_to(path.string());
    } catch (const c10::Error& e) {
        throw IoError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    json meta;
    try {
        archive.load_from(path.string());
        c10::IValue text;
        archive.read("meta", text);
        meta = json::parse(text.toStringRef());
    } catch (const c10::Error& e) {
        throw IoError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    } catch (const json::exception& e) {
        throw IoError("corrupt checkpoint metadata in " + path.string() + ": " + e.what());
    }
    if (meta.value("format", "") != "pathogan-gan-checkpoint") throw IoError("not a generator checkpoint: " + path.string());
    TrainState state =
        TrainState::create(spec_from_json(meta.at("spec")), parse_objective(meta.at("objective")), hyper_from_json(meta.at("hyper")));
    torch::serialize::InputArchive g, d, go, dopt;
    archive.read("generator", g);
    archive.read("critic", d);
    archive.read("generator_optimizer", go);
    archive.read("critic_optimizer", dopt);
    state.generator->load(g);
    state.critic->load(d);
    state.generator_optimizer->load(go);
    state.critic_optimizer->load(dopt);
    state.images_seen = meta.at("images_seen");
    state.step = meta.at("step");
    state.fade_alpha = meta.at("fade_alpha");
    state.resolution = meta.at("resolution");
    for (const auto& r : meta.at("losses")) state.losses.push_back(loss_from_json(r));
    state.generator->set_stage(state.resolution, state.fade_alpha);
    state.critic->set_stage(state.resolution, state.fade_alpha);
    state.generator->eval();
    state.critic->eval();
    return state;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& losses) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    out << "step\timages_seen\tresolution\tfade_alpha\tcritic_real\tcritic_fake\tpenalty\tcritic_loss\tgenerator_loss\n";
    for (const auto& r : losses)
        out << r.step << '\t' << r.images_seen << '\t' << r.resolution << '\t' << r.fade_alpha << '\t' << r.critic_real
            << '\t' << r.critic_fake << '\t' << r.penalty << '\t' << r.critic_loss << '\t' << r.generator_loss << '\n';
}

}  // namespace pathogan
