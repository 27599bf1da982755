#include <cmath>
#include <filesystem>

#include "nn_fixtures.hpp"
#include "pathogan/error.hpp"
#include "pathogan/generative.hpp"
#include "pathogan/log.hpp"
#include "pathogan/tensor_utils.hpp"

using namespace pathogan;
namespace fs = std::filesystem;

namespace {

GeneratorSpec small_spec(Architecture arch, int resolution) {
    GeneratorSpec s;
    s.latent_dim = 8;
    s.base_channels = 4;
    s.output_resolution = resolution;
    s.architecture = arch;
    s.critic_feature_width = 12;
    return s;
}

GeneratorSpec tiny_spec(Architecture arch = Architecture::resnet) { return small_spec(arch, 32); }

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("pathogan_gen_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

torch::Tensor texture_tiles(int n, int size, std::uint64_t seed) {
    torch::manual_seed(seed);
    auto base = torch::tensor({0.8f, 0.3f, 0.6f}).view({1, 3, 1, 1});
    return (base + 0.1 * torch::randn({n, 3, size, size})).clamp(-1.0, 1.0);
}

bool same_bytes(const torch::Tensor& a, const torch::Tensor& b) { return tensor_digest(a) == tensor_digest(b); }

}  // namespace

TEST_CASE("sample_latent is pinned and standard normal") {
    CHECK((sample_latent(1, 16, 5).front().z == sample_latent(1, 16, 5).front().z));
    CHECK((sample_latent(1, 16, 5).front().z != sample_latent(1, 16, 6).front().z));
    CHECK_THROWS_AS(sample_latent(0, 16, 5), InvalidInput);

    const auto codes = sample_latent(10000, 128, 11);
    double sum = 0.0, sq = 0.0;
    for (const auto& c : codes)
        for (float v : c.z) {
            sum += v;
            sq += static_cast<double>(v) * v;
        }
    const double n = 10000.0 * 128.0;
    const double mean = sum / n;
    CHECK(std::abs(mean) <= 0.05);
    CHECK(std::abs(sq / n - mean * mean - 1.0) <= 0.05);
}

TEST_CASE("spec validation") {
    auto s = tiny_spec();
    s.output_resolution = 256;
    CHECK_THROWS_AS(s.validate(), InvalidInput);
    s = tiny_spec();
    s.latent_dim = 1;
    CHECK_THROWS_AS(s.validate(), InvalidInput);
    s = tiny_spec();
    s.growth_schedule = {{8, 10, 10}, {16, 10, 10}};
    CHECK_THROWS_AS(s.validate(), InvalidInput);  // must end at 32
    s.growth_schedule.push_back({32, 10, 10});
    CHECK_NOTHROW(s.validate());
    CHECK(parse_architecture(to_string(Architecture::mapped)) == Architecture::mapped);
    CHECK_THROWS_AS(parse_architecture("stylegan9"), InvalidInput);
}

TEST_CASE("generate: range, shape and determinism for every architecture") {
    for (auto arch : {Architecture::dcgan, Architecture::resnet, Architecture::mapped}) {
        CAPTURE(to_string(arch));
        torch::manual_seed(1);
        Generator G(tiny_spec(arch));
        auto codes = sample_latent(64, 8, 3);
        if (arch == Architecture::mapped)
            for (std::size_t i = 0; i < codes.size(); ++i) codes[i].noise_maps = sample_noise_maps(G->spec(), 100 + i);
        const auto a = generate(G, codes);
        CHECK(a.sizes() == torch::IntArrayRef({64, 3, 32, 32}));
        CHECK(a.min().item<float>() >= -1.0f);
        CHECK(a.max().item<float>() <= 1.0f);
        CHECK(same_bytes(a, generate(G, codes)));

        // Extreme codes still land inside the tanh range.
        auto big = sample_latent(4, 8, 9);
        for (auto& c : big)
            for (auto& v : c.z) v *= 1000.0f;
        if (arch == Architecture::mapped)
            for (auto& c : big) c.noise_maps = sample_noise_maps(G->spec(), 1);
        const auto b = generate(G, big);
        CHECK(b.abs().max().item<float>() <= 1.0f);
    }
}

TEST_CASE("generate rejects mismatched codes") {
    torch::manual_seed(1);
    Generator G(tiny_spec());
    CHECK_THROWS_AS(generate(G, sample_latent(2, 9, 1)), InvalidInput);
    auto codes = sample_latent(2, 8, 1);
    codes[1].z.pop_back();
    CHECK_THROWS_AS(generate(G, codes), InvalidInput);
}

TEST_CASE("latent batches round-trip") {
    const auto spec = tiny_spec(Architecture::mapped);
    auto codes = sample_latent(3, 8, 2);
    for (auto& c : codes) {
        c.w = std::vector<float>(8, 0.25f);
        c.noise_maps = sample_noise_maps(spec, 4);
    }
    CHECK((from_batch(to_batch(codes)) == codes));
    CHECK(sample_noise_maps(spec, 4).size() == spec.levels().size());
}

TEST_CASE("critic_features") {
    torch::manual_seed(2);
    Critic D(tiny_spec());
    const auto x = texture_tiles(5, 32, 1);
    const auto f = critic_features(D, x);
    CHECK(f.sizes() == torch::IntArrayRef({5, D->feature_width()}));
    CHECK(same_bytes(critic_features(D, x), f));
    CHECK(same_bytes(critic_features(D, torch::cat({x[0].unsqueeze(0), x[0].unsqueeze(0)}))[0],
                critic_features(D, torch::cat({x[0].unsqueeze(0), x[0].unsqueeze(0)}))[1]));
    torch::manual_seed(3);
    const auto noisy = x + 0.1 * torch::randn_like(x);
    CHECK((critic_features(D, noisy) - f).abs().max().item<float>() > 0.0f);
    CHECK_THROWS_AS(critic_features(D, texture_tiles(2, 16, 1)), InvalidInput);
}

TEST_CASE("gradient penalty analytics") {
    const auto real = texture_tiles(4, 32, 1);
    const auto fake = texture_tiles(4, 32, 2);
    const CriticFn constant = [](const torch::Tensor& x) { return torch::full({x.size(0)}, 3.0); };
    CHECK(gradient_penalty(constant, real, fake, 7).item<double>() == 1.0);

    const CriticFn linear = [](const torch::Tensor& x) { return x.flatten(1).sum(1); };
    const double expected = std::pow(std::sqrt(3.0 * 32 * 32) - 1.0, 2);
    CHECK(gradient_penalty(linear, real, fake, 7).item<double>() == doctest::Approx(expected).epsilon(1e-12));

    torch::manual_seed(4);
    Critic D(tiny_spec());
    const auto p = gradient_penalty(D, real, fake, 7);
    CHECK(p.item<double>() >= 0.0);
    CHECK(p.requires_grad());
    CHECK(p.item<double>() == gradient_penalty(D, real, fake, 7).item<double>());
    CHECK_THROWS_AS(gradient_penalty(linear, real, texture_tiles(3, 32, 2), 7), InvalidInput);
}

TEST_CASE("fade_blend") {
    torch::manual_seed(5);
    const auto low = torch::rand({2, 3, 8, 8});
    const auto full = torch::rand({2, 3, 16, 16});
    const auto up = low.repeat_interleave(2, 2).repeat_interleave(2, 3);
    CHECK(same_bytes(fade_blend(low, full, 0.0), up));
    CHECK(same_bytes(fade_blend(low, full, 1.0), full));
    CHECK(torch::allclose(fade_blend(low, full, 0.5), (up + full) / 2, 0.0, 1e-7));
    CHECK_THROWS_AS(fade_blend(low, full, 1.5), InvalidInput);
    CHECK_THROWS_AS(fade_blend(torch::rand({2, 3, 6, 6}), full, 0.5), InvalidInput);
    CHECK_THROWS_AS(fade_blend(torch::rand({1, 3, 8, 8}), full, 0.5), InvalidInput);
}

TEST_CASE("growth schedule arithmetic") {
    const GrowthSchedule s({{8, 0, 100}, {16, 200, 100}, {32, 400, 50}}, 32);
    CHECK(s.stage_at(0).resolution == 8);
    CHECK(s.stage_at(0).fade_alpha == 1.0);
    CHECK(s.phase_start(1) == 100);
    CHECK(s.stage_at(100).resolution == 16);
    CHECK(s.stage_at(100).fade_alpha == 0.0);
    CHECK(s.stage_at(200).fade_alpha == 0.5);
    CHECK(s.stage_at(300).fade_alpha == 1.0);
    CHECK(s.stage_at(399).fade_alpha == 1.0);
    CHECK(s.stage_at(400).resolution == 32);
    CHECK(s.stage_at(400).fade_alpha == 0.0);
    CHECK(s.stage_at(10000).resolution == 32);
    CHECK(s.stage_at(10000).fade_alpha == 1.0);

    double previous = -1.0;
    int previous_res = 0;
    std::size_t phase = 0;
    for (std::int64_t i = 0; i < 1000; i += 7) {
        const auto st = s.stage_at(i);
        CHECK(st.resolution >= previous_res);
        if (st.phase == phase) CHECK(st.fade_alpha >= previous);
        previous = st.fade_alpha;
        previous_res = st.resolution;
        phase = st.phase;
    }
}

TEST_CASE("growing networks blend adjacent levels") {
    auto spec = tiny_spec();
    spec.growth_schedule = {{16, 0, 64}, {32, 64, 64}};
    torch::manual_seed(6);
    Generator G(spec);
    const auto batch = to_batch(sample_latent(2, 8, 1));
    const auto low = G->synthesize(batch, 16, 1.0);
    const auto high = G->synthesize(batch, 32, 1.0);
    CHECK(torch::allclose(G->synthesize(batch, 32, 0.0), fade_blend(low, high, 0.0), 0.0, 1e-6));
    CHECK(torch::allclose(G->synthesize(batch, 32, 0.3), fade_blend(low, high, 0.3), 0.0, 1e-6));
    CHECK(G->active_resolution() == 16);
    CHECK(G->forward(batch).size(2) == 32);
}

TEST_CASE("train_gan: smoke, checkpoints and loss decomposition") {
    log::set_level(log::Level::warn);
    const auto dir = scratch("smoke");
    const auto tiles = texture_tiles(64, 32, 3);
    TrainHyperparams h;
    h.batch_size = 16;
    h.generator_steps = 2;  // 2 x 5 critic steps x 16 = 160 images, 2.5 epochs
    h.checkpoint_every_images = 80;
    h.seed = 4;
    TrainOptions opt;
    opt.checkpoint_dir = dir;
    const auto state = train_gan(tiles, tiny_spec(), Objective::wasserstein_gp, h, opt);
    CHECK(state.step == 2);
    CHECK(state.images_seen == 160);
    CHECK(state.checkpoints.size() >= 2);
    CHECK(fs::exists(dir / "final.ckpt"));
    CHECK(fs::exists(dir / "train_log.tsv"));
    for (const auto& r : state.losses) {
        CHECK(r.penalty >= 0.0);
        CHECK(std::abs(r.critic_fake - r.critic_real + h.gp_lambda * r.penalty - r.critic_loss) <= 1e-6);
    }
    CHECK(state.fade_alpha == 1.0);
}

TEST_CASE("train_gan rejects empty or mismatched data") {
    TrainHyperparams h;
    h.generator_steps = 1;
    CHECK_THROWS_AS(train_gan(torch::empty({0, 3, 32, 32}), tiny_spec(), Objective::nonsaturating, h), InvalidInput);
    CHECK_THROWS_AS(train_gan(texture_tiles(4, 16, 1), tiny_spec(), Objective::nonsaturating, h), InvalidInput);
    CHECK(parse_objective("wgan-gp") == Objective::wasserstein_gp);
    CHECK(h.effective_critic_steps(Objective::wasserstein_gp) == 5);
    CHECK(h.effective_critic_steps(Objective::nonsaturating) == 1);
}

TEST_CASE("non-finite loss aborts with a diagnostic checkpoint") {
    const auto dir = scratch("nan");
    TrainHyperparams h;
    h.batch_size = 4;
    h.generator_steps = 1;
    TrainOptions opt;
    opt.checkpoint_dir = dir;
    auto tiles = texture_tiles(8, 32, 1);
    tiles[0][0][0][0] = std::numeric_limits<float>::quiet_NaN();
    h.flips = false;
    h.batch_size = 8;
    CHECK_THROWS_AS(train_gan(tiles, tiny_spec(), Objective::nonsaturating, h, opt), NumericalError);
    CHECK(fs::exists(dir / "diagnostic.ckpt"));
}

TEST_CASE("checkpoint round-trip and exact resume") {
    log::set_level(log::Level::warn);
    const auto dir = scratch("resume");
    auto spec = tiny_spec(Architecture::mapped);
    spec.growth_schedule = {{16, 0, 32}, {32, 32, 32}};
    const auto tiles = texture_tiles(24, 32, 8);
    TrainHyperparams h;
    h.batch_size = 8;
    h.generator_steps = 3;
    h.seed = 12;

    auto full = TrainState::create(spec, Objective::nonsaturating, h);
    train_gan(full, tiles);

    h.generator_steps = 2;
    auto half = TrainState::create(spec, Objective::nonsaturating, h);
    train_gan(half, tiles);
    save_checkpoint(half, dir / "half.ckpt");
    auto resumed = load_checkpoint(dir / "half.ckpt");
    CHECK(parameters_digest(*resumed.generator) == parameters_digest(*half.generator));
    CHECK(parameters_digest(*resumed.critic) == parameters_digest(*half.critic));
    CHECK(resumed.losses.size() == half.losses.size());
    CHECK(resumed.losses.back().critic_loss == half.losses.back().critic_loss);
    CHECK(resumed.fade_alpha == half.fade_alpha);

    auto codes = sample_latent(4, 8, 1);
    for (auto& c : codes) c.noise_maps = sample_noise_maps(spec, 2);
    half.generator->eval();
    CHECK(same_bytes(generate(half.generator, codes), generate(resumed.generator, codes)));

    resumed.hyper.generator_steps = 3;
    train_gan(resumed, tiles);
    CHECK(resumed.images_seen == full.images_seen);
    CHECK(parameters_digest(*resumed.generator) == parameters_digest(*full.generator));
    CHECK(resumed.losses.back().generator_loss == full.losses.back().generator_loss);

    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
}

TEST_CASE("training is deterministic under a fixed seed") {
    log::set_level(log::Level::warn);
    const auto tiles = texture_tiles(16, 32, 2);
    TrainHyperparams h;
    h.batch_size = 8;
    h.generator_steps = 2;
    h.seed = 3;
    const auto a = train_gan(tiles, tiny_spec(Architecture::dcgan), Objective::wasserstein_gp, h);
    const auto b = train_gan(tiles, tiny_spec(Architecture::dcgan), Objective::wasserstein_gp, h);
    CHECK(parameters_digest(*a.generator) == parameters_digest(*b.generator));
    CHECK(a.losses.back().critic_loss == b.losses.back().critic_loss);
}
