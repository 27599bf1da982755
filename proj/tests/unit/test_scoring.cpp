#include "nn_fixtures.hpp"

#include "pathogan/dataset.hpp"
#include "pathogan/error.hpp"
#include "pathogan/log.hpp"
#include "pathogan/scoring.hpp"

using namespace pathogan;

namespace {

TrainState& models() {
    static TrainState s = [] {
        log::set_level(log::Level::warn);
        return fixtures::trained_tiny(8, 20);
    }();
    return s;
}

}  // namespace

TEST_CASE("score is the final inversion loss") {
    auto& m = models();
    torch::manual_seed(3);
    const auto q = torch::rand({3, 32, 32}) * 2 - 1;
    InversionConfig cfg;
    cfg.steps = 15;
    const auto inv = invert_iterative(q, m.generator, m.critic, cfg);
    CHECK(anomaly_score(q, inv, cfg.lambda_disc, m.critic) == inv.final.total);

    const auto a = analyze(q, inv, cfg.lambda_disc, m.critic, FixedThreshold{0.05});
    CHECK(a.score == inv.final.total);
    CHECK(a.residual_map.height == 32);
    for (std::size_t i = 0; i < a.residual_map.values.size(); ++i) {
        const bool expect = a.residual_map.values[i] >= 0.05;
        CHECK(static_cast<bool>(a.mask.data[i]) == expect);
    }
    CHECK(a.threshold == 0.05);
    CHECK(std::abs(a.residual_map.mean() - inv.final.residual) <= 1e-6);
}

TEST_CASE("perfect reconstruction scores zero and perturbations raise the score") {
    auto& m = models();
    const auto code = sample_latent(1, 8, 12).front();
    const auto x = generate(m.generator, {code})[0];
    InversionResult inv;
    inv.code = code;
    inv.reconstruction = x;
    CHECK(anomaly_score(x, inv, 0.1, m.critic) == 0.0);

    torch::manual_seed(5);
    const auto direction = torch::randn({3, 32, 32});
    double previous = 0.0;
    for (double amp : {0.01, 0.05, 0.2, 0.5}) {
        const auto score = anomaly_score((x + amp * direction).clamp(-1, 1), inv, 0.1, m.critic);
        CHECK(score > previous);
        previous = score;
    }
}

TEST_CASE("invert_images chunking does not change results") {
    auto& m = models();
    torch::manual_seed(6);
    const auto images = torch::rand({5, 3, 32, 32}) * 2 - 1;
    InversionConfig cfg;
    cfg.steps = 10;
    const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    const auto whole = invert_images(images, m.generator, m.critic, cfg, nullptr, seeds, 5);
    const auto split = invert_images(images, m.generator, m.critic, cfg, nullptr, seeds, 2);
    for (int i = 0; i < 5; ++i) CHECK(whole[i].final.total == doctest::Approx(split[i].final.total).epsilon(1e-4));

    cfg.strategy = Strategy::encoder;
    CHECK_THROWS_AS(invert_images(images, m.generator, m.critic, cfg, nullptr, seeds), DependencyError);
}

TEST_CASE("score_manifest writes one row per entry") {
    auto& m = models();
    const auto dir = fixtures::scratch("score_manifest");
    Manifest manifest;
    manifest.seed = 1;
    torch::manual_seed(7);
    for (int i = 0; i < 3; ++i) {
        const auto name = "p" + std::to_string(i) + ".png";
        write_png(dir / name, to_image8(torch::rand({3, 32, 32}) * 2 - 1));
        ManifestEntry e;
        e.path = name;
        e.slide_id = "s";
        e.col = i;
        e.tissue_fraction = 1.0;
        e.coverage = CoverageClass::high;
        e.label = i == 2 ? PatchLabel::tumor : PatchLabel::normal;
        manifest.entries.push_back(e);
    }
    write_manifest(dir / "manifest.tsv", manifest);
    InversionConfig cfg;
    cfg.steps = 5;
    const auto rows = score_manifest(dir / "manifest.tsv", m.generator, m.critic, cfg, nullptr);
    REQUIRE(rows.size() == 3);
    CHECK(rows[2].label == PatchLabel::tumor);
    CHECK(rows[0].path == "p0.png");
    const auto again = score_manifest(dir / "manifest.tsv", m.generator, m.critic, cfg, nullptr);
    CHECK((rows == again));
}
