// Desk-scale acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.
#include <torch/torch.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "pathogan/anomaly.hpp"
#include "pathogan/classifier.hpp"
#include "pathogan/dataset.hpp"
#include "pathogan/fid.hpp"
#include "pathogan/frechet.hpp"
#include "pathogan/generative.hpp"
#include "pathogan/inversion.hpp"
#include "pathogan/log.hpp"
#include "pathogan/preprocess.hpp"
#include "pathogan/rng.hpp"
#include "pathogan/scoring.hpp"
#include "pathogan/synthetic_corpus.hpp"
#include "pathogan/tensor_utils.hpp"
#include "pathogan/tiling.hpp"

using namespace pathogan;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

void note(const std::string& text) { std::cout << "  .. " << text << std::endl; }

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    return s.str();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

// ---------------------------------------------------------------------------
// Shared desk-scale fixture: one synthetic corpus, a slide-disjoint labeled
// split, a normal-only GAN training set and a patch classifier.

struct Fixture {
    torch::Tensor normal_train;  // GAN training tiles, 64x64
    torch::Tensor tumor_train;
    LabeledImages cls_train, cls_val, test;
    std::optional<ClassifierModel> classifier;
    std::optional<TrainState> g32;
    std::optional<TrainState> g64_long, g64_short, g64_tumor;
};

constexpr std::uint64_t kSeed = 7;

std::vector<PatchRecord> corpus_tiles() {
    CorpusSpec spec;  // 16 slides of 1024 x 1024, 20% tumor area
    spec.seed = kSeed;
    TilingConfig cfg;  // 64 x 64 tiles, stride 64
    std::vector<PatchRecord> out;
    for (int i = 0; i < spec.n_slides; ++i) {
        const auto s = generate_slide(spec, i);
        for (auto& p : tile_slide({s.pixels, std::nullopt, s.slide_id}, s.tumor, cfg))
            if (p.coverage == CoverageClass::high) out.push_back(std::move(p));
    }
    return out;
}

LabeledImages gather(const std::vector<PatchRecord>& tiles, const std::vector<ManifestEntry>& entries) {
    LabeledImages out;
    std::vector<torch::Tensor> images;
    for (const auto& e : entries) {
        images.push_back(to_tensor(tiles[std::stoul(e.path)].pixels));
        out.labels.push_back(*e.label == PatchLabel::tumor ? 1 : 0);
    }
    out.images = torch::stack(images);
    return out;
}

Fixture& fixture() {
    static Fixture f = [] {
        const auto start = Clock::now();
        Fixture fx;
        const auto tiles = corpus_tiles();
        Manifest all;
        for (std::size_t i = 0; i < tiles.size(); ++i) {
            const auto& p = tiles[i];
            all.entries.push_back({std::to_string(i), p.slide_id, p.row, p.col, p.tissue_fraction, p.coverage, p.label});
        }
        const auto split = build_labeled_split(all, {500, 200, kSeed, false});
        std::set<std::string> test_slides;
        for (const auto& e : split.test.entries) test_slides.insert(e.slide_id);

        std::vector<ManifestEntry> train, val;
        std::map<int, int> seen;
        for (const auto& e : split.train.entries) (seen[*e.label == PatchLabel::tumor]++ % 10 == 9 ? val : train).push_back(e);
        fx.cls_train = gather(tiles, train);
        fx.cls_val = gather(tiles, val);
        fx.test = gather(tiles, split.test.entries);

        // GAN data: every high-coverage tile of the non-test slides.
        std::vector<torch::Tensor> normal, tumor;
        for (const auto& p : tiles)
            if (!test_slides.contains(p.slide_id)) (p.label == PatchLabel::tumor ? tumor : normal).push_back(to_tensor(p.pixels));
        fx.normal_train = torch::stack(normal);
        fx.tumor_train = torch::stack(tumor);
        note("fixture: " + std::to_string(tiles.size()) + " high-coverage tiles; classifier train/val/test " +
             std::to_string(fx.cls_train.size()) + "/" + std::to_string(fx.cls_val.size()) + "/" +
             std::to_string(fx.test.size()) + "; GAN normal/tumor " + std::to_string(normal.size()) + "/" +
             std::to_string(tumor.size()) + " (" + fmt(seconds_since(start), 3) + " s)");
        return fx;
    }();
    return f;
}

const ClassifierModel& classifier() {
    auto& fx = fixture();
    if (!fx.classifier) {
        const auto start = Clock::now();
        ClassifierConfig cfg;
        cfg.seed = kSeed;
        const auto trained = train_classifier(fx.cls_train, fx.cls_val, cfg);
        fx.classifier = trained.model;
        note("classifier: best validation accuracy " + fmt(trained.best_val_accuracy) + " at epoch " +
             std::to_string(trained.best_epoch) + " (" + fmt(seconds_since(start), 3) + " s)");
    }
    return *fx.classifier;
}

TrainState train_dcgan(const torch::Tensor& real, int resolution, int latent, int base, std::int64_t steps,
                       const std::string& name) {
    const auto start = Clock::now();
    GeneratorSpec spec;
    spec.output_resolution = resolution;
    spec.latent_dim = latent;
    spec.base_channels = base;
    spec.architecture = Architecture::dcgan;
    TrainHyperparams h;
    h.generator_steps = steps;
    h.seed = kSeed;
    auto state = train_gan(downsample_to(real, resolution), spec, Objective::wasserstein_gp, h);
    note(name + ": " + std::to_string(steps) + " WGAN-GP steps at " + std::to_string(resolution) + "^2 in " +
         fmt(seconds_since(start), 3) + " s");
    return state;
}

// 32x32 generator shared by the inversion criteria.
TrainState& g32() {
    auto& fx = fixture();
    if (!fx.g32) fx.g32 = train_dcgan(fx.normal_train, 32, 32, 16, 300, "g32");
    return *fx.g32;
}

constexpr std::int64_t kLongSteps = 600;
constexpr std::int64_t kShortSteps = kLongSteps / 10;

TrainState& g64_long() {
    auto& fx = fixture();
    if (!fx.g64_long) fx.g64_long = train_dcgan(fx.normal_train, 64, 128, 8, kLongSteps, "g64 normal (long)");
    return *fx.g64_long;
}

// ---------------------------------------------------------------------------

Outcome fid_oracles() {
    Rng rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto d = static_cast<std::size_t>(1 + rng.below(24));
        FeatureStats a, b;
        a.mean.resize(d);
        b.mean.resize(d);
        a.cov.assign(d * d, 0.0);
        b.cov.assign(d * d, 0.0);
        a.n = b.n = 100;
        double expected = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            a.mean[i] = rng.uniform(-3.0, 3.0);
            b.mean[i] = rng.uniform(-3.0, 3.0);
            const double va = rng.uniform(0.01, 4.0), vb = rng.uniform(0.01, 4.0);
            a.cov[i * d + i] = va;
            b.cov[i * d + i] = vb;
            expected += std::pow(a.mean[i] - b.mean[i], 2) + va + vb - 2.0 * std::sqrt(va * vb);
        }
        worst = std::max(worst, std::abs(frechet_distance(a, b) - expected));
    }
    // Identical statistics of a dense random covariance.
    FeatureMatrix m(200, 8);
    for (auto& v : m.data) v = rng.normal();
    const auto s = gaussian_stats(m);
    const double self = frechet_distance(s, s);
    FeatureStats u{{0.0}, {1.0}, 2}, v{{1.0}, {1.0}, 2};
    const double one_d = frechet_distance(u, v);
    const bool pass = worst <= 1e-6 && std::abs(self) <= 1e-8 && std::abs(one_d - 1.0) <= 1e-8;
    return {pass, "max |diag error| " + fmt(worst, 3) + " over 50 cases; identical " + fmt(self, 3) + "; 1-D " +
                      fmt(one_d, 12)};
}

Outcome gradient_penalty_analytics() {
    const int S = 32;
    torch::manual_seed(3);
    const auto real = torch::rand({8, 3, S, S}) * 2 - 1;
    const auto fake = torch::rand({8, 3, S, S}) * 2 - 1;
    const auto constant = gradient_penalty([](const torch::Tensor& x) { return (x * 0).sum({1, 2, 3}) + 0.5; }, real, fake, 1)
                              .item<double>();
    const auto linear = gradient_penalty([](const torch::Tensor& x) { return x.sum({1, 2, 3}); }, real, fake, 1).item<double>();
    const double expected = std::pow(std::sqrt(3.0 * S * S) - 1.0, 2);
    const bool pass = constant == 1.0 && std::abs(linear - expected) <= 1e-4;
    return {pass, "constant critic " + fmt(constant, 17) + "; linear critic " + fmt(linear, 12) + " vs " + fmt(expected, 12)};
}

InversionConfig recovery_config() {
    InversionConfig cfg;
    cfg.steps = 500;
    cfg.lambda_disc = 0.1;
    cfg.step_size = 0.05;
    cfg.rampdown = 0.25;
    return cfg;
}

double iterative_seconds_per_image = 0.0;

Outcome inversion_recovery() {
    auto& g = g32();
    const auto start = Clock::now();
    const auto codes = sample_latent(20, g.spec.latent_dim, 2024);
    const auto x = generate(g.generator, codes);
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < 20; ++i) seeds.push_back(derive_seed(kSeed, "recovery#" + std::to_string(i)));
    const auto results = invert_iterative_batch(x, g.generator, g.critic, recovery_config(), seeds);
    int recovered = 0;
    double worst = 0.0;
    for (const auto& r : results) {
        const double reduction = 1.0 - r.final.residual / r.initial.residual;
        recovered += reduction >= 0.999;
        worst = std::max(worst, r.final.residual / r.initial.residual);
    }
    return {recovered >= 18, std::to_string(recovered) + "/20 with residual reduced >= 99.9% (worst remaining fraction " +
                                 fmt(worst, 3) + "); inversion " + fmt(seconds_since(start), 3) + " s"};
}

Outcome encoder_speed_and_fidelity() {
    auto& g = g32();
    const auto start = Clock::now();
    GeneratorSource source(g.generator);
    EncoderHyperparams h;
    h.seed = kSeed;
    const auto trained = train_encoder(g.generator, g.critic, source.sample(2000, 11), 1.0, h);
    auto encoder = trained.encoder;
    note("encoder: " + std::to_string(h.steps) + " steps on 2000 generated images in " + fmt(seconds_since(start), 3) + " s");

    const auto held_out = source.sample(200, 12);
    const auto encoded = invert_encoder_batch(held_out, encoder, g.generator, g.critic, 0.1);
    std::vector<double> residuals;
    for (const auto& r : encoded) residuals.push_back(r.final.residual);
    double mean = 0.0;
    for (double r : residuals) mean += r / static_cast<double>(residuals.size());
    std::sort(residuals.begin(), residuals.end());

    // Per-image wall time, one image per call for both strategies.
    auto cfg = recovery_config();
    double iterative = 0.0;
    for (int i = 0; i < 3; ++i) {
        cfg.seed = static_cast<std::uint64_t>(i);
        iterative += invert_iterative(held_out[i], g.generator, g.critic, cfg).wall_time / 3.0;
    }
    const auto t0 = Clock::now();
    for (int i = 0; i < 20; ++i) invert_encoder(held_out[i], encoder, g.generator, g.critic, 0.1);
    const double amortized = seconds_since(t0) / 20.0;
    const double speedup = iterative / amortized;
    return {speedup >= 10.0 && mean <= 1e-2,
            "speedup " + fmt(speedup, 4) + "x (" + fmt(amortized * 1e3, 3) + " ms vs " + fmt(iterative, 3) +
                " s per image); held-out residual mean " + fmt(mean, 3) + ", median " + fmt(residuals[100], 3) +
                ", max " + fmt(residuals.back(), 3)};
}

Outcome synthesis_quality() {
    auto& fx = fixture();
    auto& longer = g64_long();
    if (!fx.g64_short) fx.g64_short = train_dcgan(fx.normal_train, 64, 128, 8, kShortSteps, "g64 normal (short)");
    ClassifierExtractor extractor(classifier());
    constexpr int n = 2000;
    GeneratorSource long_source(longer.generator, "long"), short_source(fx.g64_short->generator, "short");
    UniformNoiseSource noise(64);
    const auto fid_long = fid_report(fx.normal_train, long_source, n, extractor, kSeed).fid;
    const auto fid_short = fid_report(fx.normal_train, short_source, n, extractor, kSeed).fid;
    const auto fid_noise = fid_report(fx.normal_train, noise, n, extractor, kSeed).fid;
    return {fid_long < fid_noise && fid_long <= fid_short,
            "FID long " + fmt(fid_long) + " (" + std::to_string(kLongSteps) + " steps), short " + fmt(fid_short) + " (" +
                std::to_string(kShortSteps) + " steps), noise " + fmt(fid_noise)};
}

Outcome protocol_shape() {
    auto& fx = fixture();
    const auto& model = classifier();
    const double real_accuracy = evaluate_accuracy(model, fx.test).accuracy;
    if (!fx.g64_tumor) fx.g64_tumor = train_dcgan(fx.tumor_train, 64, 128, 8, kLongSteps, "g64 tumor");
    GeneratorSource normal(g64_long().generator, "normal"), tumor(fx.g64_tumor->generator, "tumor");
    const auto r = real_vs_synth_protocol(model, fx.test, normal, tumor, 500, kSeed);
    return {real_accuracy >= 0.95 && std::abs(r.gap) <= 0.05,
            "real accuracy " + fmt(r.real_accuracy) + ", synthetic " + fmt(r.synthetic_accuracy) + " (normal " +
                std::to_string(r.synthetic.confusion[0][0]) + "/500, tumor " + std::to_string(r.synthetic.confusion[1][1]) +
                "/500), gap " + fmt(r.gap)};
}

Outcome anomaly_separability() {
    auto& fx = fixture();
    auto& g = g64_long();
    InversionConfig cfg;  // iterative, 500 steps, lambda 0.1
    cfg.seed = kSeed;
    std::vector<std::uint64_t> seeds;
    for (std::int64_t i = 0; i < fx.test.size(); ++i) seeds.push_back(derive_seed(kSeed, "score#" + std::to_string(i)));
    const auto inv = invert_images(fx.test.images, g.generator, g.critic, cfg, nullptr, seeds);
    std::vector<double> normal, tumor;
    for (std::int64_t i = 0; i < fx.test.size(); ++i)
        (fx.test.labels[i] ? tumor : normal).push_back(anomaly_score(fx.test.images[i], inv[i], cfg.lambda_disc, g.critic));
    const auto report = evaluate_detection(normal, tumor);
    return {report.auc >= 0.8 && normal.size() == 200 && tumor.size() == 200,
            "AUC " + fmt(report.auc) + " over " + std::to_string(normal.size()) + " normal + " +
                std::to_string(tumor.size()) + " tumor; median score normal " + fmt(report.normal.median) + ", tumor " +
                fmt(report.tumor.median)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism(const fs::path& work) {
    const auto dir = work / "determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "run.json") << R"({
      "corpus": {"make": {"n-slides": 8, "size": 512, "tumor-frac": 0.3}},
      "dataset": {"sample": {"per-slide": 20},
                  "split": {"train-per-class": 30, "test-per-class": 10, "val-fraction": 0.2, "allow-overlap": true}},
      "train-gan": {"resolution": 32, "architecture": "dcgan", "latent": 16, "base": 8, "steps": 20, "batch": 8},
      "classify": {"train": {"resolution": 32, "width": 8, "feature-dim": 16, "epochs": 3}},
      "fid": {"n": 100},
      "score": {"steps": 30},
      "report": {"grid": 2, "steps": 10}
    })";
    for (const char* run : {"a", "b"}) {
        const int code = cli::run({"pathogan", "--log-level", "error", "--deterministic", "--seed", "11", "--config",
                                   (dir / "run.json").string(), "pipeline", "--out", (dir / run).string()});
        if (code != 0) return {false, std::string("pipeline run ") + run + " exited with " + std::to_string(code)};
    }
    int identical = 0, total = 0;
    std::string differing;
    for (const char* f : {"fid/fid.json", "fid/fid_noise.json", "score/scores.tsv", "classifier/accuracy.json",
                          "classifier/protocol.json", "report/report.json", "gan/train_log.tsv", "dataset/test.tsv"}) {
        ++total;
        const auto a = slurp(dir / "a" / f), b = slurp(dir / "b" / f);
        if (!a.empty() && a == b) ++identical;
        else differing += std::string(" ") + f;
    }
    return {identical == total, std::to_string(identical) + "/" + std::to_string(total) + " metric files identical across reruns" +
                                    (differing.empty() ? "" : "; differing:" + differing)};
}

Outcome preprocessing_arithmetic() {
    Rng rng(909);
    int checked_patches = 0;
    std::string failure;
    const CoverageThresholds thresholds;
    for (int trial = 0; trial < 100 && failure.empty(); ++trial) {
        const int h = 128 + static_cast<int>(rng.below(300)), w = 128 + static_cast<int>(rng.below(300));
        const int size = std::array{64, 128}[rng.below(2)];
        const int stride = size / static_cast<int>(1 + rng.below(2));
        Mask mask(h, w);
        // Random rectangles plus salt noise.
        for (int k = 0, n = static_cast<int>(rng.below(6)); k < n; ++k) {
            const int r0 = static_cast<int>(rng.below(h)), c0 = static_cast<int>(rng.below(w));
            const int r1 = std::min(h, r0 + 1 + static_cast<int>(rng.below(240)));
            const int c1 = std::min(w, c0 + 1 + static_cast<int>(rng.below(240)));
            for (int r = r0; r < r1; ++r)
                for (int c = c0; c < c1; ++c) mask.at(r, c) = 1;
        }
        for (auto& v : mask.data)
            if (rng.uniform() < 0.05) v = 1 - v;
        const SlideRaster slide{Image8(h, w, 3, 128), std::nullopt, "m" + std::to_string(trial)};
        const auto patches = extract_patches(slide, TissueMask{mask, {}}, size, stride, thresholds);
        const auto expected_count =
            static_cast<std::size_t>(((h - size) / stride + 1) * ((w - size) / stride + 1));
        if (patches.size() != expected_count) failure = "patch count " + std::to_string(patches.size()) + " != " + std::to_string(expected_count);
        for (const auto& p : patches) {
            std::size_t set = 0;
            for (int r = p.row; r < p.row + size; ++r)
                for (int c = p.col; c < p.col + size; ++c) set += mask.at(r, c);
            const double fraction = static_cast<double>(set) / (static_cast<double>(size) * size);
            const auto expected_class = fraction >= 0.9 ? CoverageClass::high
                                        : fraction <= 0.1 ? CoverageClass::low
                                                          : CoverageClass::mid;
            if (p.tissue_fraction != fraction) failure = "tissue fraction mismatch in " + slide.slide_id;
            if (p.coverage != expected_class) failure = "coverage class mismatch in " + slide.slide_id;
            ++checked_patches;
        }
    }
    const bool boundaries = classify_coverage(0.9) == CoverageClass::high && classify_coverage(0.1) == CoverageClass::low &&
                            classify_coverage(std::nextafter(0.9, 0.0)) == CoverageClass::mid &&
                            classify_coverage(std::nextafter(0.1, 1.0)) == CoverageClass::mid;
    return {failure.empty() && boundaries,
            failure.empty() ? std::to_string(checked_patches) + " patches over 100 random masks match brute-force counts; "
                                  "thresholds 0.9/0.1 inclusive"
                            : failure};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pathogan acceptance suite"};
    std::vector<int> only;
    std::string work = (fs::temp_directory_path() / "pathogan_acceptance").string();
    std::string json_out;
    app.add_option("--only", only, "run only these criteria");
    app.add_option("--work", work, "scratch directory")->capture_default_str();
    app.add_option("--json", json_out, "also write results as JSON");
    CLI11_PARSE(app, argc, argv);

    log::set_level(log::Level::warn);
    configure_determinism(true);
    fs::create_directories(work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"FID oracle suite", fid_oracles},
        {"gradient-penalty analytics", gradient_penalty_analytics},
        {"in-range inversion recovery", inversion_recovery},
        {"encoder speedup and fidelity", encoder_speed_and_fidelity},
        {"relative synthesis quality", synthesis_quality},
        {"real-vs-synthetic protocol", protocol_shape},
        {"anomaly separability", anomaly_separability},
        {"determinism", [&] { return determinism(work); }},
        {"preprocessing arithmetic", preprocessing_arithmetic},
    };
    // Wall-clock ceilings, including any model training a criterion triggers.
    const std::map<int, double> ceilings{{1, 10.0}, {2, 30.0}, {3, 600.0}, {5, 7200.0}, {7, 3600.0}};

    int failed = 0;
    nlohmann::json results = nlohmann::json::array();
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        const auto start = Clock::now();
        Outcome outcome;
        try {
            outcome = criteria[i].second();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const double elapsed = seconds_since(start);
        if (ceilings.contains(id) && elapsed >= ceilings.at(id)) {
            outcome.pass = false;
            outcome.detail += "; exceeded " + fmt(ceilings.at(id)) + " s";
        }
        failed += !outcome.pass;
        std::cout << (outcome.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << ": " << outcome.detail
                  << " (" << fmt(elapsed, 3) << " s)" << std::endl;
        results.push_back({{"criterion", id}, {"name", criteria[i].first}, {"pass", outcome.pass},
                           {"detail", outcome.detail}, {"seconds", elapsed}});
    }
    if (!json_out.empty()) std::ofstream(json_out) << results.dump(2) << '\n';
    std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << std::endl;
    return failed == 0 ? 0 : 1;
}
