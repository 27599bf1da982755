#include "stages.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "pathogan/anomaly.hpp"
#include "pathogan/classifier.hpp"
#include "pathogan/dataset.hpp"
#include "pathogan/fid.hpp"
#include "pathogan/generative.hpp"
#include "pathogan/inversion.hpp"
#include "pathogan/log.hpp"
#include "pathogan/rng.hpp"
#include "pathogan/scoring.hpp"
#include "pathogan/synthetic_corpus.hpp"
#include "pathogan/tensor_utils.hpp"
#include "pathogan/tiling.hpp"
#include "plot.hpp"

namespace pathogan::cli {

namespace {

void require_param(const std::string& value, const std::string& flag, const std::string& stage) {
    if (value.empty()) throw InvalidInput(stage + " needs " + flag);
}

// Entry paths are relative to their manifest; moving a manifest rewrites them.
Manifest rebase(Manifest m, const fs::path& from_manifest, const fs::path& to_manifest) {
    const auto to_dir = fs::absolute(to_manifest).parent_path();
    for (auto& e : m.entries) {
        const auto abs = fs::absolute(resolve_entry(from_manifest, e)).lexically_normal();
        e.path = abs.lexically_relative(to_dir).generic_string();
    }
    return m;
}

std::string stem_sibling(const fs::path& path, const std::string& suffix) {
    return (path.parent_path() / (path.stem().string() + suffix)).string();
}

InversionConfig inversion_config(const InversionParams& p, std::uint64_t seed) {
    InversionConfig cfg;
    cfg.strategy = parse_strategy(p.strategy);
    cfg.steps = p.steps;
    cfg.lambda_disc = p.lambda;
    cfg.step_size = p.step_size;
    cfg.rampdown = p.rampdown;
    cfg.optimize_noise = !p.fixed_noise;
    cfg.seed = seed;
    cfg.validate();
    return cfg;
}

struct LoadedModels {
    TrainState state;
    std::optional<Encoder> encoder;
    Encoder* encoder_ptr() { return encoder ? &*encoder : nullptr; }
};

LoadedModels load_models(const InversionParams& p) {
    require_param(p.ckpt, "--ckpt", "inversion");
    require_artifact(p.ckpt, "train-gan");
    LoadedModels m{load_checkpoint(p.ckpt), std::nullopt};
    if (parse_strategy(p.strategy) == Strategy::encoder) {
        if (p.encoder.empty()) throw DependencyError("the encoder strategy needs --encoder; run the 'train-encoder' stage first");
        require_artifact(p.encoder, "train-encoder");
        m.encoder = load_encoder(p.encoder);
    }
    return m;
}

json summary_json(const ScoreSummary& s) {
    return {{"count", s.count}, {"mean", s.mean}, {"median", s.median}, {"min", s.min}, {"max", s.max}};
}

json accuracy_json(const AccuracyReport& r) {
    return {{"accuracy", r.accuracy},
            {"total", r.total},
            {"classes", {kClassOrder[0], kClassOrder[1]}},
            {"confusion", {{r.confusion[0][0], r.confusion[0][1]}, {r.confusion[1][0], r.confusion[1][1]}}}};
}

std::string weights_id(const std::string& kind, const torch::nn::Module& module) {
    return kind + "@" + hash_hex(parameters_digest(module));
}

void log_progress(const LossRecord& r) {
    if (r.step % 50 == 0)
        log::info("step " + std::to_string(r.step) + " res " + std::to_string(r.resolution) + " critic " +
                  std::to_string(r.critic_loss) + " generator " + std::to_string(r.generator_loss));
}

}  // namespace

void run_corpus(const RunContext& ctx, const CorpusParams& p) {
    CorpusSpec spec;
    spec.n_slides = p.n_slides;
    spec.slide_size = p.size;
    spec.tumor_region_fraction = p.tumor_frac;
    spec.seed = ctx.seed;
    spec.validate();
    const fs::path index = fs::path(p.out) / "corpus.tsv";
    prepare_output(ctx, index);
    generate_corpus(spec, p.out);
    write_provenance(ctx, index, "corpus", p, {});
}

void run_preprocess(const RunContext& ctx, const PreprocessParams& p) {
    require_param(p.slides, "--slides", "preprocess");
    require_artifact(p.slides, "corpus");
    TilingConfig cfg;
    cfg.size = p.size;
    cfg.stride = p.stride;
    cfg.min_tissue_fraction = p.min_tissue;
    cfg.filter.min_saturation = static_cast<float>(p.min_saturation);
    cfg.filter.max_green = p.max_green;
    cfg.filter.closing_radius = p.closing_radius;
    cfg.filter.min_object_area = p.min_object_area;
    cfg.coverage = {p.high, p.low};
    cfg.tumor_threshold = p.tumor_threshold;
    std::optional<fs::path> masks;
    if (!p.masks.empty()) {
        require_artifact(p.masks, "corpus");
        masks = p.masks;
    }
    const fs::path manifest = fs::path(p.out) / "manifest.tsv";
    prepare_output(ctx, manifest);
    const auto m = tile_directory(p.slides, masks, p.out, cfg, ctx.seed);
    log::info("preprocess: " + std::to_string(m.entries.size()) + " tiles");
    std::vector<fs::path> inputs{p.slides};
    if (masks) inputs.push_back(*masks);
    write_provenance(ctx, manifest, "preprocess", p, inputs);
}

void run_sample(const RunContext& ctx, const SampleParams& p) {
    require_param(p.manifest, "--manifest", "dataset sample");
    require_artifact(p.manifest, "preprocess");
    SamplingConfig cfg{p.per_slide, p.min_coverage, p.size, ctx.seed};
    // Slides carry both classes; only their normal tiles feed the GAN.
    auto m = read_manifest(p.manifest);
    const auto before = m.entries.size();
    std::erase_if(m.entries, [](const ManifestEntry& e) { return e.label == PatchLabel::tumor; });
    if (m.entries.size() != before)
        log::info("dataset sample: dropped " + std::to_string(before - m.entries.size()) + " tumor tiles");
    const auto outcome = sample_normal_training_set(m, cfg);
    for (const auto& w : outcome.warnings) log::warn(w);
    prepare_output(ctx, p.out);
    write_manifest(p.out, rebase(outcome.manifest, p.manifest, p.out));
    log::info("sampled " + std::to_string(outcome.manifest.entries.size()) + " normal tiles");
    write_provenance(ctx, p.out, "dataset-sample", p, {p.manifest});
}

void run_split(const RunContext& ctx, const SplitParams& p) {
    require_param(p.manifest, "--manifest", "dataset split");
    require_artifact(p.manifest, "preprocess");
    require(p.val_fraction >= 0.0 && p.val_fraction < 1.0, "val-fraction must lie in [0, 1)");
    SplitConfig cfg{p.train_per_class, p.test_per_class, ctx.seed, p.allow_overlap};
    auto labeled = read_manifest(p.manifest);
    std::erase_if(labeled.entries, [&](const ManifestEntry& e) { return e.tissue_fraction < p.min_coverage; });
    const auto split = build_labeled_split(labeled, cfg);

    // The validation set is the tail of each class in the (shuffled) training list.
    Manifest train = split.train, val = split.train;
    train.entries.clear();
    val.entries.clear();
    for (auto label : {PatchLabel::normal, PatchLabel::tumor}) {
        std::vector<ManifestEntry> of_class;
        for (const auto& e : split.train.entries)
            if (e.label == label) of_class.push_back(e);
        const auto n_val = static_cast<std::size_t>(p.val_fraction * static_cast<double>(of_class.size()));
        const auto cut = of_class.size() - n_val;
        train.entries.insert(train.entries.end(), of_class.begin(), of_class.begin() + static_cast<std::ptrdiff_t>(cut));
        val.entries.insert(val.entries.end(), of_class.begin() + static_cast<std::ptrdiff_t>(cut), of_class.end());
    }
    const fs::path dir = p.out;
    std::vector<std::pair<fs::path, const Manifest*>> outputs{{dir / "train.tsv", &train}, {dir / "test.tsv", &split.test}};
    if (p.val_fraction > 0.0) outputs.emplace_back(dir / "val.tsv", &val);
    for (const auto& [path, m] : outputs) prepare_output(ctx, path);
    for (const auto& [path, m] : outputs) {
        write_manifest(path, rebase(*m, p.manifest, path));
        write_provenance(ctx, path, "dataset-split", p, {p.manifest});
    }
    log::info("split: " + std::to_string(train.entries.size()) + " train, " + std::to_string(val.entries.size()) +
              " val, " + std::to_string(split.test.entries.size()) + " test");
}

void run_train_gan(const RunContext& ctx, const TrainGanParams& p) {
    require_param(p.manifest, "--manifest", "train-gan");
    require_artifact(p.manifest, "dataset");
    require(p.label == "normal" || p.label == "tumor" || p.label == "any", "label must be normal, tumor or any");
    auto m = read_manifest(p.manifest);
    if (p.label != "any") {
        const auto want = parse_label(p.label);
        // Unlabeled tiles count as normal training data.
        std::erase_if(m.entries, [&](const ManifestEntry& e) { return e.label.value_or(PatchLabel::normal) != want; });
    }
    if (m.entries.empty()) throw InvalidInput("no " + p.label + " tiles in " + p.manifest);
    validate_manifest(m, fs::path(p.manifest).parent_path());
    const auto images = downsample_to(load_manifest_images(p.manifest, m), p.resolution);

    GeneratorSpec spec;
    spec.output_resolution = p.resolution;
    spec.latent_dim = p.latent;
    spec.base_channels = p.base;
    spec.critic_feature_width = p.feature_width;
    spec.architecture = parse_architecture(p.architecture);
    if (p.growth_images > 0)
        for (int r = 8; r <= p.resolution; r *= 2) spec.growth_schedule.push_back({r, p.growth_images, p.growth_images});
    TrainHyperparams h;
    h.learning_rate = p.lr;
    h.batch_size = p.batch;
    h.gp_lambda = p.gp_lambda;
    h.critic_steps = p.critic_steps;
    h.generator_steps = p.steps;
    h.checkpoint_every_images = p.checkpoint_every;
    h.flips = !p.no_flips;
    h.seed = ctx.seed;

    const fs::path dir = p.out;
    prepare_output(ctx, dir / "final.ckpt");
    log::info("train-gan: " + std::to_string(images.size(0)) + " " + p.label + " tiles at " +
              std::to_string(p.resolution));
    const auto state = train_gan(images, spec, parse_objective(p.objective), h, {dir, log_progress});
    write_provenance(ctx, dir / "final.ckpt", "train-gan", p, {p.manifest});
    write_provenance(ctx, dir / "train_log.tsv", "train-gan", p, {p.manifest});
}

void run_train_encoder(const RunContext& ctx, const TrainEncoderParams& p) {
    require_param(p.ckpt, "--ckpt", "train-encoder");
    require_artifact(p.ckpt, "train-gan");
    auto state = load_checkpoint(p.ckpt);
    EncoderHyperparams h;
    h.learning_rate = p.lr;
    h.batch_size = p.batch;
    h.steps = p.steps;
    h.base_channels = p.base;
    h.seed = ctx.seed;
    prepare_output(ctx, p.out);
    std::vector<fs::path> inputs{p.ckpt};
    EncoderTraining trained;
    if (p.generated > 0) {
        GeneratorSource source(state.generator);
        trained = train_encoder(state.generator, state.critic, source.sample(p.generated, derive_seed(ctx.seed, "encoder-data")),
                                p.kappa, h);
    } else {
        require_param(p.manifest, "--manifest or --generated", "train-encoder");
        require_artifact(p.manifest, "dataset");
        inputs.push_back(p.manifest);
        trained = train_encoder(state.generator, state.critic, fs::path(p.manifest), p.kappa, h);
    }
    save_encoder(trained.encoder, p.out);
    std::ostringstream log_text;
    log_text.precision(17);
    log_text << "step\tpixel\tfeature\ttotal\n";
    for (const auto& r : trained.losses) log_text << r.step << '\t' << r.pixel << '\t' << r.feature << '\t' << r.total << '\n';
    const auto log_path = stem_sibling(p.out, "_log.tsv");
    write_text(log_path, log_text.str());
    write_provenance(ctx, p.out, "train-encoder", p, inputs);
}

void run_fid(const RunContext& ctx, const FidParams& p) {
    require_param(p.real, "--real", "fid");
    require_artifact(p.real, "dataset");
    const auto real_manifest = read_manifest(p.real);
    require(!real_manifest.entries.empty(), "real manifest is empty");
    validate_manifest(real_manifest, fs::path(p.real).parent_path());
    const auto real = load_manifest_images(p.real, real_manifest);
    std::vector<fs::path> inputs{p.real};

    std::unique_ptr<ImageSource> source;
    if (p.noise) {
        source = std::make_unique<UniformNoiseSource>(static_cast<int>(real.size(2)));
    } else {
        require_param(p.ckpt, "--ckpt (or --noise)", "fid");
        require_artifact(p.ckpt, "train-gan");
        auto state = load_checkpoint(p.ckpt);
        source = std::make_unique<GeneratorSource>(state.generator, weights_id("generator", *state.generator));
        inputs.push_back(p.ckpt);
    }
    std::unique_ptr<FeatureExtractor> extractor;
    if (p.extractor == "small-clf") {
        if (p.classifier.empty())
            throw DependencyError("the small-clf extractor needs --classifier; run the 'classify-train' stage first");
        require_artifact(p.classifier, "classify-train");
        extractor = std::make_unique<ClassifierExtractor>(load_classifier(p.classifier));
        inputs.push_back(p.classifier);
    } else if (p.extractor == "identity") {
        extractor = std::make_unique<IdentityExtractor>(p.identity_resolution);
    } else {
        throw InvalidInput("unknown extractor '" + p.extractor + "' (expected small-clf or identity)");
    }
    prepare_output(ctx, p.out);
    const auto report = fid_report(real, *source, p.n, *extractor, ctx.seed);
    write_text(p.out, report.to_json());
    log::info("fid " + source->describe() + ": " + std::to_string(report.fid));
    write_provenance(ctx, p.out, "fid", p, inputs);
}

void run_invert(const RunContext& ctx, const InvertParams& p) {
    require_param(p.image, "--image", "invert");
    if (!fs::exists(p.image)) throw IoError("query image not found: " + p.image);
    auto models = load_models(p.inversion);
    const auto cfg = inversion_config(p.inversion, ctx.seed);
    const int res = models.state.spec.output_resolution;
    auto x = to_tensor(read_png(p.image));
    if (x.size(1) != res) x = resize_bilinear(x.unsqueeze(0), res)[0];

    const fs::path dir = p.out;
    for (const char* name : {"reconstruction.png", "code.json", "trace.tsv", "result.json"}) prepare_output(ctx, dir / name);
    InversionResult r;
    switch (cfg.strategy) {
        case Strategy::iterative: r = invert_iterative(x, models.state.generator, models.state.critic, cfg); break;
        case Strategy::encoder:
            r = invert_encoder(x, *models.encoder, models.state.generator, models.state.critic, cfg.lambda_disc);
            break;
        case Strategy::perceptual: r = invert_perceptual(x, models.state.generator, cfg); break;
    }
    write_png(dir / "reconstruction.png", to_image8(r.reconstruction));

    json code = {{"z", r.code.z}};
    if (r.code.w) code["w"] = *r.code.w;
    json noise = json::array();
    for (const auto& n : r.code.noise_maps) noise.push_back({{"size", n.size}, {"values", n.values}});
    code["noise_maps"] = noise;
    write_text(dir / "code.json", code.dump() + "\n");

    std::ostringstream trace;
    trace.precision(17);
    trace << "step\tresidual\tdisc\tregularization\ttotal\tbest_total\n";
    for (const auto& e : r.loss_trace)
        trace << e.step << '\t' << e.residual << '\t' << e.disc << '\t' << e.regularization << '\t' << e.total << '\t'
              << e.best_total << '\n';
    write_text(dir / "trace.tsv", trace.str());

    const json result = {{"strategy", p.inversion.strategy},
                         {"initial", {{"total", r.initial.total}, {"residual", r.initial.residual}, {"disc", r.initial.disc}}},
                         {"final", {{"total", r.final.total}, {"residual", r.final.residual}, {"disc", r.final.disc}}},
                         {"wall_time_s", r.wall_time}};
    write_text(dir / "result.json", result.dump(2) + "\n");
    write_provenance(ctx, dir / "result.json", "invert", p, {p.image, p.inversion.ckpt});
}

void run_score(const RunContext& ctx, const ScoreParams& p) {
    require_param(p.manifest, "--manifest", "score");
    require_artifact(p.manifest, "dataset");
    auto models = load_models(p.inversion);
    const auto cfg = inversion_config(p.inversion, ctx.seed);
    prepare_output(ctx, p.out);
    const auto rows = score_manifest(p.manifest, models.state.generator, models.state.critic, cfg, models.encoder_ptr(),
                                     p.chunk);
    write_scores(p.out, rows);
    log::info("scored " + std::to_string(rows.size()) + " tiles");
    std::vector<fs::path> inputs{p.manifest, p.inversion.ckpt};
    if (models.encoder) inputs.push_back(p.inversion.encoder);
    write_provenance(ctx, p.out, "score", p, inputs);
}

namespace {

std::vector<std::vector<double>> read_loss_columns(const fs::path& path, const std::vector<std::string>& names) {
    std::istringstream in(read_text(path));
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    {
        std::istringstream h(line);
        std::string cell;
        while (std::getline(h, cell, '\t')) header.push_back(cell);
    }
    std::vector<std::size_t> idx;
    for (const auto& n : names) {
        const auto it = std::find(header.begin(), header.end(), n);
        if (it == header.end()) throw InvalidInput("training log lacks column " + n + ": " + path.string());
        idx.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    std::vector<std::vector<double>> out(names.size());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream l(line);
        std::string cell;
        while (std::getline(l, cell, '\t')) cells.push_back(cell);
        for (std::size_t k = 0; k < idx.size(); ++k) out[k].push_back(idx[k] < cells.size() ? std::stod(cells[idx[k]]) : NAN);
    }
    return out;
}

}  // namespace

void run_report(const RunContext& ctx, const ReportParams& p) {
    require_param(p.scores, "--scores", "report");
    require_artifact(p.scores, "score");
    const auto rows = read_scores(p.scores);
    std::size_t n_normal = 0, n_tumor = 0;
    for (const auto& r : rows) {
        n_normal += r.label == PatchLabel::normal;
        n_tumor += r.label == PatchLabel::tumor;
    }
    if (n_normal == 0 || n_tumor == 0)
        throw InvalidInput("report needs labeled scores of both classes; " + p.scores + " has " +
                           std::to_string(n_normal) + " normal and " + std::to_string(n_tumor) + " tumor rows");
    const auto detection = evaluate_scores(rows, p.bins);
    const fs::path dir = p.out;
    std::vector<fs::path> inputs{p.scores};
    prepare_output(ctx, dir / "report.json");
    prepare_output(ctx, dir / "histogram.png");

    json report = {{"auc", detection.auc},
                   {"normal", summary_json(detection.normal)},
                   {"tumor", summary_json(detection.tumor)},
                   {"histogram",
                    {{"lo", detection.histogram.lo},
                     {"hi", detection.histogram.hi},
                     {"normal", detection.histogram.normal},
                     {"tumor", detection.histogram.tumor}}}};
    write_png(dir / "histogram.png", histogram_plot(detection.histogram));

    if (!p.train_log.empty()) {
        require_artifact(p.train_log, "train-gan");
        const auto cols = read_loss_columns(p.train_log, {"critic_loss", "generator_loss"});
        prepare_output(ctx, dir / "curves.png");
        write_png(dir / "curves.png", curves_plot(cols, {kNormalColor, kTumorColor}));
        inputs.push_back(p.train_log);
    }
    if (!p.fid.empty()) {
        json fids = json::array();
        std::vector<double> values;
        for (const auto& f : p.fid) {
            require_artifact(f, "fid");
            const auto j = json::parse(read_text(f));
            values.push_back(j.at("fid").get<double>());
            fids.push_back({{"report", fs::path(f).filename().string()}, {"generator", j.at("generator")}, {"fid", values.back()}});
            inputs.push_back(f);
        }
        report["fid"] = fids;
        prepare_output(ctx, dir / "fid.png");
        write_png(dir / "fid.png", curves_plot({values}, {kAxisColor}));
    }
    if (!p.inversion.ckpt.empty()) {
        require_param(p.manifest, "--manifest (for the reconstruction grid)", "report");
        require_artifact(p.manifest, "dataset");
        auto models = load_models(p.inversion);
        const auto cfg = inversion_config(p.inversion, ctx.seed);
        auto m = read_manifest(p.manifest);
        Manifest picked = m;
        picked.entries.clear();
        for (auto label : {PatchLabel::normal, PatchLabel::tumor}) {
            int taken = 0;
            for (const auto& e : m.entries)
                if (e.label == label && taken < p.grid) {
                    picked.entries.push_back(e);
                    ++taken;
                }
        }
        require(!picked.entries.empty(), "no labeled tiles for the reconstruction grid");
        const int res = models.state.spec.output_resolution;
        const auto images = downsample_to(load_manifest_images(p.manifest, picked), res);
        std::vector<std::uint64_t> seeds;
        for (const auto& e : picked.entries) seeds.push_back(derive_seed(ctx.seed, e.path));
        const auto inv = invert_images(images, models.state.generator, models.state.critic, cfg, models.encoder_ptr(), seeds);
        const int factor = std::max(1, 64 / res);
        std::vector<std::vector<Image8>> grid;
        for (std::size_t i = 0; i < inv.size(); ++i) {
            const auto a = analyze(images[static_cast<std::int64_t>(i)], inv[i], cfg.lambda_disc, models.state.critic,
                                   FixedThreshold{p.threshold});
            grid.push_back({upscale(to_image8(a.query), factor), upscale(to_image8(a.reconstruction), factor),
                            upscale(heatmap(a.residual_map, 4.0 * p.threshold), factor), upscale(mask_image(a.mask), factor)});
        }
        prepare_output(ctx, dir / "reconstructions.png");
        write_png(dir / "reconstructions.png", image_grid(grid));
        inputs.push_back(p.inversion.ckpt);
        inputs.push_back(p.manifest);
    }
    write_text(dir / "report.json", report.dump(2) + "\n");
    log::info("report: AUC " + std::to_string(detection.auc));
    write_provenance(ctx, dir / "report.json", "report", p, inputs);
}

void run_classify_train(const RunContext& ctx, const ClassifyTrainParams& p) {
    require_param(p.train, "--train", "classify train");
    require_param(p.val, "--val", "classify train");
    require_artifact(p.train, "dataset");
    require_artifact(p.val, "dataset");
    ClassifierConfig cfg;
    cfg.input_resolution = p.resolution;
    cfg.width = p.width;
    cfg.feature_dim = p.feature_dim;
    cfg.learning_rate = p.lr;
    cfg.batch_size = p.batch;
    cfg.max_epochs = p.epochs;
    cfg.patience = p.patience;
    cfg.flips = !p.no_flips;
    cfg.seed = ctx.seed;
    prepare_output(ctx, p.out);
    const auto trained = train_classifier(fs::path(p.train), fs::path(p.val), cfg);
    save_classifier(trained.model, p.out);
    std::ostringstream history;
    history.precision(17);
    history << "epoch\ttrain_loss\ttrain_accuracy\tval_accuracy\n";
    for (const auto& e : trained.history)
        history << e.epoch << '\t' << e.train_loss << '\t' << e.train_accuracy << '\t' << e.val_accuracy << '\n';
    write_text(stem_sibling(p.out, "_history.tsv"), history.str());
    log::info("classifier: best validation accuracy " + std::to_string(trained.best_val_accuracy) + " at epoch " +
              std::to_string(trained.best_epoch));
    write_provenance(ctx, p.out, "classify-train", p, {p.train, p.val});
}

void run_classify_eval(const RunContext& ctx, const ClassifyEvalParams& p) {
    require_param(p.model, "--model", "classify eval");
    require_param(p.manifest, "--manifest", "classify eval");
    require_artifact(p.model, "classify-train");
    require_artifact(p.manifest, "dataset");
    const auto model = load_classifier(p.model);
    prepare_output(ctx, p.out);
    const auto report = evaluate_accuracy(model, fs::path(p.manifest));
    write_text(p.out, accuracy_json(report).dump(2) + "\n");
    log::info("accuracy " + std::to_string(report.accuracy));
    write_provenance(ctx, p.out, "classify-eval", p, {p.model, p.manifest});
}

void run_synth_protocol(const RunContext& ctx, const SynthProtocolParams& p) {
    for (const auto& [value, flag] : {std::pair{p.model, "--model"}, {p.manifest, "--manifest"}, {p.g_normal, "--g-normal"},
                                      {p.g_tumor, "--g-tumor"}})
        require_param(value, flag, "classify synth-protocol");
    require_artifact(p.model, "classify-train");
    require_artifact(p.manifest, "dataset");
    require_artifact(p.g_normal, "train-gan");
    require_artifact(p.g_tumor, "train-gan");
    const auto model = load_classifier(p.model);
    const auto real = load_labeled(p.manifest);
    auto normal = load_checkpoint(p.g_normal);
    auto tumor = load_checkpoint(p.g_tumor);
    GeneratorSource normal_source(normal.generator, weights_id("generator", *normal.generator));
    GeneratorSource tumor_source(tumor.generator, weights_id("generator", *tumor.generator));
    prepare_output(ctx, p.out);
    const auto r = real_vs_synth_protocol(model, real, normal_source, tumor_source, p.n, ctx.seed);
    const json out = {{"real", accuracy_json(r.real)},
                      {"synthetic", accuracy_json(r.synthetic)},
                      {"gap", r.gap},
                      {"n_per_class", r.n_per_class},
                      {"seed", r.seed},
                      {"generators", {normal_source.describe(), tumor_source.describe()}}};
    write_text(p.out, out.dump(2) + "\n");
    log::info("real " + std::to_string(r.real_accuracy) + " synthetic " + std::to_string(r.synthetic_accuracy));
    write_provenance(ctx, p.out, "classify-synth-protocol", p, {p.model, p.manifest, p.g_normal, p.g_tumor});
}

const std::vector<std::string>& pipeline_stages() {
    static const std::vector<std::string> stages{"corpus",         "preprocess",     "sample",        "split",
                                                 "train-gan",      "train-gan-tumor", "train-encoder", "classify-train",
                                                 "classify-eval",  "fid",            "score",         "report",
                                                 "synth-protocol"};
    return stages;
}

void run_pipeline(const RunContext& ctx, const PipelineParams& p, StageParams s) {
    for (const auto& name : p.stages)
        if (std::find(pipeline_stages().begin(), pipeline_stages().end(), name) == pipeline_stages().end())
            throw InvalidInput("unknown pipeline stage '" + name + "'");
    const bool encoder = parse_strategy(s.score.inversion.strategy) == Strategy::encoder;
    auto wanted = [&](const std::string& name) {
        if (!p.stages.empty()) return std::find(p.stages.begin(), p.stages.end(), name) != p.stages.end();
        if (name == "train-encoder") return encoder;
        if (name == "train-gan-tumor" || name == "synth-protocol") return p.tumor_generator;
        return true;
    };
    const fs::path root = p.out;
    const auto path = [&](const fs::path& rel) { return (root / rel).string(); };

    s.corpus.out = path("corpus");
    s.preprocess.slides = path("corpus/slides");
    s.preprocess.masks = path("corpus/masks");
    s.preprocess.out = path("tiles");
    s.sample.manifest = path("tiles/manifest.tsv");
    s.sample.out = path("dataset/train_normal.tsv");
    s.split.manifest = path("tiles/manifest.tsv");
    s.split.out = path("dataset");
    if (s.split.val_fraction <= 0.0) s.split.val_fraction = 0.1;
    s.train_gan.manifest = path("dataset/train_normal.tsv");
    s.train_gan.label = "normal";
    s.train_gan.out = path("gan");
    TrainGanParams tumor_gan = s.train_gan;
    tumor_gan.manifest = path("dataset/train.tsv");
    tumor_gan.label = "tumor";
    tumor_gan.out = path("gan_tumor");
    s.train_encoder.ckpt = path("gan/final.ckpt");
    if (s.train_encoder.generated == 0) s.train_encoder.manifest = path("dataset/train_normal.tsv");
    s.train_encoder.out = path("encoder/encoder.pt");
    s.classify_train.train = path("dataset/train.tsv");
    s.classify_train.val = path("dataset/val.tsv");
    s.classify_train.out = path("classifier/classifier.pt");
    s.classify_eval.model = s.classify_train.out;
    s.classify_eval.manifest = path("dataset/test.tsv");
    s.classify_eval.out = path("classifier/accuracy.json");
    s.fid.real = path("dataset/train_normal.tsv");
    s.fid.ckpt = path("gan/final.ckpt");
    s.fid.noise = false;
    if (s.fid.extractor == "small-clf") s.fid.classifier = s.classify_train.out;
    s.fid.out = path("fid/fid.json");
    FidParams noise_fid = s.fid;
    noise_fid.noise = true;
    noise_fid.ckpt.clear();
    noise_fid.out = path("fid/fid_noise.json");
    s.score.inversion.ckpt = path("gan/final.ckpt");
    if (encoder) s.score.inversion.encoder = s.train_encoder.out;
    s.score.manifest = path("dataset/test.tsv");
    s.score.out = path("score/scores.tsv");
    s.report.scores = s.score.out;
    s.report.out = path("report");
    s.report.train_log = path("gan/train_log.tsv");
    s.report.fid = {s.fid.out, noise_fid.out};
    s.report.inversion = s.score.inversion;
    s.report.manifest = s.score.manifest;
    s.synth_protocol.model = s.classify_train.out;
    s.synth_protocol.manifest = path("dataset/test.tsv");
    s.synth_protocol.g_normal = path("gan/final.ckpt");
    s.synth_protocol.g_tumor = path("gan_tumor/final.ckpt");
    s.synth_protocol.out = path("classifier/protocol.json");

    for (const auto& stage : pipeline_stages()) {
        if (!wanted(stage)) continue;
        log::info("== pipeline stage " + stage);
        if (stage == "corpus") run_corpus(ctx, s.corpus);
        else if (stage == "preprocess") run_preprocess(ctx, s.preprocess);
        else if (stage == "sample") run_sample(ctx, s.sample);
        else if (stage == "split") run_split(ctx, s.split);
        else if (stage == "train-gan") run_train_gan(ctx, s.train_gan);
        else if (stage == "train-gan-tumor") run_train_gan(ctx, tumor_gan);
        else if (stage == "train-encoder") run_train_encoder(ctx, s.train_encoder);
        else if (stage == "classify-train") run_classify_train(ctx, s.classify_train);
        else if (stage == "classify-eval") run_classify_eval(ctx, s.classify_eval);
        else if (stage == "fid") {
            if (s.fid.extractor == "small-clf") require_artifact(s.fid.classifier, "classify-train");
            run_fid(ctx, s.fid);
            run_fid(ctx, noise_fid);
        } else if (stage == "score") run_score(ctx, s.score);
        else if (stage == "report") {
            // Only the figures whose inputs exist are drawn.
            if (!fs::exists(s.report.train_log)) s.report.train_log.clear();
            std::erase_if(s.report.fid, [](const std::string& f) { return !fs::exists(f); });
            run_report(ctx, s.report);
        } else if (stage == "synth-protocol") run_synth_protocol(ctx, s.synth_protocol);
    }
}

}  // namespace pathogan::cli
