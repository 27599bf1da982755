#include "cli.hpp"

#include <CLI11.hpp>

#include <iostream>

#include "artifacts.hpp"
#include "pathogan/dataset.hpp"
#include "pathogan/log.hpp"
#include "pathogan/tensor_utils.hpp"
#include "stages.hpp"

namespace pathogan::cli {

namespace {

struct Globals {
    std::uint64_t seed = 7;
    bool deterministic = false;
    bool force = false;
    std::string config;
    std::string log_level = "info";
};

void add_inversion_options(CLI::App* app, InversionParams& p) {
    app->add_option("--ckpt", p.ckpt, "generator checkpoint");
    app->add_option("--strategy", p.strategy, "iterative, encoder or perceptual")->capture_default_str();
    app->add_option("--encoder", p.encoder, "encoder weights (encoder strategy)");
    app->add_option("--steps", p.steps, "optimisation steps")->capture_default_str();
    app->add_option("--lambda", p.lambda, "discrimination-loss weight")->capture_default_str();
    app->add_option("--step-size", p.step_size, "Adam step size")->capture_default_str();
    app->add_option("--rampdown", p.rampdown, "fraction of steps with cosine step-size decay")->capture_default_str();
    app->add_flag("--fixed-noise", p.fixed_noise, "keep noise maps fixed (perceptual strategy)");
}

void add_stage_options(CLI::App& app, StageParams& s, PipelineParams& pipeline, InvertParams& invert) {
    auto* corpus = app.add_subcommand("corpus", "synthetic slide corpus")->require_subcommand(1);
    auto* make = corpus->add_subcommand("make", "write slides, tumor masks and an index");
    make->add_option("--n-slides", s.corpus.n_slides)->capture_default_str();
    make->add_option("--size", s.corpus.size, "slide edge in pixels")->capture_default_str();
    make->add_option("--tumor-frac", s.corpus.tumor_frac)->capture_default_str();
    make->add_option("--out", s.corpus.out)->capture_default_str();

    auto* pre = app.add_subcommand("preprocess", "tissue masking and tiling of a slide directory");
    pre->add_option("--slides", s.preprocess.slides, "directory of RGB slide PNGs");
    pre->add_option("--masks", s.preprocess.masks, "directory of same-named tumor masks");
    pre->add_option("--out", s.preprocess.out)->capture_default_str();
    pre->add_option("--size", s.preprocess.size)->capture_default_str();
    pre->add_option("--stride", s.preprocess.stride, "0 means the tile size")->capture_default_str();
    pre->add_option("--min-tissue", s.preprocess.min_tissue)->capture_default_str();
    pre->add_option("--min-saturation", s.preprocess.min_saturation)->capture_default_str();
    pre->add_option("--max-green", s.preprocess.max_green)->capture_default_str();
    pre->add_option("--closing-radius", s.preprocess.closing_radius)->capture_default_str();
    pre->add_option("--min-object-area", s.preprocess.min_object_area)->capture_default_str();
    pre->add_option("--high", s.preprocess.high, "high-coverage threshold")->capture_default_str();
    pre->add_option("--low", s.preprocess.low, "low-coverage threshold")->capture_default_str();
    pre->add_option("--tumor-threshold", s.preprocess.tumor_threshold)->capture_default_str();

    auto* dataset = app.add_subcommand("dataset", "training and evaluation manifests")->require_subcommand(1);
    auto* sample = dataset->add_subcommand("sample", "normal-only GAN training set");
    sample->add_option("--manifest", s.sample.manifest);
    sample->add_option("--per-slide", s.sample.per_slide)->capture_default_str();
    sample->add_option("--min-coverage", s.sample.min_coverage)->capture_default_str();
    sample->add_option("--size", s.sample.size)->capture_default_str();
    sample->add_option("--out", s.sample.out)->capture_default_str();
    auto* split = dataset->add_subcommand("split", "balanced slide-disjoint train/val/test split");
    split->add_option("--manifest", s.split.manifest);
    split->add_option("--train-per-class", s.split.train_per_class)->capture_default_str();
    split->add_option("--test-per-class", s.split.test_per_class)->capture_default_str();
    split->add_option("--val-fraction", s.split.val_fraction)->capture_default_str();
    split->add_option("--min-coverage", s.split.min_coverage)->capture_default_str();
    split->add_flag("--allow-overlap", s.split.allow_overlap, "allow slides in both train and test");
    split->add_option("--out", s.split.out, "output directory")->capture_default_str();

    auto* gan = app.add_subcommand("train-gan", "train a generator and critic");
    auto& g = s.train_gan;
    gan->add_option("--manifest", g.manifest);
    gan->add_option("--label", g.label, "normal, tumor or any")->capture_default_str();
    gan->add_option("--objective", g.objective, "wgan-gp or nonsaturating")->capture_default_str();
    gan->add_option("--architecture", g.architecture, "dcgan, resnet or mapped")->capture_default_str();
    gan->add_option("--resolution", g.resolution)->capture_default_str();
    gan->add_option("--latent", g.latent)->capture_default_str();
    gan->add_option("--base", g.base, "channel width unit")->capture_default_str();
    gan->add_option("--feature-width", g.feature_width)->capture_default_str();
    gan->add_option("--growth-images", g.growth_images, "images per fade and stable phase")->capture_default_str();
    gan->add_option("--steps", g.steps, "generator steps")->capture_default_str();
    gan->add_option("--batch", g.batch)->capture_default_str();
    gan->add_option("--lr", g.lr)->capture_default_str();
    gan->add_option("--critic-steps", g.critic_steps, "0 selects the objective default")->capture_default_str();
    gan->add_option("--gp-lambda", g.gp_lambda)->capture_default_str();
    gan->add_flag("--no-flips", g.no_flips);
    gan->add_option("--checkpoint-every", g.checkpoint_every, "images between checkpoints")->capture_default_str();
    gan->add_option("--out", g.out, "checkpoint directory")->capture_default_str();

    auto* enc = app.add_subcommand("train-encoder", "train an image-to-latent encoder");
    auto& e = s.train_encoder;
    enc->add_option("--ckpt", e.ckpt);
    enc->add_option("--manifest", e.manifest, "normal tiles");
    enc->add_option("--generated", e.generated, "train on this many generated images instead")->capture_default_str();
    enc->add_option("--kappa", e.kappa)->capture_default_str();
    enc->add_option("--steps", e.steps)->capture_default_str();
    enc->add_option("--batch", e.batch)->capture_default_str();
    enc->add_option("--lr", e.lr)->capture_default_str();
    enc->add_option("--base", e.base)->capture_default_str();
    enc->add_option("--out", e.out)->capture_default_str();

    auto* fid = app.add_subcommand("fid", "Frechet distance between generated and real tiles");
    fid->add_option("--real", s.fid.real);
    fid->add_option("--ckpt", s.fid.ckpt);
    fid->add_flag("--noise", s.fid.noise, "score uniform-noise images instead of a generator");
    fid->add_option("--n", s.fid.n, "generated samples")->capture_default_str();
    fid->add_option("--extractor", s.fid.extractor, "small-clf or identity")->capture_default_str();
    fid->add_option("--identity-resolution", s.fid.identity_resolution)->capture_default_str();
    fid->add_option("--classifier", s.fid.classifier, "classifier weights for small-clf");
    fid->add_option("--out", s.fid.out)->capture_default_str();

    auto* inv = app.add_subcommand("invert", "invert one image");
    add_inversion_options(inv, invert.inversion);
    inv->add_option("--image", invert.image);
    inv->add_option("--out", invert.out)->capture_default_str();

    auto* score = app.add_subcommand("score", "anomaly scores for a manifest");
    add_inversion_options(score, s.score.inversion);
    score->add_option("--manifest", s.score.manifest);
    score->add_option("--chunk", s.score.chunk)->capture_default_str();
    score->add_option("--out", s.score.out)->capture_default_str();

    auto* report = app.add_subcommand("report", "AUC, histograms and figures from a scores file");
    report->add_option("--scores", s.report.scores);
    report->add_option("--out", s.report.out)->capture_default_str();
    report->add_option("--bins", s.report.bins)->capture_default_str();
    report->add_option("--train-log", s.report.train_log, "loss curves");
    report->add_option("--fid", s.report.fid, "FID reports, in plot order");
    add_inversion_options(report, s.report.inversion);
    report->add_option("--manifest", s.report.manifest, "tiles for the reconstruction grid");
    report->add_option("--grid", s.report.grid, "grid rows per class")->capture_default_str();
    report->add_option("--threshold", s.report.threshold, "residual mask threshold")->capture_default_str();

    auto* classify = app.add_subcommand("classify", "patch classifier")->require_subcommand(1);
    auto* ctrain = classify->add_subcommand("train", "train on labeled tiles");
    auto& c = s.classify_train;
    ctrain->add_option("--train", c.train);
    ctrain->add_option("--val", c.val);
    ctrain->add_option("--resolution", c.resolution)->capture_default_str();
    ctrain->add_option("--width", c.width)->capture_default_str();
    ctrain->add_option("--feature-dim", c.feature_dim)->capture_default_str();
    ctrain->add_option("--lr", c.lr)->capture_default_str();
    ctrain->add_option("--batch", c.batch)->capture_default_str();
    ctrain->add_option("--epochs", c.epochs)->capture_default_str();
    ctrain->add_option("--patience", c.patience)->capture_default_str();
    ctrain->add_flag("--no-flips", c.no_flips);
    ctrain->add_option("--out", c.out)->capture_default_str();
    auto* ceval = classify->add_subcommand("eval", "accuracy on a labeled manifest");
    ceval->add_option("--model", s.classify_eval.model);
    ceval->add_option("--manifest", s.classify_eval.manifest);
    ceval->add_option("--out", s.classify_eval.out)->capture_default_str();
    auto* proto = classify->add_subcommand("synth-protocol", "accuracy on real versus generated tiles");
    auto& sp = s.synth_protocol;
    proto->add_option("--model", sp.model);
    proto->add_option("--manifest", sp.manifest, "real test tiles");
    proto->add_option("--g-normal", sp.g_normal);
    proto->add_option("--g-tumor", sp.g_tumor);
    proto->add_option("--n", sp.n, "generated tiles per class")->capture_default_str();
    proto->add_option("--out", sp.out)->capture_default_str();

    auto* pipe = app.add_subcommand("pipeline", "run every stage in dependency order");
    pipe->add_option("--out", pipeline.out, "run directory")->capture_default_str();
    pipe->add_option("--stages", pipeline.stages, "subset of stages to run")->delimiter(',');
    pipe->add_option("--tumor-generator", pipeline.tumor_generator, "train a tumor generator for the protocol")
        ->capture_default_str();
}

std::string option_value(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_array()) {
        std::string out;
        for (const auto& item : v) out += (out.empty() ? "" : ",") + option_value(item);
        return out;
    }
    return v.dump();
}

// Config keys are option names (without dashes) grouped by subcommand.
void apply_config(CLI::App& app, const json& section, const std::string& prefix) {
    if (!section.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
    for (const auto& [key, value] : section.items()) {
        const std::string where = prefix.empty() ? key : prefix + "." + key;
        if (auto* sub = app.get_subcommand_no_throw(key)) {
            apply_config(*sub, value, where);
            continue;
        }
        auto* opt = key == "config" || key == "help" ? nullptr : app.get_option_no_throw("--" + key);
        if (opt == nullptr) throw ConfigError("unknown config key: " + where);
        if (value.is_object() || value.is_null()) throw ConfigError("config key " + where + " needs a scalar or list value");
        try {
            opt->default_val(option_value(value));
        } catch (const CLI::Error& e) {
            throw ConfigError("invalid value for config key " + where + ": " + e.what());
        }
    }
}

std::string find_config_path(const std::vector<std::string>& args) {
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
    }
    return {};
}

log::Level parse_level(const std::string& text) {
    if (text == "debug") return log::Level::debug;
    if (text == "info") return log::Level::info;
    if (text == "warn") return log::Level::warn;
    if (text == "error") return log::Level::error;
    throw InvalidInput("log level must be debug, info, warn or error");
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"pathogan: GAN-based anomaly detection for histology tiles", "pathogan"};
    app.set_version_flag("--version", tool_version());
    app.require_subcommand(1);
    Globals globals;
    app.add_option("--seed", globals.seed, "run seed")->capture_default_str();
    app.add_flag("--deterministic", globals.deterministic, "single-threaded, bit-reproducible execution");
    app.add_flag("--force", globals.force, "overwrite existing artifacts");
    app.add_option("--config", globals.config, "JSON config: option values grouped by subcommand");
    app.add_option("--log-level", globals.log_level, "debug, info, warn or error")->capture_default_str();

    StageParams stages;
    PipelineParams pipeline;
    InvertParams invert;
    add_stage_options(app, stages, pipeline, invert);

    RunContext ctx;
    ctx.command = args;
    try {
        const auto config_path = find_config_path(args);
        if (!config_path.empty()) {
            json config;
            try {
                config = json::parse(read_text(config_path));
            } catch (const json::exception& e) {
                throw ConfigError("cannot parse config " + config_path + ": " + e.what());
            }
            apply_config(app, config, "");
            ctx.config_hash = config_hash(config.dump());
        }
        std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
        try {
            app.parse(reversed);
        } catch (const CLI::ParseError& e) {
            return app.exit(e);
        }
        log::set_level(parse_level(globals.log_level));
        ctx.seed = globals.seed;
        ctx.deterministic = globals.deterministic;
        ctx.force = globals.force;
        configure_determinism(globals.deterministic);
        log::info("pathogan " + tool_version() + " seed " + std::to_string(ctx.seed) +
                  (ctx.config_hash.empty() ? "" : " config_hash " + ctx.config_hash));

        auto* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        auto* leaf = sub->get_subcommands().empty() ? nullptr : sub->get_subcommands().front();
        if (name == "corpus") run_corpus(ctx, stages.corpus);
        else if (name == "preprocess") run_preprocess(ctx, stages.preprocess);
        else if (name == "dataset" && leaf->get_name() == "sample") run_sample(ctx, stages.sample);
        else if (name == "dataset") run_split(ctx, stages.split);
        else if (name == "train-gan") run_train_gan(ctx, stages.train_gan);
        else if (name == "train-encoder") run_train_encoder(ctx, stages.train_encoder);
        else if (name == "fid") run_fid(ctx, stages.fid);
        else if (name == "invert") run_invert(ctx, invert);
        else if (name == "score") run_score(ctx, stages.score);
        else if (name == "report") run_report(ctx, stages.report);
        else if (name == "classify" && leaf->get_name() == "train") run_classify_train(ctx, stages.classify_train);
        else if (name == "classify" && leaf->get_name() == "eval") run_classify_eval(ctx, stages.classify_eval);
        else if (name == "classify") run_synth_protocol(ctx, stages.synth_protocol);
        else if (name == "pipeline") run_pipeline(ctx, pipeline, stages);
        return kOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigInvalid;
    } catch (const DependencyError& e) {
        std::cerr << "missing dependency: " << e.what() << '\n';
        return kMissingDependency;
    } catch (const ArtifactExists& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kArtifactExists;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
}

}  // namespace pathogan::cli
