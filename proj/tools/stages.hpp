#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "artifacts.hpp"

namespace pathogan::cli {

struct CorpusParams {
    int n_slides = 16;
    int size = 1024;
    double tumor_frac = 0.2;
    std::string out = "data";
};

struct PreprocessParams {
    std::string slides;
    std::string masks;
    std::string out = "tiles";
    int size = 64;
    int stride = 0;
    double min_tissue = 0.0;
    double min_saturation = 0.07;
    int max_green = 200;
    int closing_radius = 3;
    int min_object_area = 256;
    double high = 0.9;
    double low = 0.1;
    double tumor_threshold = 0.5;
};

struct SampleParams {
    std::string manifest;
    int per_slide = 50;
    double min_coverage = 0.9;
    int size = 64;
    std::string out = "train_normal.tsv";
};

struct SplitParams {
    std::string manifest;
    int train_per_class = 2000;
    int test_per_class = 500;
    double val_fraction = 0.1;
    double min_coverage = 0.9;
    bool allow_overlap = false;
    std::string out = "split";
};

struct TrainGanParams {
    std::string manifest;
    std::string label = "normal";  // normal, tumor or any
    std::string objective = "wgan-gp";
    std::string architecture = "resnet";
    int resolution = 64;
    int latent = 128;
    int base = 16;
    int feature_width = 128;
    int growth_images = 0;  // per fade and per stable phase; 0 trains the final level only
    std::int64_t steps = 1000;
    int batch = 32;
    double lr = 2e-4;
    int critic_steps = 0;
    double gp_lambda = 10.0;
    bool no_flips = false;
    std::int64_t checkpoint_every = 0;
    std::string out = "gan";
};

struct TrainEncoderParams {
    std::string ckpt;
    std::string manifest;
    int generated = 0;  // train on this many G(z) samples instead of a manifest
    double kappa = 1.0;
    std::int64_t steps = 2000;
    int batch = 32;
    double lr = 1e-3;
    int base = 16;
    std::string out = "encoder.pt";
};

struct FidParams {
    std::string real;
    std::string ckpt;
    bool noise = false;  // uniform-noise images instead of a generator
    int n = 10000;
    std::string extractor = "small-clf";
    int identity_resolution = 8;  // raw pixels are resized to this edge first
    std::string classifier;
    std::string out = "fid.json";
};

struct InversionParams {
    std::string ckpt;
    std::string strategy = "iterative";
    std::string encoder;
    int steps = 500;
    double lambda = 0.1;
    double step_size = 0.01;
    double rampdown = 0.25;
    bool fixed_noise = false;
};

struct InvertParams {
    InversionParams inversion;
    std::string image;
    std::string out = "inversion";
};

struct ScoreParams {
    InversionParams inversion;
    std::string manifest;
    int chunk = 50;
    std::string out = "scores.tsv";
};

struct ReportParams {
    std::string scores;
    std::string out = "report";
    int bins = 20;
    std::string train_log;
    std::vector<std::string> fid;
    InversionParams inversion;  // reconstruction grid when --ckpt is given
    std::string manifest;
    int grid = 4;  // rows per class in the reconstruction grid
    double threshold = 0.05;
};

struct ClassifyTrainParams {
    std::string train;
    std::string val;
    int resolution = 64;
    int width = 16;
    int feature_dim = 64;
    double lr = 1e-3;
    int batch = 32;
    int epochs = 20;
    int patience = 3;
    bool no_flips = false;
    std::string out = "classifier.pt";
};

struct ClassifyEvalParams {
    std::string model;
    std::string manifest;
    std::string out = "accuracy.json";
};

struct SynthProtocolParams {
    std::string model;
    std::string manifest;
    std::string g_normal;
    std::string g_tumor;
    int n = 500;
    std::string out = "protocol.json";
};

struct PipelineParams {
    std::string out = "run";
    std::vector<std::string> stages;  // empty: all
    bool tumor_generator = true;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CorpusParams, n_slides, size, tumor_frac, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PreprocessParams, slides, masks, out, size, stride, min_tissue, min_saturation,
                                   max_green, closing_radius, min_object_area, high, low, tumor_threshold)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SampleParams, manifest, per_slide, min_coverage, size, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SplitParams, manifest, train_per_class, test_per_class, val_fraction, min_coverage,
                                   allow_overlap, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainGanParams, manifest, label, objective, architecture, resolution, latent, base,
                                   feature_width, growth_images, steps, batch, lr, critic_steps, gp_lambda, no_flips,
                                   checkpoint_every, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainEncoderParams, ckpt, manifest, generated, kappa, steps, batch, lr, base, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(FidParams, real, ckpt, noise, n, extractor, identity_resolution, classifier, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(InversionParams, ckpt, strategy, encoder, steps, lambda, step_size, rampdown, fixed_noise)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(InvertParams, inversion, image, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ScoreParams, inversion, manifest, chunk, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ReportParams, scores, out, bins, train_log, fid, inversion, manifest, grid, threshold)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ClassifyTrainParams, train, val, resolution, width, feature_dim, lr, batch, epochs,
                                   patience, no_flips, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ClassifyEvalParams, model, manifest, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SynthProtocolParams, model, manifest, g_normal, g_tumor, n, out)

void run_corpus(const RunContext& ctx, const CorpusParams& p);
void run_preprocess(const RunContext& ctx, const PreprocessParams& p);
void run_sample(const RunContext& ctx, const SampleParams& p);
void run_split(const RunContext& ctx, const SplitParams& p);
void run_train_gan(const RunContext& ctx, const TrainGanParams& p);
void run_train_encoder(const RunContext& ctx, const TrainEncoderParams& p);
void run_fid(const RunContext& ctx, const FidParams& p);
void run_invert(const RunContext& ctx, const InvertParams& p);
void run_score(const RunContext& ctx, const ScoreParams& p);
void run_report(const RunContext& ctx, const ReportParams& p);
void run_classify_train(const RunContext& ctx, const ClassifyTrainParams& p);
void run_classify_eval(const RunContext& ctx, const ClassifyEvalParams& p);
void run_synth_protocol(const RunContext& ctx, const SynthProtocolParams& p);

struct StageParams {
    CorpusParams corpus;
    PreprocessParams preprocess;
    SampleParams sample;
    SplitParams split;
    TrainGanParams train_gan;
    TrainEncoderParams train_encoder;
    FidParams fid;
    ScoreParams score;
    ReportParams report;
    ClassifyTrainParams classify_train;
    ClassifyEvalParams classify_eval;
    SynthProtocolParams synth_protocol;
};

// Stage names in dependency order.
const std::vector<std::string>& pipeline_stages();

// Runs the requested stages under p.out, overriding the input and output
// paths of `stages` with the pipeline layout.
void run_pipeline(const RunContext& ctx, const PipelineParams& p, StageParams stages);

}  // namespace pathogan::cli
