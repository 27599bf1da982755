#include "pathogan/classifier.hpp"

#include <numeric>

#include <json.hpp>

#include "pathogan/error.hpp"
#include "pathogan/log.hpp"
#include "pathogan/rng.hpp"
#include "pathogan/tensor_utils.hpp"

namespace pathogan {

namespace nn = torch::nn;

void ClassifierConfig::validate() const {
    require(!backbone.empty(), "classifier backbone id is empty");
    require(input_resolution >= 16 && (input_resolution & (input_resolution - 1)) == 0,
            "classifier input resolution must be a power of two >= 16");
    require(width >= 1 && feature_dim >= 1, "classifier widths must be positive");
    require(learning_rate > 0.0 && batch_size >= 1 && max_epochs >= 1 && patience >= 1,
            "invalid classifier training parameters");
}

ClassifierNetImpl::ClassifierNetImpl(int input_resolution, int width, int feature_dim) {
    body_ = nn::Sequential();
    int ch = 3;
    int next = width;
    for (int r = input_resolution; r > 8; r /= 2) {
        body_->push_back(nn::Conv2d(nn::Conv2dOptions(ch, next, 3).padding(1)));
        body_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
        body_->push_back(nn::AvgPool2d(nn::AvgPool2dOptions(2)));
        ch = next;
        next = std::min(next * 2, 4 * width);
    }
    body_->push_back(nn::Conv2d(nn::Conv2dOptions(ch, ch, 3).padding(1)));
    body_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    register_module("body", body_);
    embed_ = register_module("embed", nn::Linear(ch, feature_dim));
    head_ = register_module("head", nn::Linear(feature_dim, 2));
}

torch::Tensor ClassifierNetImpl::features(const torch::Tensor& images) {
    return torch::relu(embed_(body_->forward(images).mean({2, 3})));
}

torch::Tensor ClassifierNetImpl::forward(const torch::Tensor& images) { return head_(features(images)); }

namespace {

constexpr int kEvalChunk = 256;

torch::Tensor prepare(const ClassifierModel& m, const torch::Tensor& images) {
    require(images.dim() == 4 && images.size(1) == 3 && images.size(0) >= 1, "classifier expects N x 3 x S x S images");
    return resize_bilinear(images.to(torch::kFloat32), m.input_resolution);
}

template <class Fn>
torch::Tensor chunked(const torch::Tensor& images, Fn fn) {
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> parts;
    for (std::int64_t s = 0; s < images.size(0); s += kEvalChunk)
        parts.push_back(fn(images.slice(0, s, std::min<std::int64_t>(images.size(0), s + kEvalChunk))));
    return torch::cat(parts);
}

void check_labeled(const LabeledImages& d, const std::string& what) {
    require(d.images.defined() && d.images.dim() == 4 && d.images.size(0) == d.size(), what + " images and labels differ");
    require(d.size() >= 1, what + " set is empty");
    for (int l : d.labels) require(l == 0 || l == 1, what + " labels must be 0 (normal) or 1 (tumor)");
}

std::vector<torch::Tensor> snapshot(nn::Module& m) {
    std::vector<torch::Tensor> out;
    for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
    return out;
}

void restore(nn::Module& m, const std::vector<torch::Tensor>& saved) {
    torch::NoGradGuard no_grad;
    auto params = m.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(saved[i]);
}

}  // namespace

torch::Tensor ClassifierModel::logits(const torch::Tensor& images) const {
    const auto x = prepare(*this, images);
    auto n = net;
    return chunked(x, [&](const torch::Tensor& c) { return n->forward(c); });
}

torch::Tensor ClassifierModel::probabilities(const torch::Tensor& images) const {
    return torch::softmax(logits(images).to(torch::kFloat64), 1);
}

torch::Tensor ClassifierModel::features(const torch::Tensor& images) const {
    const auto x = prepare(*this, images);
    auto n = net;
    return chunked(x, [&](const torch::Tensor& c) { return n->features(c); });
}

std::vector<int> ClassifierModel::predict(const torch::Tensor& images) const {
    const auto l = logits(images);
    // Ties go to normal.
    const auto tumor = (l.select(1, 1) > l.select(1, 0)).to(torch::kInt32).contiguous();
    return {tumor.data_ptr<int>(), tumor.data_ptr<int>() + tumor.numel()};
}

LabeledImages load_labeled(const std::filesystem::path& manifest_path) {
    const Manifest m = read_manifest(manifest_path);
    require(!m.entries.empty(), "manifest is empty: " + manifest_path.string());
    validate_manifest(m, manifest_path.parent_path());
    LabeledImages out;
    for (const auto& e : m.entries) {
        if (!e.label) throw InvalidInput("unlabeled manifest entry: " + e.path);
        out.labels.push_back(*e.label == PatchLabel::tumor ? 1 : 0);
    }
    out.images = load_manifest_images(manifest_path, m);
    return out;
}

ClassifierTraining train_classifier(const LabeledImages& train, const LabeledImages& val, const ClassifierConfig& cfg) {
    cfg.validate();
    check_labeled(train, "training");
    check_labeled(val, "validation");
    const auto n_tumor = std::accumulate(train.labels.begin(), train.labels.end(), std::int64_t{0});
    if (n_tumor == 0 || n_tumor == train.size())
        throw InvalidInput("classifier training needs both normal and tumor examples");

    torch::manual_seed(derive_seed(cfg.seed, "classifier-init"));
    ClassifierTraining out;
    auto& model = out.model;
    model.backbone = cfg.backbone;
    model.input_resolution = cfg.input_resolution;
    model.width = cfg.width;
    model.feature_dim = cfg.feature_dim;
    model.net = ClassifierNet(cfg.input_resolution, cfg.width, cfg.feature_dim);
    torch::optim::Adam opt(model.net->parameters(), torch::optim::AdamOptions(cfg.learning_rate));

    const auto x = resize_bilinear(train.images.to(torch::kFloat32), cfg.input_resolution).contiguous();
    const auto y = torch::tensor(std::vector<std::int64_t>(train.labels.begin(), train.labels.end()), torch::kInt64);
    const auto n = train.size();
    std::vector<std::int64_t> order(n);
    auto best = snapshot(*model.net);
    out.best_val_accuracy = -1.0;
    int since_best = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        model.net->train();
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(cfg.seed, "classifier-epoch#" + std::to_string(epoch)));
        for (std::int64_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
        double loss_sum = 0.0;
        std::int64_t correct = 0;
        for (std::int64_t s = 0; s < n; s += cfg.batch_size) {
            const auto e = std::min<std::int64_t>(n, s + cfg.batch_size);
            const auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + s, order.begin() + e), torch::kInt64);
            auto xb = x.index_select(0, idx);
            if (cfg.flips) {
                std::vector<torch::Tensor> items;
                for (std::int64_t i = 0; i < xb.size(0); ++i) {
                    auto t = xb[i];
                    const auto f = rng.below(4);
                    if (f & 1) t = t.flip({2});
                    if (f & 2) t = t.flip({1});
                    items.push_back(t);
                }
                xb = torch::stack(items);
            }
            const auto yb = y.index_select(0, idx);
            const auto logits = model.net->forward(xb);
            const auto loss = torch::nn::functional::cross_entropy(logits, yb);
            opt.zero_grad();
            loss.backward();
            opt.step();
            loss_sum += loss.item<double>() * static_cast<double>(e - s);
            correct += (logits.argmax(1) == yb).sum().item<std::int64_t>();
        }
        model.net->eval();
        EpochRecord rec{epoch, loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n),
                        evaluate_accuracy(model, val).accuracy};
        out.history.push_back(rec);
        log::debug("classifier epoch " + std::to_string(epoch) + " val accuracy " + std::to_string(rec.val_accuracy));
        if (rec.val_accuracy > out.best_val_accuracy) {
            out.best_val_accuracy = rec.val_accuracy;
            out.best_epoch = epoch;
            best = snapshot(*model.net);
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    restore(*model.net, best);
    model.net->eval();
    return out;
}

ClassifierTraining train_classifier(const std::filesystem::path& train_manifest,
                                    const std::filesystem::path& val_manifest, const ClassifierConfig& cfg) {
    return train_classifier(load_labeled(train_manifest), load_labeled(val_manifest), cfg);
}

AccuracyReport accuracy_from_predictions(const std::vector<int>& predicted, const std::vector<int>& truth) {
    require(predicted.size() == truth.size(), "prediction and label counts differ");
    require(!truth.empty(), "no labels to evaluate");
    AccuracyReport r;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        require((truth[i] == 0 || truth[i] == 1) && (predicted[i] == 0 || predicted[i] == 1), "labels must be 0 or 1");
        ++r.confusion[truth[i]][predicted[i]];
    }
    r.total = static_cast<std::int64_t>(truth.size());
    r.accuracy = static_cast<double>(r.confusion[0][0] + r.confusion[1][1]) / static_cast<double>(r.total);
    return r;
}

AccuracyReport evaluate_accuracy(const ClassifierModel& model, const LabeledImages& data) {
    check_labeled(data, "evaluation");
    return accuracy_from_predictions(model.predict(data.images), data.labels);
}

AccuracyReport evaluate_accuracy(const ClassifierModel& model, const std::filesystem::path& manifest_path) {
    return evaluate_accuracy(model, load_labeled(manifest_path));
}

void save_classifier(const ClassifierModel& model, const std::filesystem::path& path) {
    const nlohmann::json meta = {{"format", "pathogan-classifier"},
                                 {"backbone", model.backbone},
                                 {"input_resolution", model.input_resolution},
                                 {"width", model.width},
                                 {"feature_dim", model.feature_dim},
                                 {"class_order", {kClassOrder[0], kClassOrder[1]}}};
    torch::serialize::OutputArchive archive, body;
    archive.write("meta", c10::IValue(meta.dump()));
    model.net->save(body);
    archive.write("net", body);
    try {
        archive.save_to(path.string());
    } catch (const c10::Error& e) {
        throw IoError("cannot write classifier " + path.string() + ": " + e.what_without_backtrace());
    }
}

ClassifierModel load_classifier(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("classifier not found: " + path.string());
    torch::serialize::InputArchive archive, body;
    nlohmann::json meta;
    try {
        archive.load_from(path.string());
        c10::IValue text;
        archive.read("meta", text);
        meta = nlohmann::json::parse(text.toStringRef());
        archive.read("net", body);
    } catch (const c10::Error& e) {
        throw IoError("cannot read classifier " + path.string() + ": " + e.what_without_backtrace());
    }
    if (meta.value("format", "") != "pathogan-classifier") throw IoError("not a classifier file: " + path.string());
    ClassifierModel m;
    m.backbone = meta.at("backbone");
    m.input_resolution = meta.at("input_resolution");
    m.width = meta.at("width");
    m.feature_dim = meta.at("feature_dim");
    m.net = ClassifierNet(m.input_resolution, m.width, m.feature_dim);
    m.net->load(body);
    m.net->eval();
    return m;
}

GeneratorSource::GeneratorSource(Generator generator, std::string name, int chunk)
    : generator_(std::move(generator)), name_(std::move(name)), chunk_(chunk) {
    require(chunk_ >= 1, "chunk size must be positive");
}

torch::Tensor GeneratorSource::sample(int n, std::uint64_t seed) {
    require(n >= 1, "sample count must be positive");
    const auto& spec = generator_->spec();
    auto codes = sample_latent(n, spec.latent_dim, seed);
    if (spec.has_intermediate_latent())
        for (int i = 0; i < n; ++i)
            codes[i].noise_maps = sample_noise_maps(spec, derive_seed(seed, "noise#" + std::to_string(i)));
    std::vector<torch::Tensor> parts;
    for (int s = 0; s < n; s += chunk_) {
        const std::vector<LatentCode> part(codes.begin() + s, codes.begin() + std::min(n, s + chunk_));
        parts.push_back(generate(generator_, part));
    }
    return torch::cat(parts);
}

ReplaySource::ReplaySource(torch::Tensor images, std::string name) : images_(std::move(images)), name_(std::move(name)) {
    require(images_.defined() && images_.dim() == 4 && images_.size(0) >= 1, "replay source needs an image batch");
}

torch::Tensor ReplaySource::sample(int n, std::uint64_t) {
    require(n >= 1 && n <= images_.size(0), "replay source holds " + std::to_string(images_.size(0)) + " images");
    return images_.slice(0, 0, n);
}

torch::Tensor UniformNoiseSource::sample(int n, std::uint64_t seed) {
    require(n >= 1, "sample count must be positive");
    std::vector<float> values(static_cast<std::size_t>(n) * 3 * resolution_ * resolution_);
    Rng rng(seed);
    for (auto& v : values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return torch::from_blob(values.data(), {n, 3, resolution_, resolution_}, torch::kFloat32).clone();
}

ProtocolReport real_vs_synth_protocol(const ClassifierModel& model, const LabeledImages& real_test,
                                      ImageSource& normal_source, ImageSource& tumor_source, int n_per_class,
                                      std::uint64_t seed) {
    require(n_per_class >= 1, "n_per_class must be positive");
    check_labeled(real_test, "real test");
    ProtocolReport r;
    r.n_per_class = n_per_class;
    r.seed = seed;
    r.real = evaluate_accuracy(model, real_test);
    const auto normal = normal_source.sample(n_per_class, derive_seed(seed, "synth-normal"));
    const auto tumor = tumor_source.sample(n_per_class, derive_seed(seed, "synth-tumor"));
    LabeledImages synth;
    synth.images = torch::cat({resize_bilinear(normal, model.input_resolution), resize_bilinear(tumor, model.input_resolution)});
    synth.labels.assign(n_per_class, 0);
    synth.labels.insert(synth.labels.end(), n_per_class, 1);
    r.synthetic = evaluate_accuracy(model, synth);
    r.real_accuracy = r.real.accuracy;
    r.synthetic_accuracy = r.synthetic.accuracy;
    r.gap = r.real_accuracy - r.synthetic_accuracy;
    return r;
}

}  // namespace pathogan
