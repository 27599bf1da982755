#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pathogan/dataset.hpp"
#include "pathogan/generative.hpp"

namespace pathogan {

// Index 0 is normal, index 1 is tumor.
inline constexpr std::array<const char*, 2> kClassOrder = {"normal", "tumor"};

struct ClassifierConfig {
    std::string backbone = "small-cnn-v1";
    int input_resolution = 64;
    int width = 16;        // channels of the first convolution
    int feature_dim = 64;  // penultimate width, exported as embedding
    double learning_rate = 1e-3;
    int batch_size = 32;
    int max_epochs = 20;
    int patience = 3;  // epochs without validation improvement before stopping
    bool flips = true;
    std::uint64_t seed = 0;

    void validate() const;
};

class ClassifierNetImpl : public torch::nn::Module {
public:
    ClassifierNetImpl(int input_resolution, int width, int feature_dim);

    torch::Tensor features(const torch::Tensor& images);
    torch::Tensor forward(const torch::Tensor& images);  // logits, N x 2

private:
    torch::nn::Sequential body_{nullptr};
    torch::nn::Linear embed_{nullptr};
    torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(ClassifierNet);

struct ClassifierModel {
    std::string backbone;
    int input_resolution = 64;
    int width = 16;
    int feature_dim = 64;
    ClassifierNet net{nullptr};

    // Images are resized bilinearly to the input resolution first.
    torch::Tensor logits(const torch::Tensor& images) const;
    torch::Tensor probabilities(const torch::Tensor& images) const;
    torch::Tensor features(const torch::Tensor& images) const;
    std::vector<int> predict(const torch::Tensor& images) const;
};

struct LabeledImages {
    torch::Tensor images;     // N x 3 x S x S in [-1, 1]
    std::vector<int> labels;  // 0 normal, 1 tumor

    std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
};

// Loads a manifest whose entries all carry labels.
LabeledImages load_labeled(const std::filesystem::path& manifest_path);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
};

struct ClassifierTraining {
    ClassifierModel model;  // best-validation weights
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double best_val_accuracy = 0.0;
};

ClassifierTraining train_classifier(const LabeledImages& train, const LabeledImages& val, const ClassifierConfig& cfg);
ClassifierTraining train_classifier(const std::filesystem::path& train_manifest,
                                    const std::filesystem::path& val_manifest, const ClassifierConfig& cfg);

struct AccuracyReport {
    double accuracy = 0.0;
    std::array<std::array<std::int64_t, 2>, 2> confusion{};  // [true][predicted]
    std::int64_t total = 0;
};

AccuracyReport accuracy_from_predictions(const std::vector<int>& predicted, const std::vector<int>& truth);
AccuracyReport evaluate_accuracy(const ClassifierModel& model, const LabeledImages& data);
AccuracyReport evaluate_accuracy(const ClassifierModel& model, const std::filesystem::path& manifest_path);

void save_classifier(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_classifier(const std::filesystem::path& path);

// Something that can produce n images on demand: a generator, or a replay of
// fixed images for protocol checks.
class ImageSource {
public:
    virtual ~ImageSource() = default;
    virtual torch::Tensor sample(int n, std::uint64_t seed) = 0;
    virtual std::string describe() const = 0;
};

class GeneratorSource : public ImageSource {
public:
    explicit GeneratorSource(Generator generator, std::string name = "generator", int chunk = 64);
    torch::Tensor sample(int n, std::uint64_t seed) override;
    std::string describe() const override { return name_; }

private:
    Generator generator_;
    std::string name_;
    int chunk_;
};

// Returns the first n stored images verbatim.
class ReplaySource : public ImageSource {
public:
    explicit ReplaySource(torch::Tensor images, std::string name = "replay");
    torch::Tensor sample(int n, std::uint64_t seed) override;
    std::string describe() const override { return name_; }

private:
    torch::Tensor images_;
    std::string name_;
};

// Uniform noise in [-1, 1], the reference point for FID comparisons.
class UniformNoiseSource : public ImageSource {
public:
    explicit UniformNoiseSource(int resolution) : resolution_(resolution) {}
    torch::Tensor sample(int n, std::uint64_t seed) override;
    std::string describe() const override { return "uniform-noise"; }

private:
    int resolution_;
};

struct ProtocolReport {
    AccuracyReport real;
    AccuracyReport synthetic;
    double real_accuracy = 0.0;
    double synthetic_accuracy = 0.0;
    double gap = 0.0;  // real - synthetic
    int n_per_class = 0;
    std::uint64_t seed = 0;
};

// Classifies the real test set and n_per_class images from each generator,
// labelled by the generator that produced them.
ProtocolReport real_vs_synth_protocol(const ClassifierModel& model, const LabeledImages& real_test,
                                      ImageSource& normal_source, ImageSource& tumor_source, int n_per_class,
                                      std::uint64_t seed);

}  // namespace pathogan
