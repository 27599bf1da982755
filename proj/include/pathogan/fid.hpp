#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>

#include "pathogan/classifier.hpp"
#include "pathogan/frechet.hpp"

namespace pathogan {

class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::string id() const = 0;
    virtual std::size_t dim() const = 0;
    virtual bool deterministic() const { return true; }
    // N x 3 x S x S in [-1, 1] -> N x dim
    virtual torch::Tensor extract(const torch::Tensor& images) = 0;
};

// Flattened pixels (CHW order) of images bilinearly resized to `resolution`.
class IdentityExtractor : public FeatureExtractor {
public:
    explicit IdentityExtractor(int resolution) : resolution_(resolution) {}
    std::string id() const override { return "identity-" + std::to_string(resolution_); }
    std::size_t dim() const override { return static_cast<std::size_t>(3) * resolution_ * resolution_; }
    torch::Tensor extract(const torch::Tensor& images) override;

private:
    int resolution_;
};

// Penultimate features of a trained classifier (a relative, self-trained
// extractor: values are only comparable under the same model).
class ClassifierExtractor : public FeatureExtractor {
public:
    explicit ClassifierExtractor(ClassifierModel model) : model_(std::move(model)) {}
    std::string id() const override { return "small-clf:" + model_.backbone; }
    std::size_t dim() const override { return static_cast<std::size_t>(model_.feature_dim); }
    torch::Tensor extract(const torch::Tensor& images) override { return model_.features(images); }

private:
    ClassifierModel model_;
};

FeatureMatrix embed(const torch::Tensor& images, FeatureExtractor& extractor, int chunk = 256);

struct FidReport {
    double fid = 0.0;
    std::string extractor;
    std::string generator;
    std::int64_t n_real = 0;
    std::int64_t n_generated = 0;
    std::uint64_t seed = 0;

    // Shortest round-trip number formatting, so equal reports are byte-equal.
    std::string to_json() const;
};

// FID between the real images and n_samples images drawn from `source` with `seed`.
FidReport fid_report(const torch::Tensor& real_images, ImageSource& source, int n_samples, FeatureExtractor& extractor,
                     std::uint64_t seed);

}  // namespace pathogan
