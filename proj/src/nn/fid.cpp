#include "pathogan/fid.hpp"

#include <charconv>
#include <cstring>

#include <json.hpp>

#include "pathogan/error.hpp"
#include "pathogan/tensor_utils.hpp"

namespace pathogan {

torch::Tensor IdentityExtractor::extract(const torch::Tensor& images) {
    return resize_bilinear(images.to(torch::kFloat32), resolution_).flatten(1);
}

FeatureMatrix embed(const torch::Tensor& images, FeatureExtractor& extractor, int chunk) {
    require(images.defined() && images.dim() == 4 && images.size(1) == 3, "embed expects N x 3 x S x S images");
    require(images.size(0) >= 1, "cannot embed an empty image set");
    require(chunk >= 1, "chunk size must be positive");
    const auto n = static_cast<std::size_t>(images.size(0));
    FeatureMatrix out(n, extractor.dim());
    torch::NoGradGuard no_grad;
    for (std::int64_t s = 0; s < images.size(0); s += chunk) {
        const auto e = std::min<std::int64_t>(images.size(0), s + chunk);
        const auto f = extractor.extract(images.slice(0, s, e)).to(torch::kFloat64).contiguous();
        require(f.dim() == 2 && f.size(0) == e - s && static_cast<std::size_t>(f.size(1)) == out.cols,
                "extractor " + extractor.id() + " returned features of the wrong shape");
        std::memcpy(out.row(static_cast<std::size_t>(s)), f.data_ptr<double>(), f.numel() * sizeof(double));
    }
    return out;
}

namespace {

std::string shortest(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

}  // namespace

std::string FidReport::to_json() const {
    // Numbers are spliced in as text to keep their shortest form.
    nlohmann::ordered_json j = {{"fid", nullptr},
                                {"extractor", extractor},
                                {"generator", generator},
                                {"n_real", n_real},
                                {"n_generated", n_generated},
                                {"seed", seed}};
    std::string text = j.dump(2);
    const std::string placeholder = "\"fid\": null";
    text.replace(text.find(placeholder), placeholder.size(), "\"fid\": " + shortest(fid));
    return text + "\n";
}

FidReport fid_report(const torch::Tensor& real_images, ImageSource& source, int n_samples, FeatureExtractor& extractor,
                     std::uint64_t seed) {
    require(n_samples >= 2, "FID needs at least two generated samples");
    require(real_images.defined() && real_images.dim() == 4 && real_images.size(0) >= 2,
            "FID needs at least two real images");
    const auto generated = source.sample(n_samples, seed);
    FidReport r;
    r.fid = frechet_distance(gaussian_stats(embed(real_images, extractor)), gaussian_stats(embed(generated, extractor)));
    r.extractor = extractor.id();
    r.generator = source.describe();
    r.n_real = real_images.size(0);
    r.n_generated = n_samples;
    r.seed = seed;
    return r;
}

}  // namespace pathogan
