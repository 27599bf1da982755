#include <cmath>
#include <cstring>

#include "pathogan/error.hpp"
#include "pathogan/generative.hpp"
#include "pathogan/rng.hpp"
#include "pathogan/simd/kernels.hpp"

namespace pathogan {

namespace nn = torch::nn;

std::string to_string(Architecture a) {
    switch (a) {
    case Architecture::dcgan:
        return "dcgan";
    case Architecture::resnet:
        return "resnet";
    case Architecture::mapped:
        return "mapped";
    }
    return "resnet";
}

Architecture parse_architecture(const std::string& text) {
    if (text == "dcgan") return Architecture::dcgan;
    if (text == "resnet") return Architecture::resnet;
    if (text == "mapped") return Architecture::mapped;
    throw InvalidInput("unknown architecture '" + text + "'");
}

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int level_index(const GeneratorSpec& spec, int resolution) {
    const auto levels = spec.levels();
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (levels[i] == resolution) return static_cast<int>(i);
    throw InvalidInput("resolution " + std::to_string(resolution) + " is not a level of this network");
}

torch::Tensor lrelu(const torch::Tensor& x) { return torch::leaky_relu(x, 0.2); }

torch::Tensor pixel_norm(const torch::Tensor& x) {
    return x * torch::rsqrt(x.pow(2).mean(1, /*keepdim=*/true) + 1e-8);
}

torch::Tensor upsample2(const torch::Tensor& x) {
    namespace F = torch::nn::functional;
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kNearest));
}

torch::Tensor upsample_to(const torch::Tensor& x, int64_t size) {
    if (x.size(2) == size) return x;
    namespace F = torch::nn::functional;
    return F::interpolate(x, F::InterpolateFuncOptions().size(std::vector<int64_t>{size, size}).mode(torch::kNearest));
}

nn::Conv2d conv(int in, int out, int kernel, int stride = 1, int padding = -1) {
    if (padding < 0) padding = kernel / 2;
    return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding));
}

class UpBlockImpl : public nn::Module {
public:
    UpBlockImpl(Architecture arch, int in, int out) : arch_(arch) {
        if (arch == Architecture::dcgan) {
            deconv_ = register_module("deconv", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1)));
        } else {
            conv1_ = register_module("conv1", conv(in, out, 3));
            conv2_ = register_module("conv2", conv(out, out, 3));
            skip_ = register_module("skip", conv(in, out, 1));
        }
    }

    // `noise` (N x 1 x r x r) is added, scaled per channel, before the final activation.
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& noise, const torch::Tensor& strength) {
        if (arch_ == Architecture::dcgan) return pixel_norm(torch::relu(deconv_(x)));
        const auto h = upsample2(x);
        auto y = conv2_(lrelu(conv1_(h)));
        if (noise.defined()) y = y + strength * noise;
        return pixel_norm(lrelu(y + skip_(h)));
    }

private:
    Architecture arch_;
    nn::ConvTranspose2d deconv_{nullptr};
    nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
};
TORCH_MODULE(UpBlock);

class DownBlockImpl : public nn::Module {
public:
    DownBlockImpl(Architecture arch, int in, int out) : arch_(arch) {
        if (arch == Architecture::dcgan) {
            down_ = register_module("down", conv(in, out, 4, 2, 1));
        } else {
            conv1_ = register_module("conv1", conv(in, in, 3));
            conv2_ = register_module("conv2", conv(in, out, 3));
            skip_ = register_module("skip", conv(in, out, 1));
        }
    }

    torch::Tensor forward(const torch::Tensor& x) {
        if (arch_ == Architecture::dcgan) return lrelu(down_(x));
        const auto y = torch::avg_pool2d(lrelu(conv2_(lrelu(conv1_(x)))), 2);
        return y + skip_(torch::avg_pool2d(x, 2));
    }

private:
    Architecture arch_;
    nn::Conv2d down_{nullptr}, conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
};
TORCH_MODULE(DownBlock);

}  // namespace

GrowthSchedule::GrowthSchedule(std::vector<GrowthPhase> phases, int final_resolution)
    : phases_(std::move(phases)), final_resolution_(final_resolution) {
    int previous = 0;
    for (const auto& p : phases_) {
        require(is_power_of_two(p.resolution) && p.resolution >= 4, "growth phase resolution must be a power of two >= 4");
        require(p.resolution >= previous, "growth schedule resolutions must be non-decreasing");
        require(p.images_fade >= 0 && p.images_stable >= 0, "growth phase durations must be non-negative");
        previous = p.resolution;
    }
    if (!phases_.empty())
        require(phases_.back().resolution == final_resolution, "growth schedule must end at the output resolution");
}

std::int64_t GrowthSchedule::phase_start(std::size_t phase) const {
    std::int64_t start = 0;
    for (std::size_t i = 0; i < phase && i < phases_.size(); ++i)
        start += phases_[i].images_fade + phases_[i].images_stable;
    return start;
}

GrowthStage GrowthSchedule::stage_at(std::int64_t images_seen) const {
    if (phases_.empty()) return {final_resolution_, 1.0, 0};
    std::int64_t start = 0;
    for (std::size_t i = 0; i < phases_.size(); ++i) {
        const auto& p = phases_[i];
        const std::int64_t end = start + p.images_fade + p.images_stable;
        if (images_seen < end) {
            double alpha = 1.0;
            if (p.images_fade > 0 && images_seen < start + p.images_fade)
                alpha = static_cast<double>(images_seen - start) / static_cast<double>(p.images_fade);
            return {p.resolution, alpha, i};
        }
        start = end;
    }
    return {phases_.back().resolution, 1.0, phases_.size() - 1};
}

void GeneratorSpec::validate() const {
    require(latent_dim >= 2, "latent_dim must be >= 2");
    require(output_resolution == 32 || output_resolution == 64 || output_resolution == 128,
            "output resolution must be 32, 64 or 128");
    require(base_channels >= 1, "base_channels must be >= 1");
    require(critic_feature_width >= 1, "critic feature width must be >= 1");
    require(mapping_layers >= 1, "mapping network needs at least one layer");
    GrowthSchedule(growth_schedule, output_resolution);
}

int GeneratorSpec::channels_at(int resolution) const {
    return std::min(8 * base_channels, base_channels * (output_resolution / resolution));
}

std::vector<int> GeneratorSpec::levels() const {
    std::vector<int> out;
    for (int r = 4; r <= output_resolution; r *= 2) out.push_back(r);
    return out;
}

LatentBatch to_batch(const std::vector<LatentCode>& codes) {
    require(!codes.empty(), "no latent codes");
    const auto n = static_cast<int64_t>(codes.size());
    const auto dim = static_cast<int64_t>(codes.front().z.size());
    LatentBatch batch;
    batch.z = torch::empty({n, dim});
    const bool has_w = codes.front().w.has_value();
    if (has_w) batch.w = torch::empty({n, static_cast<int64_t>(codes.front().w->size())});
    const std::size_t levels = codes.front().noise_maps.size();
    for (std::size_t l = 0; l < levels; ++l) {
        const int s = codes.front().noise_maps[l].size;
        batch.noise.push_back(torch::empty({n, 1, s, s}));
    }
    for (int64_t i = 0; i < n; ++i) {
        const auto& c = codes[i];
        require(static_cast<int64_t>(c.z.size()) == dim, "latent codes differ in dimension");
        require(c.w.has_value() == has_w && c.noise_maps.size() == levels, "latent codes differ in structure");
        std::memcpy(batch.z[i].data_ptr<float>(), c.z.data(), dim * sizeof(float));
        if (has_w) {
            require(static_cast<int64_t>(c.w->size()) == batch.w.size(1), "intermediate latents differ in dimension");
            std::memcpy(batch.w[i].data_ptr<float>(), c.w->data(), c.w->size() * sizeof(float));
        }
        for (std::size_t l = 0; l < levels; ++l) {
            const auto& m = c.noise_maps[l];
            require(static_cast<int64_t>(m.values.size()) == batch.noise[l].size(2) * batch.noise[l].size(3),
                    "noise maps differ in size");
            std::memcpy(batch.noise[l][i].data_ptr<float>(), m.values.data(), m.values.size() * sizeof(float));
        }
    }
    return batch;
}

std::vector<LatentCode> from_batch(const LatentBatch& batch) {
    const auto z = batch.z.detach().contiguous();
    const auto n = z.size(0);
    std::vector<LatentCode> codes(n);
    for (int64_t i = 0; i < n; ++i) {
        const float* zp = z[i].data_ptr<float>();
        codes[i].z.assign(zp, zp + z.size(1));
        if (batch.w.defined()) {
            const auto w = batch.w.detach().contiguous();
            const float* wp = w[i].data_ptr<float>();
            codes[i].w = std::vector<float>(wp, wp + w.size(1));
        }
        for (const auto& level : batch.noise) {
            const auto m = level.detach().contiguous();
            const float* mp = m[i].data_ptr<float>();
            codes[i].noise_maps.push_back({static_cast<int>(m.size(2)), std::vector<float>(mp, mp + m.size(2) * m.size(3))});
        }
    }
    return codes;
}

std::vector<LatentCode> sample_latent(int n, int latent_dim, std::uint64_t seed) {
    require(n >= 1, "sample_latent needs n >= 1");
    require(latent_dim >= 1, "latent_dim must be positive");
    Rng rng(seed);
    std::vector<LatentCode> codes(n);
    for (auto& c : codes) {
        c.z.resize(latent_dim);
        rng.fill_normal(c.z);
    }
    return codes;
}

std::vector<NoiseMap> sample_noise_maps(const GeneratorSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<NoiseMap> maps;
    for (int r : spec.levels()) {
        NoiseMap m{r, std::vector<float>(static_cast<std::size_t>(r) * r)};
        rng.fill_normal(m.values);
        maps.push_back(std::move(m));
    }
    return maps;
}

GeneratorImpl::GeneratorImpl(const GeneratorSpec& spec) : spec_(spec) {
    spec_.validate();
    const auto levels = spec_.levels();
    const int c4 = spec_.channels_at(4);
    if (spec_.has_intermediate_latent()) {
        mapping_ = nn::Sequential();
        for (int i = 0; i < spec_.mapping_layers; ++i) {
            mapping_->push_back(nn::Linear(spec_.latent_dim, spec_.latent_dim));
            mapping_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
        }
        register_module("mapping", mapping_);
    }
    stem_ = register_module("stem", nn::Linear(spec_.latent_dim, c4 * 16));
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const int ch = spec_.channels_at(levels[i]);
        if (i > 0) blocks_->push_back(UpBlock(spec_.architecture, spec_.channels_at(levels[i - 1]), ch));
        to_rgb_->push_back(conv(ch, 3, 1));
        if (spec_.has_intermediate_latent()) {
            styles_->push_back(nn::Linear(spec_.latent_dim, ch));
            noise_strength_.push_back(
                register_parameter("noise_strength_" + std::to_string(levels[i]), torch::full({1, ch, 1, 1}, 0.1)));
        }
    }
    register_module("blocks", blocks_);
    register_module("to_rgb", to_rgb_);
    if (spec_.has_intermediate_latent()) register_module("styles", styles_);
    const GrowthStage start = GrowthSchedule(spec_.growth_schedule, spec_.output_resolution).stage_at(0);
    set_stage(start.resolution, start.fade_alpha);
}

torch::Tensor GeneratorImpl::map(const torch::Tensor& z) {
    if (!spec_.has_intermediate_latent()) return z;
    return mapping_->forward(z);
}

void GeneratorImpl::set_stage(int resolution, double alpha) {
    level_index(spec_, resolution);
    require(alpha >= 0.0 && alpha <= 1.0, "fade alpha must lie in [0,1]");
    active_resolution_ = resolution;
    fade_alpha_ = alpha;
}

torch::Tensor GeneratorImpl::block_forward(std::size_t level, torch::Tensor x, const LatentBatch& batch,
                                           const torch::Tensor& w) {
    const bool mapped = spec_.has_intermediate_latent();
    const torch::Tensor noise = mapped && level < batch.noise.size() ? batch.noise[level] : torch::Tensor();
    const torch::Tensor strength = mapped ? noise_strength_[level] : torch::Tensor();
    if (level == 0) {
        x = stem_(w).view({-1, spec_.channels_at(4), 4, 4});
        if (noise.defined()) x = x + strength * noise;
        x = pixel_norm(spec_.architecture == Architecture::dcgan ? torch::relu(x) : lrelu(x));
    } else {
        x = blocks_[level - 1]->as<UpBlock>()->forward(x, noise, strength);
    }
    if (mapped) {
        const auto style = styles_[level]->as<nn::Linear>()->forward(w);
        x = x * (1.0 + style.unsqueeze(2).unsqueeze(3));
    }
    return x;
}

torch::Tensor GeneratorImpl::synthesize(const LatentBatch& batch, int resolution, double alpha) {
    require(batch.z.defined() && batch.z.dim() == 2, "latent batch needs an N x d z tensor");
    require(batch.z.size(1) == spec_.latent_dim, "latent dimension does not match the generator");
    const int last = level_index(spec_, resolution);
    require(alpha >= 0.0 && alpha <= 1.0, "fade alpha must lie in [0,1]");
    torch::Tensor w;
    if (batch.w.defined()) {
        require(spec_.has_intermediate_latent(), "this generator has no intermediate latent space");
        require(batch.w.size(1) == spec_.latent_dim, "intermediate latent dimension does not match");
        w = batch.w;
    } else {
        w = map(batch.z);
    }
    if (!batch.noise.empty()) {
        require(spec_.has_intermediate_latent(), "this generator takes no noise maps");
        require(batch.noise.size() == spec_.levels().size(), "one noise map per synthesis level is required");
    }

    torch::Tensor x, previous;
    for (int level = 0; level <= last; ++level) {
        previous = x;
        x = block_forward(level, x, batch, w);
    }
    auto out = torch::tanh(to_rgb_[last]->as<nn::Conv2d>()->forward(x));
    if (alpha < 1.0 && last > 0) {
        const auto low = torch::tanh(to_rgb_[last - 1]->as<nn::Conv2d>()->forward(previous));
        out = (1.0 - alpha) * upsample2(low) + alpha * out;
    }
    return out;
}

torch::Tensor GeneratorImpl::forward(const LatentBatch& batch) {
    return upsample_to(synthesize(batch, active_resolution_, fade_alpha_), spec_.output_resolution);
}

CriticImpl::CriticImpl(const GeneratorSpec& spec) : spec_(spec) {
    spec_.validate();
    const auto levels = spec_.levels();
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const int ch = spec_.channels_at(levels[i]);
        from_rgb_->push_back(conv(3, ch, 1));
        if (i > 0) blocks_->push_back(DownBlock(spec_.architecture, ch, spec_.channels_at(levels[i - 1])));
    }
    register_module("from_rgb", from_rgb_);
    register_module("blocks", blocks_);
    feature_ = register_module("feature", nn::Linear(spec_.channels_at(4) * 16, spec_.critic_feature_width));
    head_ = register_module("head", nn::Linear(spec_.critic_feature_width, 1));
    const GrowthStage start = GrowthSchedule(spec_.growth_schedule, spec_.output_resolution).stage_at(0);
    set_stage(start.resolution, start.fade_alpha);
}

void CriticImpl::set_stage(int resolution, double alpha) {
    level_index(spec_, resolution);
    require(alpha >= 0.0 && alpha <= 1.0, "fade alpha must lie in [0,1]");
    active_resolution_ = resolution;
    fade_alpha_ = alpha;
}

torch::Tensor CriticImpl::features(const torch::Tensor& images, int resolution, double alpha) {
    require(images.dim() == 4 && images.size(1) == 3, "critic expects N x 3 x S x S images");
    require(images.size(2) == resolution && images.size(3) == resolution,
            "image size does not match the critic resolution");
    const int top = level_index(spec_, resolution);
    auto h = lrelu(from_rgb_[top]->as<nn::Conv2d>()->forward(images));
    if (top > 0) {
        h = blocks_[top - 1]->as<DownBlock>()->forward(h);
        if (alpha < 1.0) {
            const auto low = lrelu(from_rgb_[top - 1]->as<nn::Conv2d>()->forward(torch::avg_pool2d(images, 2)));
            h = alpha * h + (1.0 - alpha) * low;
        }
        for (int level = top - 1; level > 0; --level) h = blocks_[level - 1]->as<DownBlock>()->forward(h);
    }
    return lrelu(feature_(h.flatten(1)));
}

torch::Tensor CriticImpl::score(const torch::Tensor& images, int resolution, double alpha) {
    return head_(features(images, resolution, alpha)).squeeze(1);
}

torch::Tensor CriticImpl::forward(const torch::Tensor& images) { return score(images, active_resolution_, fade_alpha_); }

torch::Tensor generate(Generator& generator, const std::vector<LatentCode>& codes) {
    torch::NoGradGuard no_grad;
    return generator->forward(to_batch(codes));
}

torch::Tensor critic_features(Critic& critic, const torch::Tensor& images) {
    return critic->features(images, critic->active_resolution(), critic->fade_alpha());
}

torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               std::uint64_t seed) {
    require(real.sizes() == fake.sizes(), "real and fake batches differ in shape");
    require(real.dim() >= 2 && real.size(0) >= 1, "gradient penalty needs a non-empty batch");
    const auto n = real.size(0);
    Rng rng(seed);
    std::vector<float> eps(n);
    for (auto& e : eps) e = static_cast<float>(rng.uniform());
    std::vector<int64_t> shape(real.dim(), 1);
    shape[0] = n;
    const auto e = torch::from_blob(eps.data(), shape, torch::kFloat32).clone();
    auto mixed = (e * real.detach() + (1.0f - e) * fake.detach()).requires_grad_(true);
    const auto out = critic(mixed);
    torch::Tensor grad;
    if (out.requires_grad()) {
        grad = torch::autograd::grad({out.sum()}, {mixed}, {}, /*retain_graph=*/true, /*create_graph=*/true,
                                     /*allow_unused=*/true)[0];
    }
    if (!grad.defined()) grad = torch::zeros_like(mixed);
    // Double precision keeps the penalty exact for large gradient norms.
    const auto norms = grad.to(torch::kFloat64).flatten(1).norm(2, 1);
    return (norms - 1.0).pow(2).mean();
}

torch::Tensor gradient_penalty(Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               std::uint64_t seed) {
    return gradient_penalty([&](const torch::Tensor& x) { return critic->forward(x); }, real, fake, seed);
}

torch::Tensor fade_blend(const torch::Tensor& low_resolution, const torch::Tensor& full_resolution, double alpha) {
    require(alpha >= 0.0 && alpha <= 1.0, "fade alpha must lie in [0,1]");
    require(low_resolution.dim() == 4 && full_resolution.dim() == 4, "fade blend expects NCHW tensors");
    require(low_resolution.size(0) == full_resolution.size(0) && low_resolution.size(1) == full_resolution.size(1),
            "fade blend inputs differ in batch or channel count");
    const auto full = full_resolution.size(2);
    const auto low = low_resolution.size(2);
    require(full_resolution.size(3) == full && low_resolution.size(3) == low && low > 0 && full % low == 0,
            "fade blend inputs are not spatially aligned");
    torch::NoGradGuard no_grad;
    const auto up = upsample_to(low_resolution.to(torch::kFloat32), full).contiguous();
    const auto target = full_resolution.to(torch::kFloat32).contiguous();
    auto out = torch::empty_like(target);
    simd::kernels().lerp(up.data_ptr<float>(), target.data_ptr<float>(), static_cast<float>(alpha),
                         static_cast<std::size_t>(target.numel()), out.data_ptr<float>());
    return out;
}

}  // namespace pathogan
