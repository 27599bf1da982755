#include "pathogan/synthetic_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pathogan/error.hpp"
#include "pathogan/rng.hpp"

namespace pathogan {

TextureParams TextureParams::normal_default() {
    return {{236, 168, 204}, {96, 62, 156}, 0.0025, 2.0, 3.5, 10.0};
}

TextureParams TextureParams::tumor_default() {
    return {{206, 130, 200}, {64, 34, 124}, 0.008, 3.0, 5.5, 10.0};
}

void CorpusSpec::validate() const {
    require(n_slides >= 1, "corpus needs at least one slide");
    require(slide_size >= 64, "slide size must be >= 64");
    require(tumor_region_fraction >= 0.0 && tumor_region_fraction <= 1.0, "tumor_region_fraction must lie in [0,1]");
    double d2 = 0.0;
    for (int c = 0; c < 3; ++c) {
        const double d = static_cast<double>(normal.stroma[c]) - tumor.stroma[c];
        d2 += d * d;
    }
    require(std::sqrt(d2) >= kMinPaletteDistance, "class stroma palettes are too close");
    for (const auto* t : {&normal, &tumor}) {
        require(t->nucleus_density >= 0.0 && t->nucleus_density < 1.0, "nucleus density must lie in [0,1)");
        require(t->nucleus_radius_min > 0.0 && t->nucleus_radius_max >= t->nucleus_radius_min,
                "nucleus radius range is invalid");
        require(t->noise_amplitude >= 0.0, "noise amplitude must be non-negative");
    }
}

std::string slide_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "slide_%03d", index);
    return buf;
}

namespace {

struct Disc {
    double cy, cx, r;
};

std::uint8_t jitter(std::uint8_t base, double amplitude, Rng& rng) {
    const double v = base + rng.uniform(-amplitude, amplitude);
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

void paint_disc(Mask& mask, const Disc& d, std::size_t& count) {
    const int y0 = std::max(0, static_cast<int>(std::floor(d.cy - d.r)));
    const int y1 = std::min(mask.height - 1, static_cast<int>(std::ceil(d.cy + d.r)));
    const int x0 = std::max(0, static_cast<int>(std::floor(d.cx - d.r)));
    const int x1 = std::min(mask.width - 1, static_cast<int>(std::ceil(d.cx + d.r)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dy = y - d.cy;
            const double dx = x - d.cx;
            if (dy * dy + dx * dx <= d.r * d.r && !mask.at(y, x)) {
                mask.at(y, x) = 1;
                ++count;
            }
        }
}

void paint_nuclei(Image8& img, const Mask& region, const TextureParams& t, Rng& rng) {
    const double area = static_cast<double>(img.height) * img.width;
    const auto n = static_cast<std::size_t>(std::llround(t.nucleus_density * area));
    for (std::size_t k = 0; k < n; ++k) {
        const double cy = rng.uniform(0.0, img.height);
        const double cx = rng.uniform(0.0, img.width);
        const double ry = rng.uniform(t.nucleus_radius_min, t.nucleus_radius_max);
        const double rx = rng.uniform(t.nucleus_radius_min, t.nucleus_radius_max);
        const double theta = rng.uniform(0.0, std::numbers::pi);
        const Rgb tone = {jitter(t.nucleus[0], t.noise_amplitude, rng), jitter(t.nucleus[1], t.noise_amplitude, rng),
                          jitter(t.nucleus[2], t.noise_amplitude, rng)};
        const int iy = static_cast<int>(cy);
        const int ix = static_cast<int>(cx);
        if (!region.at(iy, ix)) continue;
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        const double reach = std::max(rx, ry);
        const int y0 = std::max(0, static_cast<int>(cy - reach));
        const int y1 = std::min(img.height - 1, static_cast<int>(cy + reach) + 1);
        const int x0 = std::max(0, static_cast<int>(cx - reach));
        const int x1 = std::min(img.width - 1, static_cast<int>(cx + reach) + 1);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dy = y + 0.5 - cy;
                const double dx = x + 0.5 - cx;
                const double u = (c * dx + s * dy) / rx;
                const double v = (-s * dx + c * dy) / ry;
                if (u * u + v * v <= 1.0 && region.at(y, x)) {
                    auto* p = img.px(y, x);
                    p[0] = tone[0];
                    p[1] = tone[1];
                    p[2] = tone[2];
                }
            }
    }
}

}  // namespace

SyntheticSlide generate_slide(const CorpusSpec& spec, int index) {
    spec.validate();
    const int size = spec.slide_size;
    SyntheticSlide slide{slide_name(index), Image8(size, size, 3), Mask(size, size)};
    Rng rng(derive_seed(spec.seed, slide.slide_id));

    // Tissue footprint: a union of large discs over the glass.
    std::vector<Disc> tissue_discs;
    Mask tissue(size, size);
    std::size_t tissue_pixels = 0;
    const int n_tissue = 4 + static_cast<int>(rng.below(3));
    for (int k = 0; k < n_tissue; ++k) {
        const Disc d{rng.uniform(0.25, 0.75) * size, rng.uniform(0.25, 0.75) * size, rng.uniform(0.22, 0.36) * size};
        tissue_discs.push_back(d);
        paint_disc(tissue, d, tissue_pixels);
    }

    // Tumor region: small discs seeded inside the tissue until the target area is reached.
    const double target = spec.tumor_region_fraction * static_cast<double>(size) * size;
    std::size_t tumor_pixels = 0;
    if (target > 0.0) {
        const double radius = std::max(4.0, std::sqrt(target / (6.0 * std::numbers::pi)));
        // Capped because fractions near 1 cannot be reached from inside the tissue.
        for (int attempt = 0; static_cast<double>(tumor_pixels) < target && attempt < 100000; ++attempt) {
            const auto& host = tissue_discs[rng.below(tissue_discs.size())];
            const double rho = host.r * 0.8 * std::sqrt(rng.uniform());
            const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
            paint_disc(slide.tumor, {host.cy + rho * std::sin(phi), host.cx + rho * std::cos(phi), radius}, tumor_pixels);
        }
    }

    Mask normal_region(size, size);
    for (std::size_t i = 0; i < tissue.size(); ++i) normal_region.data[i] = tissue.data[i] && !slide.tumor.data[i];

    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            auto* p = slide.pixels.px(y, x);
            if (slide.tumor.at(y, x)) {
                for (int c = 0; c < 3; ++c) p[c] = jitter(spec.tumor.stroma[c], spec.tumor.noise_amplitude, rng);
            } else if (tissue.at(y, x)) {
                for (int c = 0; c < 3; ++c) p[c] = jitter(spec.normal.stroma[c], spec.normal.noise_amplitude, rng);
            } else {
                const std::uint8_t glass[3] = {244, 243, 246};
                for (int c = 0; c < 3; ++c) p[c] = jitter(glass[c], 3.0, rng);
            }
        }
    paint_nuclei(slide.pixels, normal_region, spec.normal, rng);
    paint_nuclei(slide.pixels, slide.tumor, spec.tumor, rng);
    return slide;
}

std::vector<CorpusSlideEntry> generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "slides", ec);
    std::filesystem::create_directories(out_dir / "masks", ec);
    if (ec) throw IoError("cannot create corpus directory " + out_dir.string() + ": " + ec.message());

    std::vector<CorpusSlideEntry> entries;
    for (int i = 0; i < spec.n_slides; ++i) {
        const SyntheticSlide slide = generate_slide(spec, i);
        CorpusSlideEntry e{slide.slide_id, "slides/" + slide.slide_id + ".png", "masks/" + slide.slide_id + ".png",
                           slide.tumor.count()};
        write_png(out_dir / e.slide_path, slide.pixels);
        write_mask_png(out_dir / e.mask_path, slide.tumor);
        entries.push_back(std::move(e));
    }
    std::ofstream index(out_dir / "corpus.tsv", std::ios::binary);
    if (!index) throw IoError("cannot write corpus index in " + out_dir.string());
    index << "# seed=" << spec.seed << " slides=" << spec.n_slides << " size=" << spec.slide_size
          << " tumor_frac=" << spec.tumor_region_fraction << '\n';
    for (const auto& e : entries)
        index << e.slide_id << '\t' << e.slide_path << '\t' << e.mask_path << '\t' << e.tumor_pixels << '\n';
    return entries;
}

std::vector<CorpusSlideEntry> read_corpus_index(const std::filesystem::path& corpus_dir) {
    std::ifstream in(corpus_dir / "corpus.tsv");
    if (!in) throw IoError("missing corpus index in " + corpus_dir.string());
    std::vector<CorpusSlideEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        CorpusSlideEntry e;
        std::getline(fields, e.slide_id, '\t');
        std::getline(fields, e.slide_path, '\t');
        std::getline(fields, e.mask_path, '\t');
        fields >> e.tumor_pixels;
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace pathogan
