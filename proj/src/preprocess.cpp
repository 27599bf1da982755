#include "pathogan/preprocess.hpp"

#include <algorithm>
#include <sstream>

#include "pathogan/error.hpp"
#include "pathogan/simd/kernels.hpp"

namespace pathogan {

std::string FilterParams::describe() const {
    std::ostringstream out;
    out << "sat>=" << min_saturation << ";green<=" << max_green << ";close=" << closing_radius
        << ";min_area=" << min_object_area;
    return out.str();
}

std::string to_string(CoverageClass c) {
    switch (c) {
    case CoverageClass::high:
        return "high";
    case CoverageClass::mid:
        return "mid";
    case CoverageClass::low:
        return "low";
    }
    return "low";
}

std::string to_string(PatchLabel l) { return l == PatchLabel::tumor ? "tumor" : "normal"; }

CoverageClass parse_coverage(const std::string& text) {
    if (text == "high") return CoverageClass::high;
    if (text == "mid") return CoverageClass::mid;
    if (text == "low") return CoverageClass::low;
    throw InvalidInput("unknown coverage class '" + text + "'");
}

PatchLabel parse_label(const std::string& text) {
    if (text == "normal") return PatchLabel::normal;
    if (text == "tumor") return PatchLabel::tumor;
    throw InvalidInput("unknown label '" + text + "'");
}

CoverageClass classify_coverage(double fraction, const CoverageThresholds& thresholds) {
    if (fraction >= thresholds.high) return CoverageClass::high;
    if (fraction <= thresholds.low) return CoverageClass::low;
    return CoverageClass::mid;
}

bool is_patch_size(int size) { return size == 64 || size == 128 || size == 256 || size == 512; }

namespace {

void validate(const FilterParams& p) {
    require(p.min_saturation >= 0.0f && p.min_saturation <= 1.0f, "min_saturation must lie in [0,1]");
    require(p.max_green >= 0 && p.max_green <= 255, "max_green must lie in [0,255]");
    require(p.closing_radius >= 0, "closing radius must be non-negative");
    require(p.min_object_area >= 0, "minimum object area must be non-negative");
}

// Half-widths of the horizontal spans making up a digital disk.
std::vector<int> disk_spans(int radius) {
    std::vector<int> spans(2 * radius + 1);
    for (int dy = -radius; dy <= radius; ++dy) {
        int half = 0;
        while ((half + 1) * (half + 1) + dy * dy <= radius * radius) ++half;
        spans[dy + radius] = half;
    }
    return spans;
}

// Dilation of `mask` by a disk, with out-of-bounds treated as `outside`.
Mask morph(const Mask& mask, int radius, bool dilate) {
    if (radius == 0) return mask;
    const auto spans = disk_spans(radius);
    const int h = mask.height;
    const int w = mask.width;
    // For erosion work on the complement: erode(A) = not dilate(not A), where
    // the complement has nothing outside the raster.
    Mask src = mask;
    if (!dilate)
        for (auto& v : src.data) v = v ? 0 : 1;

    // Row-wise running OR of every span width, then combine across rows.
    Mask out(h, w);
    std::vector<int> prefix(w + 1);
    for (int y = 0; y < h; ++y) {
        for (int dy = -radius; dy <= radius; ++dy) {
            const int sy = y + dy;
            if (sy < 0 || sy >= h) continue;
            const int half = spans[dy + radius];
            prefix[0] = 0;
            for (int x = 0; x < w; ++x) prefix[x + 1] = prefix[x] + src.at(sy, x);
            for (int x = 0; x < w; ++x) {
                if (out.at(y, x)) continue;
                const int lo = std::max(0, x - half);
                const int hi = std::min(w, x + half + 1);
                if (prefix[hi] - prefix[lo] > 0) out.at(y, x) = 1;
            }
        }
    }
    if (!dilate)
        for (auto& v : out.data) v = v ? 0 : 1;
    return out;
}

}  // namespace

Mask classify_tissue_pixels(const Image8& rgb, const FilterParams& params) {
    require(rgb.channels == 3, "tissue classification needs an RGB raster");
    validate(params);
    Mask out(rgb.height, rgb.width);
    simd::kernels().classify_tissue(rgb.data.data(), rgb.pixel_count(), params.min_saturation,
                                    static_cast<std::uint8_t>(params.max_green), out.data.data());
    return out;
}

Mask binary_dilate(const Mask& mask, int radius) {
    require(radius >= 0, "radius must be non-negative");
    return morph(mask, radius, true);
}

Mask binary_erode(const Mask& mask, int radius) {
    require(radius >= 0, "radius must be non-negative");
    return morph(mask, radius, false);
}

Mask binary_close(const Mask& mask, int radius) { return binary_erode(binary_dilate(mask, radius), radius); }

Mask remove_small_objects(const Mask& mask, int min_area) {
    require(min_area >= 0, "minimum area must be non-negative");
    Mask out = mask;
    if (min_area <= 1) return out;
    const int h = mask.height;
    const int w = mask.width;
    std::vector<std::uint8_t> seen(mask.size(), 0);
    std::vector<int> component;
    std::vector<int> stack;
    for (int start = 0; start < static_cast<int>(mask.size()); ++start) {
        if (!mask.data[start] || seen[start]) continue;
        component.clear();
        stack.assign(1, start);
        seen[start] = 1;
        while (!stack.empty()) {
            const int idx = stack.back();
            stack.pop_back();
            component.push_back(idx);
            const int y = idx / w;
            const int x = idx % w;
            const int neighbours[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
            for (const auto& n : neighbours) {
                if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
                const int j = n[0] * w + n[1];
                if (mask.data[j] && !seen[j]) {
                    seen[j] = 1;
                    stack.push_back(j);
                }
            }
        }
        if (static_cast<int>(component.size()) < min_area)
            for (int idx : component) out.data[idx] = 0;
    }
    return out;
}

TissueMask compute_tissue_mask(const SlideRaster& slide, const FilterParams& params) {
    Mask raw = classify_tissue_pixels(slide.pixels, params);
    Mask closed = binary_close(raw, params.closing_radius);
    return {remove_small_objects(closed, params.min_object_area), params};
}

double tissue_fraction(const Mask& patch) {
    require(patch.size() > 0, "tissue fraction of an empty patch");
    return static_cast<double>(patch.count()) / static_cast<double>(patch.size());
}

int grid_positions(int extent, int size, int stride) {
    if (extent < size) return 0;
    return (extent - size) / stride + 1;
}

std::vector<PatchRecord> extract_patches(const SlideRaster& slide, const TissueMask& mask, int size,
                                         int stride, const CoverageThresholds& thresholds) {
    require(is_patch_size(size), "patch size must be one of 64, 128, 256, 512");
    require(stride >= 1 && stride <= size, "stride must lie in [1, size]");
    const Image8& px = slide.pixels;
    require(px.channels == 3, "slide must be RGB");
    require(px.height >= size && px.width >= size, "patch size larger than slide");
    require(mask.mask.height == px.height && mask.mask.width == px.width, "mask not aligned to slide");

    const int rows = grid_positions(px.height, size, stride);
    const int cols = grid_positions(px.width, size, stride);
    const double area = static_cast<double>(size) * size;
    std::vector<PatchRecord> out;
    out.reserve(static_cast<std::size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            PatchRecord rec;
            rec.row = i * stride;
            rec.col = j * stride;
            rec.pixels = px.crop(rec.row, rec.col, size, size);
            rec.tissue_fraction = static_cast<double>(mask.mask.count_window(rec.row, rec.col, size, size)) / area;
            rec.coverage = classify_coverage(rec.tissue_fraction, thresholds);
            rec.slide_id = slide.slide_id;
            out.push_back(std::move(rec));
        }
    }
    return out;
}

std::vector<PatchRecord> annotate_labels(std::vector<PatchRecord> patches, const Mask& tumor_mask,
                                         double tumor_threshold) {
    require(tumor_threshold >= 0.0 && tumor_threshold <= 1.0, "tumor threshold must lie in [0,1]");
    for (auto& p : patches) {
        const int s = p.size();
        if (p.row < 0 || p.col < 0 || p.row + s > tumor_mask.height || p.col + s > tumor_mask.width)
            throw InvalidInput("tumor mask not aligned with patch grid");
        const double fraction =
            static_cast<double>(tumor_mask.count_window(p.row, p.col, s, s)) / (static_cast<double>(s) * s);
        p.label = fraction >= tumor_threshold ? PatchLabel::tumor : PatchLabel::normal;
    }
    return patches;
}

}  // namespace pathogan
