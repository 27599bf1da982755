#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pathogan/image.hpp"

namespace pathogan {

struct SlideRaster {
    Image8 pixels;               // H x W x 3
    std::optional<double> mpp;   // microns per pixel, when known
    std::string slide_id;
};

// Stain/background filter. A pixel is tissue iff its HSV saturation is at
// least min_saturation and its green channel is at most max_green; the raw
// classification is then closed with a disk of closing_radius and connected
// components (4-connectivity) smaller than min_object_area are dropped.
struct FilterParams {
    float min_saturation = 0.07f;
    int max_green = 200;
    int closing_radius = 3;
    int min_object_area = 256;

    std::string describe() const;
};

struct TissueMask {
    Mask mask;
    FilterParams params;
};

enum class CoverageClass { high, mid, low };
enum class PatchLabel { normal, tumor };

std::string to_string(CoverageClass c);
std::string to_string(PatchLabel l);
CoverageClass parse_coverage(const std::string& text);
PatchLabel parse_label(const std::string& text);

struct CoverageThresholds {
    double high = 0.9;  // tissue_fraction >= high
    double low = 0.1;   // tissue_fraction <= low
};

CoverageClass classify_coverage(double tissue_fraction, const CoverageThresholds& thresholds = {});

struct PatchRecord {
    Image8 pixels;  // S x S x 3
    int row = 0;
    int col = 0;
    double tissue_fraction = 0.0;
    CoverageClass coverage = CoverageClass::low;
    std::optional<PatchLabel> label;
    std::string slide_id;

    int size() const { return pixels.height; }
};

bool is_patch_size(int size);

// Raw per-pixel stain test, before closing and small-object removal.
Mask classify_tissue_pixels(const Image8& rgb, const FilterParams& params);

Mask binary_dilate(const Mask& mask, int radius);
// Out-of-bounds neighbours count as set, so borders do not erode.
Mask binary_erode(const Mask& mask, int radius);
Mask binary_close(const Mask& mask, int radius);
Mask remove_small_objects(const Mask& mask, int min_area);

TissueMask compute_tissue_mask(const SlideRaster& slide, const FilterParams& params = {});

double tissue_fraction(const Mask& patch);

// Number of grid windows of `size` with `stride` along an axis of `extent`.
int grid_positions(int extent, int size, int stride);

std::vector<PatchRecord> extract_patches(const SlideRaster& slide, const TissueMask& mask, int size,
                                         int stride, const CoverageThresholds& thresholds = {});

std::vector<PatchRecord> annotate_labels(std::vector<PatchRecord> patches, const Mask& tumor_mask,
                                         double tumor_threshold = 0.5);

}  // namespace pathogan
