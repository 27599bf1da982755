#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pathogan/dataset.hpp"
#include "pathogan/preprocess.hpp"

namespace pathogan {

struct TilingConfig {
    FilterParams filter;
    int size = 64;
    int stride = 0;  // 0: equal to size
    CoverageThresholds coverage;
    double tumor_threshold = 0.5;
    // Tiles below this tissue fraction are not written (0 keeps every grid position).
    double min_tissue_fraction = 0.0;

    int effective_stride() const { return stride > 0 ? stride : size; }
    // Canonical text of every parameter, hashed into manifests.
    std::string describe() const;
};

// Mask, extract and (when a tumor mask is given) label one slide.
std::vector<PatchRecord> tile_slide(const SlideRaster& slide, const std::optional<Mask>& tumor_mask,
                                    const TilingConfig& cfg);

std::string tile_file_name(const PatchRecord& patch);

// Tiles every PNG in `slides_dir`; a same-named PNG in `masks_dir` supplies
// the tumor mask. Writes tiles/<slide>_<row>_<col>.png and manifest.tsv under
// out_dir and returns the manifest.
Manifest tile_directory(const std::filesystem::path& slides_dir, const std::optional<std::filesystem::path>& masks_dir,
                        const std::filesystem::path& out_dir, const TilingConfig& cfg, std::uint64_t seed = 0);

}  // namespace pathogan
