#include "pathogan/tiling.hpp"

#include <algorithm>
#include <sstream>

#include "pathogan/error.hpp"
#include "pathogan/image.hpp"
#include "pathogan/log.hpp"

namespace pathogan {

std::string TilingConfig::describe() const {
    std::ostringstream out;
    out.precision(17);
    out << filter.describe() << ";size=" << size << ";stride=" << effective_stride() << ";high=" << coverage.high
        << ";low=" << coverage.low << ";tumor_threshold=" << tumor_threshold
        << ";min_tissue_fraction=" << min_tissue_fraction;
    return out.str();
}

std::vector<PatchRecord> tile_slide(const SlideRaster& slide, const std::optional<Mask>& tumor_mask,
                                    const TilingConfig& cfg) {
    require(cfg.min_tissue_fraction >= 0.0 && cfg.min_tissue_fraction <= 1.0, "min_tissue_fraction must lie in [0,1]");
    const TissueMask mask = compute_tissue_mask(slide, cfg.filter);
    auto patches = extract_patches(slide, mask, cfg.size, cfg.effective_stride(), cfg.coverage);
    if (tumor_mask) patches = annotate_labels(std::move(patches), *tumor_mask, cfg.tumor_threshold);
    if (cfg.min_tissue_fraction > 0.0)
        std::erase_if(patches, [&](const PatchRecord& p) { return p.tissue_fraction < cfg.min_tissue_fraction; });
    return patches;
}

std::string tile_file_name(const PatchRecord& patch) {
    return patch.slide_id + "_" + std::to_string(patch.row) + "_" + std::to_string(patch.col) + ".png";
}

Manifest tile_directory(const std::filesystem::path& slides_dir, const std::optional<std::filesystem::path>& masks_dir,
                        const std::filesystem::path& out_dir, const TilingConfig& cfg, std::uint64_t seed) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(slides_dir)) throw IoError("slide directory not found: " + slides_dir.string());
    std::vector<fs::path> slides;
    for (const auto& e : fs::directory_iterator(slides_dir))
        if (e.is_regular_file() && e.path().extension() == ".png") slides.push_back(e.path());
    std::sort(slides.begin(), slides.end());
    if (slides.empty()) throw InvalidInput("no PNG slides in " + slides_dir.string());

    std::error_code ec;
    fs::create_directories(out_dir / "tiles", ec);
    if (ec) throw IoError("cannot create " + (out_dir / "tiles").string() + ": " + ec.message());

    Manifest manifest;
    manifest.seed = seed;
    manifest.config_hash = config_hash(cfg.describe());
    for (const auto& path : slides) {
        SlideRaster slide{read_png(path), std::nullopt, path.stem().string()};
        if (slide.pixels.channels != 3) throw InvalidInput("slide is not RGB: " + path.string());
        std::optional<Mask> tumor;
        if (masks_dir) {
            const auto mask_path = *masks_dir / path.filename();
            if (fs::exists(mask_path)) tumor = read_mask_png(mask_path);
        }
        const auto patches = tile_slide(slide, tumor, cfg);
        for (const auto& p : patches) {
            const std::string rel = "tiles/" + tile_file_name(p);
            write_png(out_dir / rel, p.pixels);
            manifest.entries.push_back({rel, p.slide_id, p.row, p.col, p.tissue_fraction, p.coverage, p.label});
        }
        log::debug("tiled " + slide.slide_id + ": " + std::to_string(patches.size()) + " patches");
    }
    write_manifest(out_dir / "manifest.tsv", manifest);
    return manifest;
}

}  // namespace pathogan
