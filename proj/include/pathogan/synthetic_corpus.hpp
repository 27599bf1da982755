#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pathogan/image.hpp"

namespace pathogan {

using Rgb = std::array<std::uint8_t, 3>;

// Procedural stain texture: a noisy stroma colour sprinkled with elliptical
// nuclei of a darker hue.
struct TextureParams {
    Rgb stroma;
    Rgb nucleus;
    double nucleus_density;  // nuclei per pixel
    double nucleus_radius_min;
    double nucleus_radius_max;
    double noise_amplitude;  // uniform per-channel jitter, +-amplitude

    static TextureParams normal_default();
    static TextureParams tumor_default();
};

struct CorpusSpec {
    int n_slides = 16;
    int slide_size = 1024;
    TextureParams normal = TextureParams::normal_default();
    TextureParams tumor = TextureParams::tumor_default();
    double tumor_region_fraction = 0.2;
    std::uint64_t seed = 7;

    // Stroma colours of the two classes must differ by at least this much
    // (Euclidean distance in 8-bit RGB).
    static constexpr double kMinPaletteDistance = 24.0;

    void validate() const;
};

struct SyntheticSlide {
    std::string slide_id;
    Image8 pixels;
    Mask tumor;
};

struct CorpusSlideEntry {
    std::string slide_id;
    std::string slide_path;  // relative to the corpus directory
    std::string mask_path;
    std::size_t tumor_pixels = 0;
};

std::string slide_name(int index);

// Deterministic in (spec.seed, index); slides are independent of each other.
SyntheticSlide generate_slide(const CorpusSpec& spec, int index);

// Writes slides/<id>.png, masks/<id>.png and corpus.tsv under out_dir.
std::vector<CorpusSlideEntry> generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir);
std::vector<CorpusSlideEntry> read_corpus_index(const std::filesystem::path& corpus_dir);

}  // namespace pathogan
