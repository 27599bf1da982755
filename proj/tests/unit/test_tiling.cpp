#include <filesystem>

#include "doctest.h"
#include "pathogan/error.hpp"
#include "pathogan/synthetic_corpus.hpp"
#include "pathogan/tiling.hpp"

using namespace pathogan;
namespace fs = std::filesystem;

TEST_CASE("tile_slide covers the grid and labels from the tumor mask") {
    CorpusSpec spec;
    spec.n_slides = 1;
    spec.slide_size = 256;
    const auto s = generate_slide(spec, 0);
    TilingConfig cfg;
    const auto patches = tile_slide({s.pixels, std::nullopt, s.slide_id}, s.tumor, cfg);
    CHECK(patches.size() == 16);
    for (const auto& p : patches) {
        REQUIRE(p.label.has_value());
        const double tumor = static_cast<double>(s.tumor.count_window(p.row, p.col, 64, 64)) / (64.0 * 64.0);
        CHECK((*p.label == PatchLabel::tumor) == (tumor >= cfg.tumor_threshold));
        CHECK(p.pixels.height == 64);
    }
    CHECK(tile_file_name(patches[5]) == "slide_000_64_64.png");

    cfg.stride = 32;
    CHECK(tile_slide({s.pixels, std::nullopt, s.slide_id}, std::nullopt, cfg).size() == 49);
    cfg.stride = 0;
    cfg.min_tissue_fraction = 1.1;
    CHECK_THROWS_AS(tile_slide({s.pixels, std::nullopt, s.slide_id}, std::nullopt, cfg), InvalidInput);
}

TEST_CASE("tile_directory writes tiles and a manifest") {
    const auto root = fs::temp_directory_path() / "pathogan_tiling";
    fs::remove_all(root);
    CorpusSpec spec;
    spec.n_slides = 2;
    spec.slide_size = 128;
    generate_corpus(spec, root / "corpus");
    TilingConfig cfg;
    const auto m = tile_directory(root / "corpus" / "slides", root / "corpus" / "masks", root / "out", cfg, 3);
    CHECK(m.entries.size() == 8);
    CHECK(m.seed == 3);
    CHECK(m.config_hash == config_hash(cfg.describe()));
    CHECK(read_manifest(root / "out" / "manifest.tsv") == m);
    validate_manifest(m, root / "out");
    for (const auto& e : m.entries) {
        CHECK(e.label.has_value());
        CHECK(fs::exists(root / "out" / e.path));
    }
    const auto unlabeled = tile_directory(root / "corpus" / "slides", std::nullopt, root / "out2", cfg);
    for (const auto& e : unlabeled.entries) CHECK_FALSE(e.label.has_value());

    CHECK_THROWS_AS(tile_directory(root / "missing", std::nullopt, root / "out3", cfg), IoError);
    fs::create_directories(root / "empty");
    CHECK_THROWS_AS(tile_directory(root / "empty", std::nullopt, root / "out3", cfg), InvalidInput);
    fs::remove_all(root);
}
