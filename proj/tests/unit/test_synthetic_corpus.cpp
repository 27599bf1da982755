#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pathogan/error.hpp"
#include "pathogan/preprocess.hpp"
#include "pathogan/synthetic_corpus.hpp"

using namespace pathogan;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("zero tumor fraction paints no tumor") {
    CorpusSpec spec;
    spec.slide_size = 128;
    spec.tumor_region_fraction = 0.0;
    for (int i = 0; i < 3; ++i) CHECK(generate_slide(spec, i).tumor.count() == 0);
}

TEST_CASE("painted tumor area tracks the requested fraction") {
    CorpusSpec spec;
    spec.slide_size = 256;
    spec.tumor_region_fraction = 0.2;
    double total = 0.0;
    const int slides = 10;
    for (int i = 0; i < slides; ++i) total += static_cast<double>(generate_slide(spec, i).tumor.count());
    const double target = 0.2 * 256.0 * 256.0;
    CHECK(total / slides >= 0.9 * target);
    CHECK(total / slides <= 1.1 * target);
}

TEST_CASE("corpus output is byte-identical under a fixed seed") {
    CorpusSpec spec;
    spec.n_slides = 2;
    spec.slide_size = 128;
    const auto base = std::filesystem::temp_directory_path() / "pathogan_corpus_test";
    std::filesystem::remove_all(base);
    const auto a = generate_corpus(spec, base / "a");
    const auto b = generate_corpus(spec, base / "b");
    REQUIRE(a.size() == 2);
    for (const auto& e : a) {
        CHECK(slurp(base / "a" / e.slide_path) == slurp(base / "b" / e.slide_path));
        CHECK(slurp(base / "a" / e.mask_path) == slurp(base / "b" / e.mask_path));
    }
    CHECK(slurp(base / "a" / "corpus.tsv") == slurp(base / "b" / "corpus.tsv"));
    const auto index = read_corpus_index(base / "a");
    REQUIRE(index.size() == 2);
    CHECK(index[1].tumor_pixels == a[1].tumor_pixels);
    CHECK(read_mask_png(base / "a" / a[0].mask_path).count() == a[0].tumor_pixels);
    CHECK(read_png(base / "a" / a[0].slide_path) == generate_slide(spec, 0).pixels);
    std::filesystem::remove_all(base);
}

TEST_CASE("tissue masking finds the synthetic tissue") {
    CorpusSpec spec;
    spec.slide_size = 256;
    const auto slide = generate_slide(spec, 1);
    const auto mask = compute_tissue_mask({slide.pixels, std::nullopt, slide.slide_id});
    // Every tumor pixel sits inside stained tissue.
    std::size_t tumor_in_tissue = 0;
    for (std::size_t i = 0; i < mask.mask.size(); ++i) tumor_in_tissue += slide.tumor.data[i] && mask.mask.data[i];
    CHECK(tumor_in_tissue == slide.tumor.count());
    CHECK(mask.mask.count() > mask.mask.size() / 3);
    CHECK(mask.mask.count() < mask.mask.size());
}

TEST_CASE("spec validation") {
    CorpusSpec spec;
    spec.tumor_region_fraction = 1.5;
    CHECK_THROWS_AS(spec.validate(), InvalidInput);
    CorpusSpec close;
    close.tumor.stroma = close.normal.stroma;
    CHECK_THROWS_AS(close.validate(), InvalidInput);
    CHECK_THROWS_AS(generate_corpus(CorpusSpec{}, "/proc/pathogan-unwritable"), IoError);
}
