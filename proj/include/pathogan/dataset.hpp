#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pathogan/preprocess.hpp"

namespace pathogan {

struct ManifestEntry {
    std::string path;
    std::string slide_id;
    int row = 0;
    int col = 0;
    double tissue_fraction = 0.0;
    CoverageClass coverage = CoverageClass::low;
    std::optional<PatchLabel> label;

    bool operator==(const ManifestEntry&) const = default;
};

// Line-delimited patch index. Header: "# seed=<n> config_hash=<hex>", then one
// record per line: path, slide_id, row, col, tissue_fraction, coverage_class,
// label ("-" when absent), tab separated.
struct Manifest {
    std::vector<ManifestEntry> entries;
    std::uint64_t seed = 0;
    std::string config_hash;

    bool operator==(const Manifest&) const = default;
};

std::string format_manifest(const Manifest& manifest);
Manifest parse_manifest(const std::string& text);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

// Relative entry paths resolve against the manifest's directory.
std::filesystem::path resolve_entry(const std::filesystem::path& manifest_path, const ManifestEntry& entry);

// Checks the unique-path invariant; with `root`, also that every file exists.
void validate_manifest(const Manifest& manifest, const std::optional<std::filesystem::path>& root = {});

std::string hash_hex(std::uint64_t value);
std::string config_hash(const std::string& canonical_config);

struct SamplingConfig {
    int patches_per_slide = 1000;
    double min_coverage = 0.9;
    int size = 64;
    std::uint64_t seed = 0;

    static SamplingConfig full_scale() { return {}; }
    static SamplingConfig desk_scale() { return {50, 0.9, 64, 0}; }
};

struct SampleOutcome {
    Manifest manifest;
    std::vector<std::string> warnings;  // slides without qualifying patches
};

SampleOutcome sample_normal_training_set(const Manifest& manifest, const SamplingConfig& cfg);

struct SplitConfig {
    int n_train_per_class = 100000;
    int n_test_per_class = 10000;
    std::uint64_t seed = 0;
    bool allow_slide_overlap = false;

    static SplitConfig full_scale() { return {}; }
    static SplitConfig desk_scale() { return {2000, 500, 0, false}; }
};

struct LabeledSplit {
    Manifest train;
    Manifest test;
};

LabeledSplit build_labeled_split(const Manifest& manifest, const SplitConfig& cfg);

}  // namespace pathogan
