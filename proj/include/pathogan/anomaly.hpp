#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pathogan/image.hpp"
#include "pathogan/preprocess.hpp"

namespace pathogan {

// Per-pixel squared error averaged over the three channels.
struct ResidualMap {
    int height = 0;
    int width = 0;
    std::vector<float> values;

    float at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
    double mean() const;
};

ResidualMap residual_map(const PlanarImage& query, const PlanarImage& reconstruction);

struct FixedThreshold {
    double threshold;
};

// Threshold at the q-quantile of residual values observed on normal
// validation data, using the nearest-rank rule: the ceil(q * n)-th smallest.
struct QuantileThreshold {
    double q;
    std::vector<double> calibration;
};

using ThresholdPolicy = std::variant<FixedThreshold, QuantileThreshold>;

double nearest_rank_quantile(std::span<const double> values, double q);

struct Segmentation {
    Mask mask;  // residual >= threshold
    double threshold = 0.0;
};

Segmentation segment(const ResidualMap& residual, const ThresholdPolicy& policy);

struct ScoreSummary {
    std::size_t count = 0;
    double mean = 0.0;
    double median = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> normal;
    std::vector<std::size_t> tumor;
};

struct DetectionReport {
    double auc = 0.5;
    ScoreSummary normal;
    ScoreSummary tumor;
    Histogram histogram;
};

// Rank-statistic AUC: probability that a tumor score exceeds a normal one,
// ties counted as one half.
double rank_auc(std::span<const double> scores_normal, std::span<const double> scores_tumor);

DetectionReport evaluate_detection(std::span<const double> scores_normal, std::span<const double> scores_tumor,
                                   int histogram_bins = 20);

// One line of a scores file: path<TAB>label<TAB>score, label "-" when unknown.
struct ScoreRow {
    std::string path;
    std::optional<PatchLabel> label;
    double score = 0.0;

    bool operator==(const ScoreRow&) const = default;
};

std::string format_scores(const std::vector<ScoreRow>& rows);
void write_scores(const std::filesystem::path& path, const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> read_scores(const std::filesystem::path& path);

// Splits labeled rows by class and evaluates them; unlabeled rows are skipped.
DetectionReport evaluate_scores(const std::vector<ScoreRow>& rows, int histogram_bins = 20);

}  // namespace pathogan
