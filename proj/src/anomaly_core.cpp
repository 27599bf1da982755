#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pathogan/anomaly.hpp"
#include "pathogan/error.hpp"
#include "pathogan/simd/kernels.hpp"

namespace pathogan {

double ResidualMap::mean() const {
    double acc = 0.0;
    for (float v : values) acc += v;
    return values.empty() ? 0.0 : acc / static_cast<double>(values.size());
}

ResidualMap residual_map(const PlanarImage& query, const PlanarImage& reconstruction) {
    require(query.channels == 3 && reconstruction.channels == 3, "residual map expects 3-channel images");
    require(query.height == reconstruction.height && query.width == reconstruction.width,
            "query and reconstruction shapes differ");
    ResidualMap map{query.height, query.width, std::vector<float>(query.plane_size())};
    simd::kernels().channel_mean_squared_error(query.data.data(), reconstruction.data.data(), query.plane_size(),
                                               map.values.data());
    return map;
}

double nearest_rank_quantile(std::span<const double> values, double q) {
    require(!values.empty(), "quantile of an empty set");
    require(q > 0.0 && q < 1.0, "quantile level must lie in (0,1)");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    // The epsilon keeps q * n from rounding up past an exact integer rank.
    auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

Segmentation segment(const ResidualMap& residual, const ThresholdPolicy& policy) {
    double threshold = 0.0;
    if (const auto* fixed = std::get_if<FixedThreshold>(&policy)) {
        require(fixed->threshold >= 0.0, "fixed threshold must be non-negative");
        threshold = fixed->threshold;
    } else {
        const auto& quantile = std::get<QuantileThreshold>(policy);
        require(!quantile.calibration.empty(), "quantile threshold needs calibration residuals");
        threshold = nearest_rank_quantile(quantile.calibration, quantile.q);
    }
    Segmentation out{Mask(residual.height, residual.width), threshold};
    for (std::size_t i = 0; i < residual.values.size(); ++i)
        out.mask.data[i] = static_cast<double>(residual.values[i]) >= threshold ? 1 : 0;
    return out;
}

double rank_auc(std::span<const double> scores_normal, std::span<const double> scores_tumor) {
    require(!scores_normal.empty() && !scores_tumor.empty(), "AUC needs scores for both classes");
    struct Item {
        double score;
        bool tumor;
    };
    std::vector<Item> items;
    items.reserve(scores_normal.size() + scores_tumor.size());
    for (double s : scores_normal) items.push_back({s, false});
    for (double s : scores_tumor) items.push_back({s, true});
    for (const auto& it : items)
        if (!std::isfinite(it.score)) throw InvalidInput("AUC given a non-finite score");
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

    // Sum of tumor mid-ranks (1-based), tie groups share their average rank.
    double tumor_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < items.size()) {
        std::size_t j = i;
        while (j < items.size() && items[j].score == items[i].score) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (items[k].tumor) tumor_rank_sum += mid_rank;
        i = j;
    }
    const double nt = static_cast<double>(scores_tumor.size());
    const double nn = static_cast<double>(scores_normal.size());
    const double u = tumor_rank_sum - nt * (nt + 1.0) / 2.0;
    return u / (nt * nn);
}

namespace {

ScoreSummary summarize(std::span<const double> scores) {
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    ScoreSummary s;
    s.count = sorted.size();
    s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    const std::size_t mid = sorted.size() / 2;
    s.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    s.min = sorted.front();
    s.max = sorted.back();
    return s;
}

}  // namespace

DetectionReport evaluate_detection(std::span<const double> scores_normal, std::span<const double> scores_tumor,
                                   int histogram_bins) {
    require(histogram_bins >= 1, "histogram needs at least one bin");
    DetectionReport report;
    report.auc = rank_auc(scores_normal, scores_tumor);
    report.normal = summarize(scores_normal);
    report.tumor = summarize(scores_tumor);

    auto& h = report.histogram;
    h.lo = std::min(report.normal.min, report.tumor.min);
    h.hi = std::max(report.normal.max, report.tumor.max);
    h.normal.assign(histogram_bins, 0);
    h.tumor.assign(histogram_bins, 0);
    const double width = h.hi > h.lo ? (h.hi - h.lo) / histogram_bins : 1.0;
    auto bin_of = [&](double v) {
        const auto b = static_cast<int>((v - h.lo) / width);
        return std::clamp(b, 0, histogram_bins - 1);
    };
    for (double s : scores_normal) ++h.normal[bin_of(s)];
    for (double s : scores_tumor) ++h.tumor[bin_of(s)];
    return report;
}

std::string format_scores(const std::vector<ScoreRow>& rows) {
    std::string out = "path\tlabel\tscore\n";
    char buf[64];
    for (const auto& r : rows) {
        require(r.path.find_first_of("\t\n") == std::string::npos, "score path contains a tab or newline: " + r.path);
        const auto res = std::to_chars(buf, buf + sizeof buf, r.score);
        out += r.path + '\t' + (r.label ? to_string(*r.label) : "-") + '\t' + std::string(buf, res.ptr) + '\n';
    }
    return out;
}

void write_scores(const std::filesystem::path& path, const std::vector<ScoreRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write scores to " + path.string());
    out << format_scores(rows);
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<ScoreRow> read_scores(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read scores from " + path.string());
    std::vector<ScoreRow> rows;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty() || (number == 1 && line.rfind("path\t", 0) == 0)) continue;
        std::istringstream fields(line);
        std::string label, score;
        ScoreRow r;
        if (!std::getline(fields, r.path, '\t') || !std::getline(fields, label, '\t') || !std::getline(fields, score))
            throw InvalidInput(path.string() + ":" + std::to_string(number) + ": expected path, label and score");
        if (label != "-") r.label = parse_label(label);
        const auto res = std::from_chars(score.data(), score.data() + score.size(), r.score);
        if (res.ec != std::errc() || res.ptr != score.data() + score.size())
            throw InvalidInput(path.string() + ":" + std::to_string(number) + ": bad score '" + score + "'");
        rows.push_back(std::move(r));
    }
    return rows;
}

DetectionReport evaluate_scores(const std::vector<ScoreRow>& rows, int histogram_bins) {
    std::vector<double> normal, tumor;
    for (const auto& r : rows)
        if (r.label) (*r.label == PatchLabel::tumor ? tumor : normal).push_back(r.score);
    return evaluate_detection(normal, tumor, histogram_bins);
}

}  // namespace pathogan
