#pragma once

#include <cstddef>
#include <vector>

namespace pathogan {

// Row-major n x d matrix of embeddings, one row per image.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    FeatureMatrix() = default;
    FeatureMatrix(std::size_t n, std::size_t d) : rows(n), cols(d), data(n * d, 0.0) {}

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }
};

// Gaussian summary of a feature set: column means and the unbiased (n-1)
// sample covariance, stored row-major d x d.
struct FeatureStats {
    std::vector<double> mean;
    std::vector<double> cov;
    std::size_t n = 0;

    std::size_t dim() const { return mean.size(); }
    double cov_at(std::size_t i, std::size_t j) const { return cov[i * dim() + j]; }
};

FeatureStats gaussian_stats(const FeatureMatrix& features);

// |mu_a - mu_b|^2 + Tr(C_a + C_b - 2 (C_a C_b)^{1/2}).
//
// The trace of the square root is taken from the eigenvalues of the
// symmetric matrix C_a^{1/2} C_b C_a^{1/2}, which share their spectrum with
// C_a C_b. Negative eigenvalues smaller in magnitude than psd_tolerance times
// the largest eigenvalue are treated as zero; larger ones raise
// NumericalError. A slightly negative result is clamped to 0 with a warning.
double frechet_distance(const FeatureStats& a, const FeatureStats& b, double psd_tolerance = 1e-6);

}  // namespace pathogan
