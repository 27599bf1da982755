#include "pathogan/frechet.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>

#include "pathogan/error.hpp"
#include "pathogan/log.hpp"
#include "pathogan/simd/kernels.hpp"

namespace pathogan {

FeatureStats gaussian_stats(const FeatureMatrix& features) {
    require(features.rows >= 2, "gaussian stats need at least two samples");
    require(features.cols >= 1, "gaussian stats need at least one feature");
    const std::size_t n = features.rows;
    const std::size_t d = features.cols;

    FeatureStats stats;
    stats.n = n;
    stats.mean.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = features.row(i);
        for (std::size_t j = 0; j < d; ++j) stats.mean[j] += r[j];
    }
    for (auto& m : stats.mean) m /= static_cast<double>(n);

    stats.cov.assign(d * d, 0.0);
    std::vector<double> centered(d);
    const auto& k = simd::kernels();
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = features.row(i);
        for (std::size_t j = 0; j < d; ++j) centered[j] = r[j] - stats.mean[j];
        k.rank1_update(centered.data(), d, stats.cov.data());
    }
    for (auto& c : stats.cov) c /= static_cast<double>(n - 1);
    if (n < 10 * d)
        log::warn("covariance from " + std::to_string(n) + " samples in " + std::to_string(d) +
                  " dimensions is unreliable (fewer than 10*d)");
    return stats;
}

namespace {

using Matrix = Eigen::MatrixXd;

Matrix as_symmetric(const FeatureStats& s) {
    const auto d = static_cast<Eigen::Index>(s.dim());
    require(s.cov.size() == s.dim() * s.dim(), "covariance has the wrong size");
    Matrix m = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(s.cov.data(), d, d);
    return 0.5 * (m + m.transpose());
}

// Eigenvalues clamped at zero, after checking the negative part is only
// rounding residue.
Eigen::VectorXd psd_spectrum(const Eigen::SelfAdjointEigenSolver<Matrix>& solver, double tolerance, const char* what) {
    if (solver.info() != Eigen::Success) throw NumericalError(std::string("eigendecomposition failed for ") + what);
    Eigen::VectorXd values = solver.eigenvalues();
    const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
    if (values.minCoeff() < -tolerance * scale)
        throw NumericalError(std::string(what) + " is not positive semi-definite (eigenvalue " +
                             std::to_string(values.minCoeff()) + ")");
    return values.cwiseMax(0.0);
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b, double psd_tolerance) {
    require(a.dim() == b.dim(), "feature dimensions differ");
    require(a.dim() >= 1, "empty feature statistics");
    const auto d = static_cast<Eigen::Index>(a.dim());

    const Matrix ca = as_symmetric(a);
    const Matrix cb = as_symmetric(b);

    Eigen::SelfAdjointEigenSolver<Matrix> eig_a(ca);
    const Eigen::VectorXd lambda_a = psd_spectrum(eig_a, psd_tolerance, "first covariance");
    const Matrix sqrt_a = eig_a.eigenvectors() * lambda_a.cwiseSqrt().asDiagonal() * eig_a.eigenvectors().transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> eig_b(cb, Eigen::EigenvaluesOnly);
    psd_spectrum(eig_b, psd_tolerance, "second covariance");

    Matrix product = sqrt_a * cb * sqrt_a;
    product = 0.5 * (product + product.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> eig_p(product, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd lambda_p = psd_spectrum(eig_p, psd_tolerance, "covariance product");
    const double trace_sqrt = lambda_p.cwiseSqrt().sum();

    double mean_term = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        const double diff = a.mean[i] - b.mean[i];
        mean_term += diff * diff;
    }
    const double distance = mean_term + ca.trace() + cb.trace() - 2.0 * trace_sqrt;
    if (distance < 0.0) {
        log::warn("negative Frechet distance " + std::to_string(distance) + " clamped to 0");
        return 0.0;
    }
    return distance;
}

}  // namespace pathogan
