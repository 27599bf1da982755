#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "pathogan/error.hpp"
#include "pathogan/frechet.hpp"
#include "pathogan/log.hpp"
#include "pathogan/rng.hpp"

using namespace pathogan;

namespace {

using Dense = std::vector<std::vector<double>>;

FeatureStats make_stats(std::vector<double> mean, const Dense& cov) {
    FeatureStats s;
    s.mean = std::move(mean);
    s.n = 100;
    for (const auto& row : cov) s.cov.insert(s.cov.end(), row.begin(), row.end());
    return s;
}

Dense diag(const std::vector<double>& d) {
    Dense m(d.size(), std::vector<double>(d.size(), 0.0));
    for (std::size_t i = 0; i < d.size(); ++i) m[i][i] = d[i];
    return m;
}

Dense matmul(const Dense& a, const Dense& b) {
    const std::size_t n = a.size();
    Dense c(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t j = 0; j < n; ++j) c[i][j] += a[i][k] * b[k][j];
    return c;
}

Dense inverse(Dense a) {
    const std::size_t n = a.size();
    Dense inv(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        std::swap(a[col], a[pivot]);
        std::swap(inv[col], inv[pivot]);
        const double p = a[col][col];
        for (std::size_t j = 0; j < n; ++j) {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a[r][col];
            for (std::size_t j = 0; j < n; ++j) {
                a[r][j] -= f * a[col][j];
                inv[r][j] -= f * inv[col][j];
            }
        }
    }
    return inv;
}

// Denman-Beavers iteration for the principal square root of a matrix with
// positive real spectrum: an independent route to Tr((C_a C_b)^{1/2}).
double trace_sqrt_db(const Dense& m) {
    Dense y = m;
    Dense z(m.size(), std::vector<double>(m.size(), 0.0));
    for (std::size_t i = 0; i < m.size(); ++i) z[i][i] = 1.0;
    for (int it = 0; it < 60; ++it) {
        const Dense yi = inverse(y);
        const Dense zi = inverse(z);
        for (std::size_t i = 0; i < m.size(); ++i)
            for (std::size_t j = 0; j < m.size(); ++j) {
                y[i][j] = 0.5 * (y[i][j] + zi[i][j]);
                z[i][j] = 0.5 * (z[i][j] + yi[i][j]);
            }
    }
    double t = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) t += y[i][i];
    return t;
}

Dense random_spd(std::size_t d, Rng& rng) {
    Dense a(d, std::vector<double>(d));
    for (auto& row : a)
        for (auto& v : row) v = rng.normal();
    Dense c(d, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t k = 0; k < d; ++k) c[i][j] += a[i][k] * a[j][k];
            if (i == j) c[i][j] += 0.1;
        }
    return c;
}

struct QuietLog {
    QuietLog() {
        log::set_sink([](log::Level, const std::string&) {});
    }
    ~QuietLog() { log::set_sink(nullptr); }
};

}  // namespace

TEST_CASE("gaussian_stats examples") {
    QuietLog quiet;
    FeatureMatrix two(2, 2);
    two.data = {0, 0, 2, 0};
    const auto s = gaussian_stats(two);
    CHECK(s.mean == std::vector<double>{1.0, 0.0});
    CHECK(s.cov == std::vector<double>{2.0, 0.0, 0.0, 0.0});
    CHECK(s.n == 2);

    FeatureMatrix constant(5, 3);
    for (std::size_t i = 0; i < 5; ++i) {
        constant.row(i)[0] = 1.5;
        constant.row(i)[1] = -2.0;
        constant.row(i)[2] = 7.0;
    }
    for (double c : gaussian_stats(constant).cov) CHECK(c == 0.0);

    CHECK_THROWS_AS(gaussian_stats(FeatureMatrix(1, 3)), InvalidInput);
}

TEST_CASE("gaussian_stats is permutation invariant and symmetric") {
    QuietLog quiet;
    Rng rng(4);
    FeatureMatrix f(40, 6);
    for (auto& v : f.data) v = rng.normal();
    FeatureMatrix reversed(40, 6);
    for (std::size_t i = 0; i < 40; ++i) std::copy_n(f.row(39 - i), 6, reversed.row(i));
    const auto a = gaussian_stats(f);
    const auto b = gaussian_stats(reversed);
    for (std::size_t i = 0; i < a.cov.size(); ++i) CHECK(a.cov[i] == doctest::Approx(b.cov[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(a.cov_at(i, j) - a.cov_at(j, i)) <= 1e-8);
}

TEST_CASE("frechet_distance closed-form examples") {
    QuietLog quiet;
    const auto a = make_stats({0.3, -1.0}, {{2.0, 0.4}, {0.4, 1.0}});
    CHECK(std::abs(frechet_distance(a, a)) <= 1e-8);
    CHECK(frechet_distance(make_stats({0.0}, {{1.0}}), make_stats({1.0}, {{1.0}})) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(frechet_distance(make_stats({0, 0}, diag({1, 1})), make_stats({0, 0}, diag({4, 4}))) ==
          doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("frechet_distance matches the diagonal closed form on random cases") {
    QuietLog quiet;
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t d = 1 + rng.below(12);
        std::vector<double> ma(d), mb(d), ca(d), cb(d);
        double oracle = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            ma[i] = rng.normal();
            mb[i] = rng.normal();
            ca[i] = rng.uniform(0.0, 3.0);
            cb[i] = rng.uniform(0.0, 3.0);
            oracle += (ma[i] - mb[i]) * (ma[i] - mb[i]) + std::pow(std::sqrt(ca[i]) - std::sqrt(cb[i]), 2);
        }
        const double got = frechet_distance(make_stats(ma, diag(ca)), make_stats(mb, diag(cb)));
        CHECK(std::abs(got - oracle) <= 1e-6);
    }
}

TEST_CASE("frechet_distance agrees with a Denman-Beavers square root on full covariances") {
    QuietLog quiet;
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t d = 2 + rng.below(6);
        const Dense ca = random_spd(d, rng);
        const Dense cb = random_spd(d, rng);
        std::vector<double> ma(d), mb(d);
        double oracle = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            ma[i] = rng.normal();
            mb[i] = rng.normal();
            oracle += (ma[i] - mb[i]) * (ma[i] - mb[i]) + ca[i][i] + cb[i][i];
        }
        oracle -= 2.0 * trace_sqrt_db(matmul(ca, cb));
        const auto sa = make_stats(ma, ca);
        const auto sb = make_stats(mb, cb);
        const double ab = frechet_distance(sa, sb);
        CHECK(ab == doctest::Approx(oracle).epsilon(1e-8));
        CHECK(std::abs(ab - frechet_distance(sb, sa)) <= 1e-8);
        CHECK(ab >= 0.0);
    }
}

TEST_CASE("frechet_distance errors") {
    QuietLog quiet;
    CHECK_THROWS_AS(frechet_distance(make_stats({0}, {{1}}), make_stats({0, 0}, diag({1, 1}))), InvalidInput);
    CHECK_THROWS_AS(frechet_distance(make_stats({0, 0}, diag({1, -1})), make_stats({0, 0}, diag({1, 1}))),
                    NumericalError);
}

TEST_CASE("singular covariances are handled") {
    QuietLog quiet;
    const auto zero = make_stats({0, 0}, diag({0, 0}));
    const auto unit = make_stats({0, 0}, diag({1, 0}));
    CHECK(frechet_distance(zero, unit) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(frechet_distance(zero, zero)) <= 1e-12);
}
