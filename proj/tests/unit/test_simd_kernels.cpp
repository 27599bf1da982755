#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "pathogan/rng.hpp"
#include "pathogan/simd/kernels.hpp"

using namespace pathogan;
using simd::Isa;

namespace {

std::vector<Isa> vector_isas() {
    std::vector<Isa> out;
    if (simd::supported(Isa::avx2)) out.push_back(Isa::avx2);
    return out;
}

std::vector<float> random_floats(std::size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
}

const std::size_t kLengths[] = {0, 1, 7, 8, 9, 10, 17, 31, 32, 33, 64, 100, 257, 1000};

}  // namespace

TEST_CASE("scalar table is always available") {
    CHECK(simd::supported(Isa::scalar));
    CHECK(simd::kernels(Isa::scalar).isa == Isa::scalar);
    MESSAGE("active kernels: " << simd::name(simd::kernels().isa));
}

TEST_CASE("classify_tissue: scalar matches a brute-force HSV oracle") {
    Rng rng(11);
    const std::size_t n = 4096;
    std::vector<std::uint8_t> rgb(3 * n);
    for (auto& v : rgb) v = static_cast<std::uint8_t>(rng.below(256));
    std::vector<std::uint8_t> out(n);
    const float t = 0.07f;
    simd::kernels(Isa::scalar).classify_tissue(rgb.data(), n, t, 200, out.data());
    int checked = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = rgb[3 * i], g = rgb[3 * i + 1], b = rgb[3 * i + 2];
        const double mx = std::max({r, g, b});
        const double mn = std::min({r, g, b});
        const double sat = mx > 0 ? (mx - mn) / mx : 0.0;
        if (std::abs(sat - t) < 1e-6) continue;
        const bool expected = sat >= t && g <= 200;
        CHECK(static_cast<bool>(out[i]) == expected);
        ++checked;
    }
    CHECK(checked > 4000);
}

TEST_CASE("vector kernels are bit-identical to scalar for elementwise ops") {
    Rng rng(3);
    const auto& ref = simd::kernels(Isa::scalar);
    for (Isa isa : vector_isas()) {
        const auto& k = simd::kernels(isa);
        CAPTURE(simd::name(isa));
        for (std::size_t n : kLengths) {
            CAPTURE(n);
            std::vector<std::uint8_t> rgb(3 * n);
            for (auto& v : rgb) v = static_cast<std::uint8_t>(rng.below(256));
            std::vector<std::uint8_t> a(n), b(n);
            for (float t : {0.0f, 0.07f, 0.5f, 1.0f}) {
                for (int green : {0, 128, 200, 255}) {
                    ref.classify_tissue(rgb.data(), n, t, static_cast<std::uint8_t>(green), a.data());
                    k.classify_tissue(rgb.data(), n, t, static_cast<std::uint8_t>(green), b.data());
                    CHECK(a == b);
                }
            }

            std::vector<std::uint8_t> bytes(n);
            for (auto& v : bytes) v = rng.below(3) == 0 ? 0 : static_cast<std::uint8_t>(rng.below(256));
            CHECK(ref.count_nonzero(bytes.data(), n) == k.count_nonzero(bytes.data(), n));

            const auto x = random_floats(3 * n, rng);
            const auto y = random_floats(3 * n, rng);
            std::vector<float> ra(n), rb(n);
            ref.channel_mean_squared_error(x.data(), y.data(), n, ra.data());
            k.channel_mean_squared_error(x.data(), y.data(), n, rb.data());
            CHECK(std::memcmp(ra.data(), rb.data(), n * sizeof(float)) == 0);

            std::vector<float> la(3 * n), lb(3 * n);
            for (float alpha : {0.0f, 0.25f, 0.5f, 1.0f}) {
                ref.lerp(x.data(), y.data(), alpha, 3 * n, la.data());
                k.lerp(x.data(), y.data(), alpha, 3 * n, lb.data());
                CHECK(std::memcmp(la.data(), lb.data(), 3 * n * sizeof(float)) == 0);
            }

            const std::size_t d = n % 40 + 1;
            std::vector<double> v(d);
            for (auto& e : v) e = rng.uniform(-2.0, 2.0);
            std::vector<double> acc_a(d * d, 0.5), acc_b(d * d, 0.5);
            ref.rank1_update(v.data(), d, acc_a.data());
            k.rank1_update(v.data(), d, acc_b.data());
            CHECK(std::memcmp(acc_a.data(), acc_b.data(), d * d * sizeof(double)) == 0);
        }
    }
}

TEST_CASE("sum_squared_difference agrees across ISAs to rounding") {
    Rng rng(5);
    const auto& ref = simd::kernels(Isa::scalar);
    for (Isa isa : vector_isas()) {
        for (std::size_t n : kLengths) {
            const auto x = random_floats(n, rng);
            const auto y = random_floats(n, rng);
            const double a = ref.sum_squared_difference(x.data(), y.data(), n);
            const double b = simd::kernels(isa).sum_squared_difference(x.data(), y.data(), n);
            CHECK(b == doctest::Approx(a).epsilon(1e-12));
        }
    }
}

TEST_CASE("elementwise kernels compute their definitions") {
    const auto& k = simd::kernels();
    const float a[9] = {1, 0, 0, 0, 0, 0, 0, 0, 0};
    const float b[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
    float out[3];
    k.channel_mean_squared_error(a, b, 3, out);
    CHECK(out[0] == doctest::Approx(1.0 / 3.0));
    CHECK(out[1] == 0.0f);

    const float from[2] = {0.0f, 2.0f};
    const float to[2] = {1.0f, 4.0f};
    float mid[2];
    k.lerp(from, to, 0.5f, 2, mid);
    CHECK(mid[0] == 0.5f);
    CHECK(mid[1] == 3.0f);
}
