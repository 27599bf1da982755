#include "pathogan/simd/kernels.hpp"

#include <algorithm>

namespace pathogan::simd::scalar {
namespace {

void classify_tissue(const std::uint8_t* rgb, std::size_t pixels, float min_saturation,
                     std::uint8_t max_green, std::uint8_t* out) {
    for (std::size_t i = 0; i < pixels; ++i) {
        const int r = rgb[3 * i];
        const int g = rgb[3 * i + 1];
        const int b = rgb[3 * i + 2];
        const int hi = std::max(r, std::max(g, b));
        const int lo = std::min(r, std::min(g, b));
        const bool saturated = static_cast<float>(hi - lo) >= min_saturation * static_cast<float>(hi);
        out[i] = (saturated && g <= max_green) ? 1 : 0;
    }
}

std::size_t count_nonzero(const std::uint8_t* data, std::size_t n) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) count += data[i] != 0;
    return count;
}

void channel_mean_squared_error(const float* a, const float* b, std::size_t plane, float* out) {
    const float* a1 = a + plane;
    const float* a2 = a + 2 * plane;
    const float* b1 = b + plane;
    const float* b2 = b + 2 * plane;
    for (std::size_t p = 0; p < plane; ++p) {
        const float d0 = a[p] - b[p];
        const float d1 = a1[p] - b1[p];
        const float d2 = a2[p] - b2[p];
        out[p] = (d0 * d0 + d1 * d1 + d2 * d2) / 3.0f;
    }
}

void lerp(const float* from, const float* to, float alpha, std::size_t n, float* out) {
    const float keep = 1.0f - alpha;
    for (std::size_t i = 0; i < n; ++i) out[i] = keep * from[i] + alpha * to[i];
}

double sum_squared_difference(const float* a, const float* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

void rank1_update(const double* x, std::size_t d, double* acc) {
    for (std::size_t i = 0; i < d; ++i) {
        const double xi = x[i];
        double* row = acc + i * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += xi * x[j];
    }
}

}  // namespace

const KernelTable table{
    Isa::scalar,          classify_tissue,        count_nonzero, channel_mean_squared_error, lerp,
    sum_squared_difference, rank1_update,
};

}  // namespace pathogan::simd::scalar
