#include "pathogan/simd/kernels.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

#include <bit>

namespace pathogan::simd::avx2 {
namespace {

// Gathers channel `c` of four interleaved RGB pixels (12 bytes per 128-bit
// lane) into four zero-extended 32-bit integers.
inline __m256i channel_epi32(__m256i pixels, int c) {
    const char z = static_cast<char>(0x80);
    const __m256i shuffle = _mm256_setr_epi8(
        static_cast<char>(c), z, z, z, static_cast<char>(3 + c), z, z, z,
        static_cast<char>(6 + c), z, z, z, static_cast<char>(9 + c), z, z, z,
        static_cast<char>(c), z, z, z, static_cast<char>(3 + c), z, z, z,
        static_cast<char>(6 + c), z, z, z, static_cast<char>(9 + c), z, z, z);
    return _mm256_shuffle_epi8(pixels, shuffle);
}

void classify_tissue(const std::uint8_t* rgb, std::size_t pixels, float min_saturation,
                     std::uint8_t max_green, std::uint8_t* out) {
    const __m256 threshold = _mm256_set1_ps(min_saturation);
    const __m256i green_limit = _mm256_set1_epi32(max_green);
    std::size_t i = 0;
    // Each block reads 28 bytes starting at pixel i (two 16-byte loads at
    // offsets 0 and 12), so stop while at least 10 pixels remain.
    for (; i + 10 <= pixels; i += 8) {
        const std::uint8_t* p = rgb + 3 * i;
        const __m128i lo = _mm_loadu_si128(reinterpret_cast<const __m128i*>(p));
        const __m128i hi = _mm_loadu_si128(reinterpret_cast<const __m128i*>(p + 12));
        const __m256i block = _mm256_set_m128i(hi, lo);
        const __m256i r = channel_epi32(block, 0);
        const __m256i g = channel_epi32(block, 1);
        const __m256i b = channel_epi32(block, 2);
        const __m256i mx = _mm256_max_epi32(r, _mm256_max_epi32(g, b));
        const __m256i mn = _mm256_min_epi32(r, _mm256_min_epi32(g, b));
        const __m256 spread = _mm256_cvtepi32_ps(_mm256_sub_epi32(mx, mn));
        const __m256 scaled = _mm256_mul_ps(threshold, _mm256_cvtepi32_ps(mx));
        const __m256 saturated = _mm256_cmp_ps(spread, scaled, _CMP_GE_OQ);
        const __m256i green_ok = _mm256_cmpgt_epi32(_mm256_add_epi32(green_limit, _mm256_set1_epi32(1)), g);
        const __m256i tissue = _mm256_and_si256(_mm256_castps_si256(saturated), green_ok);
        const unsigned bits = static_cast<unsigned>(_mm256_movemask_ps(_mm256_castsi256_ps(tissue)));
        for (int k = 0; k < 8; ++k) out[i + k] = (bits >> k) & 1u;
    }
    scalar::table.classify_tissue(rgb + 3 * i, pixels - i, min_saturation, max_green, out + i);
}

std::size_t count_nonzero(const std::uint8_t* data, std::size_t n) {
    std::size_t count = 0;
    std::size_t i = 0;
    const __m256i zero = _mm256_setzero_si256();
    for (; i + 32 <= n; i += 32) {
        const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(data + i));
        const unsigned zeros = static_cast<unsigned>(_mm256_movemask_epi8(_mm256_cmpeq_epi8(v, zero)));
        count += 32 - std::popcount(zeros);
    }
    return count + scalar::table.count_nonzero(data + i, n - i);
}

void channel_mean_squared_error(const float* a, const float* b, std::size_t plane, float* out) {
    const __m256 third = _mm256_set1_ps(3.0f);
    std::size_t p = 0;
    for (; p + 8 <= plane; p += 8) {
        const __m256 d0 = _mm256_sub_ps(_mm256_loadu_ps(a + p), _mm256_loadu_ps(b + p));
        const __m256 d1 = _mm256_sub_ps(_mm256_loadu_ps(a + plane + p), _mm256_loadu_ps(b + plane + p));
        const __m256 d2 = _mm256_sub_ps(_mm256_loadu_ps(a + 2 * plane + p), _mm256_loadu_ps(b + 2 * plane + p));
        __m256 acc = _mm256_add_ps(_mm256_mul_ps(d0, d0), _mm256_mul_ps(d1, d1));
        acc = _mm256_add_ps(acc, _mm256_mul_ps(d2, d2));
        _mm256_storeu_ps(out + p, _mm256_div_ps(acc, third));
    }
    for (; p < plane; ++p) {
        const float d0 = a[p] - b[p];
        const float d1 = a[plane + p] - b[plane + p];
        const float d2 = a[2 * plane + p] - b[2 * plane + p];
        out[p] = (d0 * d0 + d1 * d1 + d2 * d2) / 3.0f;
    }
}

void lerp(const float* from, const float* to, float alpha, std::size_t n, float* out) {
    const __m256 keep = _mm256_set1_ps(1.0f - alpha);
    const __m256 take = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_add_ps(_mm256_mul_ps(keep, _mm256_loadu_ps(from + i)),
                                       _mm256_mul_ps(take, _mm256_loadu_ps(to + i)));
        _mm256_storeu_ps(out + i, v);
    }
    scalar::table.lerp(from + i, to + i, alpha, n - i, out + i);
}

double sum_squared_difference(const float* a, const float* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        // Widen before subtracting to match the scalar double accumulation.
        const __m256d lo = _mm256_sub_pd(_mm256_cvtps_pd(_mm_loadu_ps(a + i)), _mm256_cvtps_pd(_mm_loadu_ps(b + i)));
        const __m256d hi = _mm256_sub_pd(_mm256_cvtps_pd(_mm_loadu_ps(a + i + 4)), _mm256_cvtps_pd(_mm_loadu_ps(b + i + 4)));
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(lo, lo));
        acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(hi, hi));
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
    const double head = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    return head + scalar::table.sum_squared_difference(a + i, b + i, n - i);
}

void rank1_update(const double* x, std::size_t d, double* acc) {
    for (std::size_t i = 0; i < d; ++i) {
        const __m256d xi = _mm256_set1_pd(x[i]);
        double* row = acc + i * d;
        std::size_t j = 0;
        for (; j + 4 <= d; j += 4) {
            const __m256d prod = _mm256_mul_pd(xi, _mm256_loadu_pd(x + j));
            _mm256_storeu_pd(row + j, _mm256_add_pd(_mm256_loadu_pd(row + j), prod));
        }
        for (; j < d; ++j) row[j] += x[i] * x[j];
    }
}

const KernelTable kTable{
    Isa::avx2,            classify_tissue,        count_nonzero, channel_mean_squared_error, lerp,
    sum_squared_difference, rank1_update,
};

}  // namespace

const KernelTable* const table = &kTable;

}  // namespace pathogan::simd::avx2

#else

namespace pathogan::simd::avx2 {
const KernelTable* const table = nullptr;
}

#endif
