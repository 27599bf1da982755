#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

// Data-parallel inner loops with a scalar reference and vectorized variants.
// Every variant of an elementwise kernel is bit-identical to the scalar one;
// reductions (sum_squared_difference) agree to rounding only.
namespace pathogan::simd {

enum class Isa { scalar, avx2 };

struct KernelTable {
    Isa isa;

    // out[i] = 1 iff pixel i of an interleaved RGB buffer is stained tissue:
    // (max - min) >= min_saturation * max (HSV saturation) and green <= max_green.
    void (*classify_tissue)(const std::uint8_t* rgb, std::size_t pixels, float min_saturation,
                            std::uint8_t max_green, std::uint8_t* out);

    std::size_t (*count_nonzero)(const std::uint8_t* data, std::size_t n);

    // Planar three-channel squared error averaged over channels:
    // out[p] = ((a0-b0)^2 + (a1-b1)^2 + (a2-b2)^2) / 3, plane stride = plane.
    void (*channel_mean_squared_error)(const float* a, const float* b, std::size_t plane,
                                       float* out);

    // out = (1 - alpha) * from + alpha * to
    void (*lerp)(const float* from, const float* to, float alpha, std::size_t n, float* out);

    // sum (a - b)^2 accumulated in double.
    double (*sum_squared_difference)(const float* a, const float* b, std::size_t n);

    // acc (d x d, row-major) += x x^T
    void (*rank1_update)(const double* x, std::size_t d, double* acc);
};

namespace scalar {
extern const KernelTable table;
}
namespace avx2 {
// Null when the translation unit was built without AVX2 support.
extern const KernelTable* const table;
}

bool supported(Isa isa);

// Table for the best ISA the CPU supports. PATHOGAN_SIMD=scalar|avx2 in the
// environment forces a variant (an unsupported request falls back to scalar).
const KernelTable& kernels();
const KernelTable& kernels(Isa isa);

std::string_view name(Isa isa);

}  // namespace pathogan::simd
