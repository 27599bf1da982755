#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace pathogan {

// Deterministic random source. The engine (mt19937_64) is pinned by the C++
// standard; every distribution below is implemented here rather than taken
// from <random> so that streams are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer on [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    // Standard normal via Box-Muller; the second deviate is cached.
    double normal();

    void fill_normal(std::vector<float>& out);

private:
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

std::uint64_t fnv1a64(std::string_view text);
std::uint64_t splitmix64(std::uint64_t x);

// Child seed for a named sub-stream, e.g. (run seed, slide id).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

}  // namespace pathogan
