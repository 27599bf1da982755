#include "pathogan/simd/kernels.hpp"

#include <cstdlib>
#include <string>

namespace pathogan::simd {

bool supported(Isa isa) {
    switch (isa) {
    case Isa::scalar:
        return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(__i386__)
        return avx2::table != nullptr && __builtin_cpu_supports("avx2");
#else
        return false;
#endif
    }
    return false;
}

const KernelTable& kernels(Isa isa) {
    if (isa == Isa::avx2 && supported(Isa::avx2)) return *avx2::table;
    return scalar::table;
}

namespace {

Isa select_isa() {
    if (const char* forced = std::getenv("PATHOGAN_SIMD")) {
        const std::string request(forced);
        if (request == "scalar") return Isa::scalar;
        if (request == "avx2") return supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
    }
    return supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

}  // namespace

const KernelTable& kernels() {
    static const KernelTable& active = kernels(select_isa());
    return active;
}

std::string_view name(Isa isa) {
    switch (isa) {
    case Isa::scalar:
        return "scalar";
    case Isa::avx2:
        return "avx2";
    }
    return "unknown";
}

}  // namespace pathogan::simd
