#include "fsmlp/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace fsmlp::kernels {
namespace {

Backend g_backend = Backend::Auto;

bool cpu_has_avx2_fma() {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend env_backend() {
    const char* v = std::getenv("FSMLP_KERNELS");
    if (v == nullptr) return Backend::Auto;
    if (std::strcmp(v, "scalar") == 0) return Backend::Scalar;
    if (std::strcmp(v, "avx2") == 0) return Backend::Avx2;
    return Backend::Auto;
}

}  // namespace

bool avx2_supported() {
    static const bool supported = cpu_has_avx2_fma();
    return supported;
}

void set_backend(Backend b) { g_backend = b; }

Backend current_backend() { return g_backend; }

const Ops& active() {
    Backend b = g_backend;
    if (b == Backend::Auto) {
        static const Backend env = env_backend();
        b = env;
    }
    if (b == Backend::Avx2) return avx2_supported() ? avx2_ops() : scalar_ops();
    if (b == Backend::Scalar) return scalar_ops();
    return avx2_supported() ? avx2_ops() : scalar_ops();
}

}  // namespace fsmlp::kernels
