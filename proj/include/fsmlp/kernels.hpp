#pragma once

#include <cstddef>
#include <cstdint>

namespace fsmlp::kernels {

// Flat-array numeric kernels behind the tensor and autodiff layers. Two
// implementations exist: a scalar reference (the semantic ground truth) and
// an AVX2+FMA variant for the bandwidth/FLOP-bound loops. The active set is
// picked once at startup from CPU capabilities, overridable with the
// environment variable FSMLP_KERNELS=scalar|avx2|auto.
//
// Transcendental kernels (gelu, log1p_abs and their backward forms) are
// shared scalar code in both sets; vectorizing erf/log would change the
// math relative to the reference.
//
// GEMM operands are dense row-major. `acc` selects C += AB versus C = AB.
struct Ops {
    const char* name;

    // C[m x n] (+)= A[m x k] * B[k x n]
    void (*gemm_nn)(const double* a, const double* b, double* c,
                    std::int64_t m, std::int64_t k, std::int64_t n, bool acc);
    // C[m x n] (+)= A[m x k] * B^T   where B is stored [n x k]
    void (*gemm_nt)(const double* a, const double* b, double* c,
                    std::int64_t m, std::int64_t k, std::int64_t n, bool acc);
    // C[m x n] (+)= A^T * B          where A is stored [k x m], B is [k x n]
    void (*gemm_tn)(const double* a, const double* b, double* c,
                    std::int64_t m, std::int64_t k, std::int64_t n, bool acc);

    void (*add)(const double* a, const double* b, double* out, std::size_t n);
    void (*sub)(const double* a, const double* b, double* out, std::size_t n);
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);
    void (*div)(const double* a, const double* b, double* out, std::size_t n);

    void (*scale)(const double* a, double s, double* out, std::size_t n);
    void (*axpy)(double s, const double* x, double* y, std::size_t n);  // y += s*x
    void (*fma_acc)(const double* a, const double* b, double* out, std::size_t n);  // out += a*b

    double (*sum)(const double* a, std::size_t n);
    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*sumsq)(const double* a, std::size_t n);

    void (*abs_val)(const double* a, double* out, std::size_t n);
    void (*square)(const double* a, double* out, std::size_t n);
    void (*log1p_abs)(const double* a, double* out, std::size_t n);  // log(|x| + 1)
    void (*relu)(const double* a, double* out, std::size_t n);
    void (*gelu)(const double* a, double* out, std::size_t n);

    // Backward accumulators: out += g * f'(x).
    void (*abs_bwd_acc)(const double* x, const double* g, double* out, std::size_t n);
    void (*square_bwd_acc)(const double* x, const double* g, double* out, std::size_t n);
    void (*log1p_abs_bwd_acc)(const double* x, const double* g, double* out, std::size_t n);
    void (*relu_bwd_acc)(const double* x, const double* g, double* out, std::size_t n);
    void (*gelu_bwd_acc)(const double* x, const double* g, double* out, std::size_t n);

    bool (*all_finite)(const double* a, std::size_t n);
};

enum class Backend { Auto, Scalar, Avx2 };

const Ops& scalar_ops();
const Ops& avx2_ops();  // falls back to scalar entries on non-x86 builds

bool avx2_supported();

// The set selected at process start (env override, then CPU detection).
const Ops& active();

// Test hook; affects subsequent active() calls.
void set_backend(Backend b);
Backend current_backend();

}  // namespace fsmlp::kernels
