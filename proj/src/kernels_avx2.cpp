#include "fsmlp/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define FSMLP_X86 1
#else
#define FSMLP_X86 0
#endif

#if FSMLP_X86

#include <immintrin.h>

#include <cmath>
#include <cstring>

// AVX2+FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the runtime capability check in kernels.cpp.
// Results may differ from the scalar reference in the last bits (FMA and
// reassociated accumulation); the equivalence tests bound the difference.

namespace fsmlp::kernels {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

// 4x8 register tile over the K loop.
inline void gemm_nn_tile4x8(const double* a, const double* b, double* c,
                            std::int64_t k, std::int64_t lda, std::int64_t ldb,
                            std::int64_t ldc, bool acc) {
    __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
    __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
    __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
    __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
    for (std::int64_t p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
        const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
        __m256d av;
        av = _mm256_broadcast_sd(a + 0 * lda + p);
        c00 = _mm256_fmadd_pd(av, b0, c00);
        c01 = _mm256_fmadd_pd(av, b1, c01);
        av = _mm256_broadcast_sd(a + 1 * lda + p);
        c10 = _mm256_fmadd_pd(av, b0, c10);
        c11 = _mm256_fmadd_pd(av, b1, c11);
        av = _mm256_broadcast_sd(a + 2 * lda + p);
        c20 = _mm256_fmadd_pd(av, b0, c20);
        c21 = _mm256_fmadd_pd(av, b1, c21);
        av = _mm256_broadcast_sd(a + 3 * lda + p);
        c30 = _mm256_fmadd_pd(av, b0, c30);
        c31 = _mm256_fmadd_pd(av, b1, c31);
    }
    if (acc) {
        c00 = _mm256_add_pd(c00, _mm256_loadu_pd(c + 0 * ldc));
        c01 = _mm256_add_pd(c01, _mm256_loadu_pd(c + 0 * ldc + 4));
        c10 = _mm256_add_pd(c10, _mm256_loadu_pd(c + 1 * ldc));
        c11 = _mm256_add_pd(c11, _mm256_loadu_pd(c + 1 * ldc + 4));
        c20 = _mm256_add_pd(c20, _mm256_loadu_pd(c + 2 * ldc));
        c21 = _mm256_add_pd(c21, _mm256_loadu_pd(c + 2 * ldc + 4));
        c30 = _mm256_add_pd(c30, _mm256_loadu_pd(c + 3 * ldc));
        c31 = _mm256_add_pd(c31, _mm256_loadu_pd(c + 3 * ldc + 4));
    }
    _mm256_storeu_pd(c + 0 * ldc, c00);
    _mm256_storeu_pd(c + 0 * ldc + 4, c01);
    _mm256_storeu_pd(c + 1 * ldc, c10);
    _mm256_storeu_pd(c + 1 * ldc + 4, c11);
    _mm256_storeu_pd(c + 2 * ldc, c20);
    _mm256_storeu_pd(c + 2 * ldc + 4, c21);
    _mm256_storeu_pd(c + 3 * ldc, c30);
    _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

inline void gemm_nn_edge(const double* a, const double* b, double* c,
                         std::int64_t rows, std::int64_t k, std::int64_t cols,
                         std::int64_t lda, std::int64_t ldb, std::int64_t ldc, bool acc) {
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < cols; ++j) {
            double s = acc ? c[i * ldc + j] : 0.0;
            for (std::int64_t p = 0; p < k; ++p) s += a[i * lda + p] * b[p * ldb + j];
            c[i * ldc + j] = s;
        }
    }
}

void gemm_nn_avx2(const double* a, const double* b, double* c,
                  std::int64_t m, std::int64_t k, std::int64_t n, bool acc) {
    const std::int64_t m4 = m - m % 4;
    const std::int64_t n8 = n - n % 8;
    for (std::int64_t i = 0; i < m4; i += 4) {
        for (std::int64_t j = 0; j < n8; j += 8)
            gemm_nn_tile4x8(a + i * k, b + j, c + i * n + j, k, k, n, n, acc);
        if (n8 < n)
            gemm_nn_edge(a + i * k, b + n8, c + i * n + n8, 4, k, n - n8, k, n, n, acc);
    }
    if (m4 < m) gemm_nn_edge(a + m4 * k, b, c + m4 * n, m - m4, k, n, k, n, n, acc);
}

void gemm_nt_avx2(const double* a, const double* b, double* c,
                  std::int64_t m, std::int64_t k, std::int64_t n, bool acc) {
    const std::int64_t k4 = k - k % 4;
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        std::int64_t j = 0;
        for (; j + 4 <= n; j += 4) {
            __m256d s0 = _mm256_setzero_pd();
            __m256d s1 = _mm256_setzero_pd();
            __m256d s2 = _mm256_setzero_pd();
            __m256d s3 = _mm256_setzero_pd();
            const double* b0 = b + (j + 0) * k;
            const double* b1 = b + (j + 1) * k;
            const double* b2 = b + (j + 2) * k;
            const double* b3 = b + (j + 3) * k;
            for (std::int64_t p = 0; p < k4; p += 4) {
                const __m256d av = _mm256_loadu_pd(arow + p);
                s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
                s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
                s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
                s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
            }
            double d0 = hsum(s0), d1 = hsum(s1), d2 = hsum(s2), d3 = hsum(s3);
            for (std::int64_t p = k4; p < k; ++p) {
                d0 += arow[p] * b0[p];
                d1 += arow[p] * b1[p];
                d2 += arow[p] * b2[p];
                d3 += arow[p] * b3[p];
            }
            if (acc) {
                crow[j + 0] += d0;
                crow[j + 1] += d1;
                crow[j + 2] += d2;
                crow[j + 3] += d3;
            } else {
                crow[j + 0] = d0;
                crow[j + 1] = d1;
                crow[j + 2] = d2;
                crow[j + 3] = d3;
            }
        }
        for (; j < n; ++j) {
            const double* brow = b + j * k;
            __m256d s = _mm256_setzero_pd();
            for (std::int64_t p = 0; p < k4; p += 4)
                s = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p), _mm256_loadu_pd(brow + p), s);
            double d = hsum(s);
            for (std::int64_t p = k4; p < k; ++p) d += arow[p] * brow[p];
            crow[j] = acc ? crow[j] + d : d;
        }
    }
}

void gemm_tn_avx2(const double* a, const double* b, double* c,
                  std::int64_t m, std::int64_t k, std::int64_t n, bool acc) {
    if (!acc) std::memset(c, 0, sizeof(double) * static_cast<std::size_t>(m * n));
    const std::int64_t n4 = n - n % 4;
    for (std::int64_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            const __m256d avv = _mm256_set1_pd(av);
            std::int64_t j = 0;
            for (; j < n4; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                cv = _mm256_fmadd_pd(avv, _mm256_loadu_pd(brow + j), cv);
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

#define FSMLP_EW_BINARY(NAME, VOP, SOP)                                              \
    void NAME(const double* a, const double* b, double* out, std::size_t n) {        \
        std::size_t i = 0;                                                           \
        for (; i + 4 <= n; i += 4)                                                   \
            _mm256_storeu_pd(out + i,                                                \
                             VOP(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));   \
        for (; i < n; ++i) out[i] = SOP;                                             \
    }

FSMLP_EW_BINARY(add_avx2, _mm256_add_pd, a[i] + b[i])
FSMLP_EW_BINARY(sub_avx2, _mm256_sub_pd, a[i] - b[i])
FSMLP_EW_BINARY(mul_avx2, _mm256_mul_pd, a[i] * b[i])
FSMLP_EW_BINARY(div_avx2, _mm256_div_pd, a[i] / b[i])
#undef FSMLP_EW_BINARY

void scale_avx2(const double* a, double s, double* out, std::size_t n) {
    const __m256d sv = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), sv));
    for (; i < n; ++i) out[i] = a[i] * s;
}

void axpy_avx2(double s, const double* x, double* y, std::size_t n) {
    const __m256d sv = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_fmadd_pd(sv, _mm256_loadu_pd(x + i), yv);
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += s * x[i];
}

void fma_acc_avx2(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d ov = _mm256_loadu_pd(out + i);
        ov = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), ov);
        _mm256_storeu_pd(out + i, ov);
    }
    for (; i < n; ++i) out[i] += a[i] * b[i];
}

double sum_avx2(const double* a, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
        acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(a + i + 4));
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i];
    return s;
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sumsq_avx2(const double* a, std::size_t n) { return dot_avx2(a, a, n); }

void abs_avx2(const double* a, double* out, std::size_t n) {
    const __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_and_pd(_mm256_loadu_pd(a + i), mask));
    for (; i < n; ++i) out[i] = std::fabs(a[i]);
}

void square_avx2(const double* a, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(a + i);
        _mm256_storeu_pd(out + i, _mm256_mul_pd(v, v));
    }
    for (; i < n; ++i) out[i] = a[i] * a[i];
}

void relu_avx2(const double* a, double* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(a + i), zero));
    for (; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void relu_bwd_acc_avx2(const double* x, const double* g, double* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d xv = _mm256_loadu_pd(x + i);
        const __m256d pass = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
        const __m256d gv = _mm256_and_pd(_mm256_loadu_pd(g + i), pass);
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(out + i), gv));
    }
    for (; i < n; ++i) out[i] += x[i] > 0.0 ? g[i] : 0.0;
}

void square_bwd_acc_avx2(const double* x, const double* g, double* out, std::size_t n) {
    const __m256d two = _mm256_set1_pd(2.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d ov = _mm256_loadu_pd(out + i);
        const __m256d t = _mm256_mul_pd(two, _mm256_loadu_pd(x + i));
        ov = _mm256_fmadd_pd(_mm256_loadu_pd(g + i), t, ov);
        _mm256_storeu_pd(out + i, ov);
    }
    for (; i < n; ++i) out[i] += g[i] * 2.0 * x[i];
}

bool all_finite_avx2(const double* a, std::size_t n) {
    // |x| <= DBL_MAX is false for NaN and +-Inf.
    const __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    const __m256d maxv = _mm256_set1_pd(1.7976931348623157e308);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d av = _mm256_and_pd(_mm256_loadu_pd(a + i), mask);
        const __m256d ok = _mm256_cmp_pd(av, maxv, _CMP_LE_OQ);
        if (_mm256_movemask_pd(ok) != 0xf) return false;
    }
    for (; i < n; ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

}  // namespace

const Ops& avx2_ops() {
    // Transcendentals stay on the scalar path (see header note).
    static const Ops ops = {
        "avx2",
        gemm_nn_avx2,
        gemm_nt_avx2,
        gemm_tn_avx2,
        add_avx2,
        sub_avx2,
        mul_avx2,
        div_avx2,
        scale_avx2,
        axpy_avx2,
        fma_acc_avx2,
        sum_avx2,
        dot_avx2,
        sumsq_avx2,
        abs_avx2,
        square_avx2,
        scalar_ops().log1p_abs,
        relu_avx2,
        scalar_ops().gelu,
        scalar_ops().abs_bwd_acc,
        square_bwd_acc_avx2,
        scalar_ops().log1p_abs_bwd_acc,
        relu_bwd_acc_avx2,
        scalar_ops().gelu_bwd_acc,
        all_finite_avx2,
    };
    return ops;
}

}  // namespace fsmlp::kernels

#else  // !FSMLP_X86

namespace fsmlp::kernels {

const Ops& avx2_ops() { return scalar_ops(); }

}  // namespace fsmlp::kernels

#endif
