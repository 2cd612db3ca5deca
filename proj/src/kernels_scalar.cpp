#include <cmath>
#include <cstring>

#include "fsmlp/kernels.hpp"

// Reference kernels. Plain loops, no intrinsics; the AVX2 set is
// equivalence-tested against these.

namespace fsmlp::kernels {
namespace {

void gemm_nn_scalar(const double* a, const double* b, double* c,
                    std::int64_t m, std::int64_t k, std::int64_t n, bool acc) {
    if (!acc) std::memset(c, 0, sizeof(double) * static_cast<std::size_t>(m * n));
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt_scalar(const double* a, const double* b, double* c,
                    std::int64_t m, std::int64_t k, std::int64_t n, bool acc) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (std::int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = acc ? crow[j] + s : s;
        }
    }
}

void gemm_tn_scalar(const double* a, const double* b, double* c,
                    std::int64_t m, std::int64_t k, std::int64_t n, bool acc) {
    if (!acc) std::memset(c, 0, sizeof(double) * static_cast<std::size_t>(m * n));
    for (std::int64_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const double av = arow[i];
            double* crow = c + i * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
void sub_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
void div_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}
void scale_scalar(const double* a, double s, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}
void axpy_scalar(double s, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += s * x[i];
}
void fma_acc_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

double sum_scalar(const double* a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i];
    return s;
}
double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}
double sumsq_scalar(const double* a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
    return s;
}

void abs_scalar(const double* a, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::fabs(a[i]);
}
void square_scalar(const double* a, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * a[i];
}
void log1p_abs_scalar(const double* a, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::log1p(std::fabs(a[i]));
}
void relu_scalar(const double* a, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void gelu_scalar(const double* a, double* out, std::size_t n) {
    // Exact form x * Phi(x); the tanh approximation would fail fine-grained
    // gradient checks.
    for (std::size_t i = 0; i < n; ++i)
        out[i] = 0.5 * a[i] * (1.0 + std::erf(a[i] * kInvSqrt2));
}

// d|x|/dx with the subgradient 0 at x == 0.
void abs_bwd_acc_scalar(const double* x, const double* g, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] += g[i] * (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
}
void square_bwd_acc_scalar(const double* x, const double* g, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] += g[i] * 2.0 * x[i];
}
// d log(|x|+1)/dx = sign(x) / (|x|+1), 0 at x == 0.
void log1p_abs_bwd_acc_scalar(const double* x, const double* g, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
        out[i] += g[i] * s / (std::fabs(x[i]) + 1.0);
    }
}
void relu_bwd_acc_scalar(const double* x, const double* g, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] += x[i] > 0.0 ? g[i] : 0.0;
}
void gelu_bwd_acc_scalar(const double* x, const double* g, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double phi = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
        const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
        out[i] += g[i] * (cdf + x[i] * phi);
    }
}

bool all_finite_scalar(const double* a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops ops = {
        "scalar",
        gemm_nn_scalar,
        gemm_nt_scalar,
        gemm_tn_scalar,
        add_scalar,
        sub_scalar,
        mul_scalar,
        div_scalar,
        scale_scalar,
        axpy_scalar,
        fma_acc_scalar,
        sum_scalar,
        dot_scalar,
        sumsq_scalar,
        abs_scalar,
        square_scalar,
        log1p_abs_scalar,
        relu_scalar,
        gelu_scalar,
        abs_bwd_acc_scalar,
        square_bwd_acc_scalar,
        log1p_abs_bwd_acc_scalar,
        relu_bwd_acc_scalar,
        gelu_bwd_acc_scalar,
        all_finite_scalar,
    };
    return ops;
}

}  // namespace fsmlp::kernels
