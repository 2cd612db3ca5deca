#include "fsmlp/frequency.hpp"

#include <cmath>
#include <string>

#include "fsmlp/kernels.hpp"

namespace fsmlp::frequency {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kOrthonormalityTol = 1e-12;
}  // namespace

DctPlan::DctPlan(std::int64_t length) : length_(length) {
    if (length < 1) throw DimensionError("DctPlan: length must be >= 1");
    matrix_ = Tensor3(1, length, length);
    const double c0 = std::sqrt(1.0 / static_cast<double>(length));
    const double ck = std::sqrt(2.0 / static_cast<double>(length));
    for (std::int64_t k = 0; k < length; ++k) {
        const double scale = k == 0 ? c0 : ck;
        for (std::int64_t t = 0; t < length; ++t)
            matrix_.at(0, k, t) =
                scale * std::cos(kPi * static_cast<double>(2 * t + 1) * static_cast<double>(k) /
                                 static_cast<double>(2 * length));
    }
    inverse_ = matrix_.transposed12();

    // M * M^T must be the identity entrywise.
    Tensor3 gram(1, length, length);
    kernels::active().gemm_nt(matrix_.data(), matrix_.data(), gram.data(), length, length,
                              length, false);
    for (std::int64_t i = 0; i < length; ++i)
        for (std::int64_t j = 0; j < length; ++j) {
            const double expect = i == j ? 1.0 : 0.0;
            if (std::fabs(gram.at(0, i, j) - expect) > kOrthonormalityTol)
                throw NumericError("DctPlan: matrix failed orthonormality check at (" +
                                   std::to_string(i) + "," + std::to_string(j) + ")");
        }
}

namespace {

Tensor3 apply_along_last(const Tensor3& x, const Tensor3& m, std::int64_t length,
                         const char* what) {
    if (x.dim2() != length)
        throw DimensionError(std::string(what) + ": input trailing dim " +
                             std::to_string(x.dim2()) + " != plan length " +
                             std::to_string(length));
    Tensor3 out(x.shape());
    const std::int64_t rows = x.dim0() * x.dim1();
    kernels::active().gemm_nt(x.data(), m.data(), out.data(), rows, length, length, false);
    return out;
}

}  // namespace

Tensor3 dct_forward(const Tensor3& x, const DctPlan& plan) {
    return apply_along_last(x, plan.matrix(), plan.length(), "dct_forward");
}

Tensor3 dct_inverse(const Tensor3& coeffs, const DctPlan& plan) {
    return apply_along_last(coeffs, plan.inverse_matrix(), plan.length(), "dct_inverse");
}

}  // namespace fsmlp::frequency
