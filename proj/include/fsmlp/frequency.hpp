#pragma once

#include <cstdint>

#include "fsmlp/tensor.hpp"

namespace fsmlp::frequency {

// Orthonormal DCT-II along the time axis and its inverse (the transpose).
// Row k of the matrix is c_k * cos(pi * (2t+1) * k / (2L)) with
// c_0 = sqrt(1/L) and c_k = sqrt(2/L) for k >= 1, so M * M^T = I and the
// inverse transform is exact. Dense matrix application: at L <= 720 the
// O(L^2) multiply is cheap and doubles as the fixed linear map the
// differentiation engine already supports.
class DctPlan {
public:
    explicit DctPlan(std::int64_t length);

    std::int64_t length() const { return length_; }
    const Tensor3& matrix() const { return matrix_; }          // (1, L, L)
    const Tensor3& inverse_matrix() const { return inverse_; }  // transpose

private:
    std::int64_t length_ = 0;
    Tensor3 matrix_;
    Tensor3 inverse_;
};

// Transforms along the last axis of (B, N, L). Length mismatch throws.
Tensor3 dct_forward(const Tensor3& x, const DctPlan& plan);
Tensor3 dct_inverse(const Tensor3& coeffs, const DctPlan& plan);

}  // namespace fsmlp::frequency
