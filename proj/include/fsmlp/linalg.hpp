#pragma once

#include <cstdint>

#include "fsmlp/tensor.hpp"

namespace fsmlp::linalg {

// Thin SVD A = U * diag(s) * Vt with r = min(m, n), singular values sorted
// descending. One-sided Jacobi: accurate and simple at the layer sizes used
// here (hundreds at most).
struct Svd {
    Tensor3 u;   // (1, m, r)
    Tensor3 s;   // (1, 1, r)
    Tensor3 vt;  // (1, r, n)
};

Svd svd(const Tensor3& a);  // a: (1, m, n)

// U * diag(s) * Vt using the leading k triples; k in [1, r].
Tensor3 svd_reconstruct(const Svd& f, std::int64_t k);

}  // namespace fsmlp::linalg
