#include "fsmlp/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace fsmlp::linalg {

namespace {

// One-sided Jacobi on columns of G (m x n, m >= n): rotates column pairs
// until mutually orthogonal, accumulating the rotations in V. At
// convergence G = U * diag(s) with s the column norms, and A = G * V^T.
Svd svd_tall(const Tensor3& a) {
    const std::int64_t m = a.dim1(), n = a.dim2();
    std::vector<double> g(a.data(), a.data() + a.size());
    std::vector<double> v(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) v[static_cast<std::size_t>(i * n + i)] = 1.0;

    auto gcol = [&](std::int64_t i, std::int64_t j) -> double& {
        return g[static_cast<std::size_t>(i * n + j)];
    };
    auto vcol = [&](std::int64_t i, std::int64_t j) -> double& {
        return v[static_cast<std::size_t>(i * n + j)];
    };

    const double tol = 1e-14;
    const int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::int64_t p = 0; p < n - 1; ++p) {
            for (std::int64_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::int64_t i = 0; i < m; ++i) {
                    const double gp = gcol(i, p), gq = gcol(i, q);
                    app += gp * gp;
                    aqq += gq * gq;
                    apq += gp * gq;
                }
                if (std::fabs(apq) <= tol * std::sqrt(app * aqq)) continue;
                rotated = true;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                for (std::int64_t i = 0; i < m; ++i) {
                    const double gp = gcol(i, p), gq = gcol(i, q);
                    gcol(i, p) = cs * gp - sn * gq;
                    gcol(i, q) = sn * gp + cs * gq;
                }
                for (std::int64_t i = 0; i < n; ++i) {
                    const double vp = vcol(i, p), vq = vcol(i, q);
                    vcol(i, p) = cs * vp - sn * vq;
                    vcol(i, q) = sn * vp + cs * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sigma(static_cast<std::size_t>(n));
    for (std::int64_t j = 0; j < n; ++j) {
        double s2 = 0.0;
        for (std::int64_t i = 0; i < m; ++i) s2 += gcol(i, j) * gcol(i, j);
        sigma[static_cast<std::size_t>(j)] = std::sqrt(s2);
    }
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::int64_t x, std::int64_t y) {
        return sigma[static_cast<std::size_t>(x)] > sigma[static_cast<std::size_t>(y)];
    });

    Svd out{Tensor3(1, m, n), Tensor3(1, 1, n), Tensor3(1, n, n)};
    for (std::int64_t jj = 0; jj < n; ++jj) {
        const std::int64_t j = order[static_cast<std::size_t>(jj)];
        const double s = sigma[static_cast<std::size_t>(j)];
        out.s.at(0, 0, jj) = s;
        const double inv = s > 0.0 ? 1.0 / s : 0.0;
        for (std::int64_t i = 0; i < m; ++i) out.u.at(0, i, jj) = gcol(i, j) * inv;
        for (std::int64_t i = 0; i < n; ++i) out.vt.at(0, jj, i) = vcol(i, j);
    }
    return out;
}

}  // namespace

Svd svd(const Tensor3& a) {
    if (a.dim0() != 1) throw DimensionError("svd: expected (1, m, n), got " + a.shape().str());
    if (a.dim1() >= a.dim2()) return svd_tall(a);
    // Wide matrix: svd(A^T) = V S U^T, so swap the factors back.
    const Svd f = svd_tall(a.transposed12());
    Svd out;
    out.s = f.s;
    out.u = f.vt.transposed12();
    out.vt = f.u.transposed12();
    return out;
}

Tensor3 svd_reconstruct(const Svd& f, std::int64_t k) {
    const std::int64_t m = f.u.dim1(), n = f.vt.dim2(), r = f.s.dim2();
    if (k < 1 || k > r)
        throw DimensionError("svd_reconstruct: k=" + std::to_string(k) + " out of [1," +
                             std::to_string(r) + "]");
    Tensor3 out(1, m, n);
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::int64_t t = 0; t < k; ++t)
                s += f.u.at(0, i, t) * f.s.at(0, 0, t) * f.vt.at(0, t, j);
            out.at(0, i, j) = s;
        }
    return out;
}

}  // namespace fsmlp::linalg
