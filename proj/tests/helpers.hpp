#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fsmlp/autodiff.hpp"
#include "fsmlp/rng.hpp"
#include "fsmlp/tensor.hpp"

namespace fsmlp::test {

// Central finite differences vs reverse-mode gradients. `loss_fn` must
// rebuild the graph from the leaf values on every call. Returns the worst
// relative error over all checked entries.
struct GradcheckResult {
    double worst_rel = 0.0;
    std::string worst_at;
    bool ok = true;
};

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckRelTol = 1e-5;
inline constexpr double kGradcheckAbsFloor = 1e-8;

inline GradcheckResult gradcheck(const std::vector<autodiff::Var>& leaves,
                                 const std::function<autodiff::Var()>& loss_fn,
                                 double rel_tol = kGradcheckRelTol,
                                 double abs_floor = kGradcheckAbsFloor,
                                 double step = kGradcheckStep) {
    GradcheckResult result;
    for (const auto& leaf : leaves) leaf.node()->zero_grad();
    autodiff::Var loss = loss_fn();
    autodiff::backward(loss);

    std::vector<Tensor3> analytic;
    analytic.reserve(leaves.size());
    for (const auto& leaf : leaves) analytic.push_back(leaf.grad());

    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Tensor3& value = leaves[li].node()->value;
        for (std::int64_t i = 0; i < value.size(); ++i) {
            const double saved = value[i];
            value[i] = saved + step;
            const double up = loss_fn().value().item();
            value[i] = saved - step;
            const double down = loss_fn().value().item();
            value[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double ad = analytic[li][i];
            const double err = std::fabs(ad - fd);
            const double scale = std::max({std::fabs(ad), std::fabs(fd), abs_floor});
            const double rel = err / scale;
            if (rel > result.worst_rel) {
                result.worst_rel = rel;
                result.worst_at =
                    "leaf " + std::to_string(li) + " entry " + std::to_string(i) + " ad=" +
                    std::to_string(ad) + " fd=" + std::to_string(fd);
            }
            if (err > abs_floor && rel > rel_tol) result.ok = false;
        }
    }
    return result;
}

inline Tensor3 random_tensor(Shape3 s, Rng& rng, double lo = -2.0, double hi = 2.0) {
    return Tensor3::random_uniform(s, lo, hi, rng);
}

}  // namespace fsmlp::test
