#include "fsmlp/autodiff.hpp"

#include <array>
#include <cmath>
#include <unordered_set>

#include "fsmlp/kernels.hpp"

namespace fsmlp::autodiff {
namespace {

using kernels::active;

NodePtr make_node(Tensor3 value, std::vector<NodePtr> parents,
                  std::function<void(Node&)> bwd) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->grad = Tensor3(n->value.shape());
        n->backward_fn = std::move(bwd);
    }
    return n;
}

// Per-axis element strides; 0 marks a broadcast axis.
struct Strides3 {
    std::int64_t s0, s1, s2;
};

Strides3 strides_for(const Shape3& operand, const Shape3& out) {
    Strides3 s{operand.d1 * operand.d2, operand.d2, 1};
    if (operand.d0 == 1 && out.d0 > 1) s.s0 = 0;
    if (operand.d1 == 1 && out.d1 > 1) s.s1 = 0;
    if (operand.d2 == 1 && out.d2 > 1) s.s2 = 0;
    return s;
}

Shape3 broadcast_out(const Shape3& a, const Shape3& b, const char* where) {
    auto pick = [&](std::int64_t x, std::int64_t y) -> std::int64_t {
        if (x == y || y == 1) return x;
        if (x == 1) return y;
        throw DimensionError(std::string(where) + ": incompatible shapes " + a.str() +
                             " vs " + b.str());
    };
    return Shape3{pick(a.d0, b.d0), pick(a.d1, b.d1), pick(a.d2, b.d2)};
}

template <typename F>
void ew_apply(const Shape3& out, const Tensor3& a, const Tensor3& b, double* dst, F f) {
    const Strides3 sa = strides_for(a.shape(), out);
    const Strides3 sb = strides_for(b.shape(), out);
    const double* pa = a.data();
    const double* pb = b.data();
    std::int64_t idx = 0;
    for (std::int64_t i = 0; i < out.d0; ++i)
        for (std::int64_t j = 0; j < out.d1; ++j) {
            const double* ra = pa + i * sa.s0 + j * sa.s1;
            const double* rb = pb + i * sb.s0 + j * sb.s1;
            for (std::int64_t k = 0; k < out.d2; ++k)
                dst[idx++] = f(ra[k * sa.s2], rb[k * sb.s2]);
        }
}

// grad_parent[parent index] += f(out index) over the broadcast mapping.
template <typename F>
void ew_accumulate(const Shape3& out, Tensor3& pgrad, F f) {
    const Strides3 sp = strides_for(pgrad.shape(), out);
    double* pg = pgrad.data();
    std::int64_t idx = 0;
    for (std::int64_t i = 0; i < out.d0; ++i)
        for (std::int64_t j = 0; j < out.d1; ++j) {
            double* rp = pg + i * sp.s0 + j * sp.s1;
            for (std::int64_t k = 0; k < out.d2; ++k) rp[k * sp.s2] += f(idx++);
        }
}

void check_div_guard(const Tensor3& denom) {
    const double* d = denom.data();
    for (std::int64_t i = 0; i < denom.size(); ++i)
        if (std::fabs(d[i]) < kDivGuard)
            throw NumericError("div: denominator entry " + std::to_string(i) +
                               " below guard 1e-30");
}

}  // namespace

Var constant(Tensor3 value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var leaf(Tensor3 value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->grad = Tensor3(n->value.shape());
    return Var(std::move(n));
}

Var scalar_constant(double v) { return constant(Tensor3::scalar(v)); }

Var elementwise(EwKind kind, const Var& a, const Var& b) {
    const Shape3 out = broadcast_out(a.shape(), b.shape(), "elementwise");
    const bool same = a.shape() == out && b.shape() == out;
    Tensor3 value = Tensor3::uninitialized(out);
    const auto& ops = active();
    if (kind == EwKind::Div) check_div_guard(b.value());
    if (same) {
        const auto n = static_cast<std::size_t>(value.size());
        switch (kind) {
            case EwKind::Add: ops.add(a.value().data(), b.value().data(), value.data(), n); break;
            case EwKind::Sub: ops.sub(a.value().data(), b.value().data(), value.data(), n); break;
            case EwKind::Mul: ops.mul(a.value().data(), b.value().data(), value.data(), n); break;
            case EwKind::Div: ops.div(a.value().data(), b.value().data(), value.data(), n); break;
        }
    } else {
        switch (kind) {
            case EwKind::Add: ew_apply(out, a.value(), b.value(), value.data(), [](double x, double y) { return x + y; }); break;
            case EwKind::Sub: ew_apply(out, a.value(), b.value(), value.data(), [](double x, double y) { return x - y; }); break;
            case EwKind::Mul: ew_apply(out, a.value(), b.value(), value.data(), [](double x, double y) { return x * y; }); break;
            case EwKind::Div: ew_apply(out, a.value(), b.value(), value.data(), [](double x, double y) { return x / y; }); break;
        }
    }
    return Var(make_node(std::move(value), {a.node(), b.node()}, [kind, out, same](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        const double* g = n.grad.data();
        const auto& ops = active();
        const auto sz = static_cast<std::size_t>(n.grad.size());
        switch (kind) {
            case EwKind::Add:
                if (pa.requires_grad) {
                    if (same) ops.axpy(1.0, g, pa.grad.data(), sz);
                    else ew_accumulate(out, pa.grad, [&](std::int64_t i) { return g[i]; });
                }
                if (pb.requires_grad) {
                    if (same) ops.axpy(1.0, g, pb.grad.data(), sz);
                    else ew_accumulate(out, pb.grad, [&](std::int64_t i) { return g[i]; });
                }
                break;
            case EwKind::Sub:
                if (pa.requires_grad) {
                    if (same) ops.axpy(1.0, g, pa.grad.data(), sz);
                    else ew_accumulate(out, pa.grad, [&](std::int64_t i) { return g[i]; });
                }
                if (pb.requires_grad) {
                    if (same) ops.axpy(-1.0, g, pb.grad.data(), sz);
                    else ew_accumulate(out, pb.grad, [&](std::int64_t i) { return -g[i]; });
                }
                break;
            case EwKind::Mul: {
                if (pa.requires_grad) {
                    if (same) ops.fma_acc(g, pb.value.data(), pa.grad.data(), sz);
                    else {
                        const Strides3 sb = strides_for(pb.value.shape(), out);
                        const double* vb = pb.value.data();
                        std::int64_t i2 = 0, j2 = 0, k2 = 0;
                        (void)i2; (void)j2; (void)k2;
                        // recompute b's broadcast value per out index
                        std::int64_t idx = 0;
                        std::vector<double> contrib(static_cast<std::size_t>(n.grad.size()));
                        for (std::int64_t i = 0; i < out.d0; ++i)
                            for (std::int64_t j = 0; j < out.d1; ++j) {
                                const double* rb = vb + i * sb.s0 + j * sb.s1;
                                for (std::int64_t k = 0; k < out.d2; ++k, ++idx)
                                    contrib[static_cast<std::size_t>(idx)] = g[idx] * rb[k * sb.s2];
                            }
                        ew_accumulate(out, pa.grad, [&](std::int64_t i) { return contrib[static_cast<std::size_t>(i)]; });
                    }
                }
                if (pb.requires_grad) {
                    if (same) ops.fma_acc(g, pa.value.data(), pb.grad.data(), sz);
                    else {
                        const Strides3 sa = strides_for(pa.value.shape(), out);
                        const double* va = pa.value.data();
                        std::int64_t idx = 0;
                        std::vector<double> contrib(static_cast<std::size_t>(n.grad.size()));
                        for (std::int64_t i = 0; i < out.d0; ++i)
                            for (std::int64_t j = 0; j < out.d1; ++j) {
                                const double* ra = va + i * sa.s0 + j * sa.s1;
                                for (std::int64_t k = 0; k < out.d2; ++k, ++idx)
                                    contrib[static_cast<std::size_t>(idx)] = g[idx] * ra[k * sa.s2];
                            }
                        ew_accumulate(out, pb.grad, [&](std::int64_t i) { return contrib[static_cast<std::size_t>(i)]; });
                    }
                }
                break;
            }
            case EwKind::Div: {
                const Strides3 sa = strides_for(pa.value.shape(), out);
                const Strides3 sb = strides_for(pb.value.shape(), out);
                const double* va = pa.value.data();
                const double* vb = pb.value.data();
                std::vector<double> da, db;
                if (pa.requires_grad) da.resize(static_cast<std::size_t>(n.grad.size()));
                if (pb.requires_grad) db.resize(static_cast<std::size_t>(n.grad.size()));
                std::int64_t idx = 0;
                for (std::int64_t i = 0; i < out.d0; ++i)
                    for (std::int64_t j = 0; j < out.d1; ++j) {
                        const double* ra = va + i * sa.s0 + j * sa.s1;
                        const double* rb = vb + i * sb.s0 + j * sb.s1;
                        for (std::int64_t k = 0; k < out.d2; ++k, ++idx) {
                            const double bv = rb[k * sb.s2];
                            if (!da.empty()) da[static_cast<std::size_t>(idx)] = g[idx] / bv;
                            if (!db.empty())
                                db[static_cast<std::size_t>(idx)] =
                                    -g[idx] * ra[k * sa.s2] / (bv * bv);
                        }
                    }
                if (pa.requires_grad)
                    ew_accumulate(out, pa.grad, [&](std::int64_t i) { return da[static_cast<std::size_t>(i)]; });
                if (pb.requires_grad)
                    ew_accumulate(out, pb.grad, [&](std::int64_t i) { return db[static_cast<std::size_t>(i)]; });
                break;
            }
        }
    }));
}

Var add(const Var& a, const Var& b) { return elementwise(EwKind::Add, a, b); }
Var sub(const Var& a, const Var& b) { return elementwise(EwKind::Sub, a, b); }
Var mul(const Var& a, const Var& b) { return elementwise(EwKind::Mul, a, b); }
Var div(const Var& a, const Var& b) { return elementwise(EwKind::Div, a, b); }

Var unary(UnaryKind kind, const Var& a) {
    const auto& ops = active();
    Tensor3 value = Tensor3::uninitialized(a.shape());
    const auto n = static_cast<std::size_t>(value.size());
    switch (kind) {
        case UnaryKind::Abs: ops.abs_val(a.value().data(), value.data(), n); break;
        case UnaryKind::Log1pAbs: ops.log1p_abs(a.value().data(), value.data(), n); break;
        case UnaryKind::Square: ops.square(a.value().data(), value.data(), n); break;
        case UnaryKind::Relu: ops.relu(a.value().data(), value.data(), n); break;
        case UnaryKind::Gelu: ops.gelu(a.value().data(), value.data(), n); break;
    }
    return Var(make_node(std::move(value), {a.node()}, [kind](Node& node) {
        Node& p = *node.parents[0];
        if (!p.requires_grad) return;
        const auto& ops = active();
        const auto sz = static_cast<std::size_t>(node.grad.size());
        const double* x = p.value.data();
        const double* g = node.grad.data();
        double* out = p.grad.data();
        switch (kind) {
            case UnaryKind::Abs: ops.abs_bwd_acc(x, g, out, sz); break;
            case UnaryKind::Log1pAbs: ops.log1p_abs_bwd_acc(x, g, out, sz); break;
            case UnaryKind::Square: ops.square_bwd_acc(x, g, out, sz); break;
            case UnaryKind::Relu: ops.relu_bwd_acc(x, g, out, sz); break;
            case UnaryKind::Gelu: ops.gelu_bwd_acc(x, g, out, sz); break;
        }
    }));
}

Var abs_val(const Var& a) { return unary(UnaryKind::Abs, a); }
Var log1p_abs(const Var& a) { return unary(UnaryKind::Log1pAbs, a); }
Var square(const Var& a) { return unary(UnaryKind::Square, a); }
Var relu(const Var& a) { return unary(UnaryKind::Relu, a); }
Var gelu(const Var& a) { return unary(UnaryKind::Gelu, a); }

Var activation(const Var& a, ActKind kind) {
    return kind == ActKind::Gelu ? gelu(a) : relu(a);
}

Var scale(const Var& a, double s) {
    Tensor3 value = Tensor3::uninitialized(a.shape());
    active().scale(a.value().data(), s, value.data(), static_cast<std::size_t>(value.size()));
    return Var(make_node(std::move(value), {a.node()}, [s](Node& node) {
        Node& p = *node.parents[0];
        if (!p.requires_grad) return;
        active().axpy(s, node.grad.data(), p.grad.data(),
                      static_cast<std::size_t>(node.grad.size()));
    }));
}

namespace {

Var reduce_impl(const Var& a, unsigned axes_mask, bool mean) {
    if (axes_mask == 0) throw DimensionError("reduce: empty axis set");
    if (axes_mask > kAxisAll) throw DimensionError("reduce: bad axis mask");
    const Shape3 in = a.shape();
    Shape3 out = in;
    std::int64_t count = 1;
    if (axes_mask & 1u) { count *= in.d0; out.d0 = 1; }
    if (axes_mask & 2u) { count *= in.d1; out.d1 = 1; }
    if (axes_mask & 4u) { count *= in.d2; out.d2 = 1; }
    const double factor = mean ? 1.0 / static_cast<double>(count) : 1.0;

    Tensor3 value(out);
    const Strides3 so = strides_for(out, in);  // 0-stride on reduced axes
    double* dst = value.data();
    const double* src = a.value().data();
    std::int64_t idx = 0;
    for (std::int64_t i = 0; i < in.d0; ++i)
        for (std::int64_t j = 0; j < in.d1; ++j) {
            double* rd = dst + i * so.s0 + j * so.s1;
            for (std::int64_t k = 0; k < in.d2; ++k) rd[k * so.s2] += src[idx++];
        }
    if (mean)
        for (std::int64_t i = 0; i < value.size(); ++i) dst[i] *= factor;

    return Var(make_node(std::move(value), {a.node()}, [in, factor](Node& node) {
        Node& p = *node.parents[0];
        if (!p.requires_grad) return;
        const Strides3 so = strides_for(node.value.shape(), in);
        const double* g = node.grad.data();
        double* pg = p.grad.data();
        std::int64_t idx = 0;
        for (std::int64_t i = 0; i < in.d0; ++i)
            for (std::int64_t j = 0; j < in.d1; ++j) {
                const double* rg = g + i * so.s0 + j * so.s1;
                for (std::int64_t k = 0; k < in.d2; ++k) pg[idx++] += factor * rg[k * so.s2];
            }
    }));
}

}  // namespace

Var reduce_sum(const Var& a, unsigned axes_mask) { return reduce_impl(a, axes_mask, false); }
Var reduce_mean(const Var& a, unsigned axes_mask) { return reduce_impl(a, axes_mask, true); }

Var matmul(const Var& a, const Var& b) {
    const Shape3 sa = a.shape();
    const Shape3 sb = b.shape();
    if (sa.d2 != sb.d1)
        throw DimensionError("matmul: inner dimensions disagree, " + sa.str() + " x " + sb.str());
    if (sa.d0 != sb.d0 && sa.d0 != 1 && sb.d0 != 1)
        throw DimensionError("matmul: batch dimensions disagree, " + sa.str() + " x " + sb.str());
    const std::int64_t batch = std::max(sa.d0, sb.d0);
    const std::int64_t m = sa.d1, k = sa.d2, n = sb.d2;
    // Shared right operand: the batch stacks into one (batch*m, k) x (k, n)
    // product, which keeps the gemm kernels on large shapes.
    const bool stacked = sb.d0 == 1;

    Tensor3 value = Tensor3::uninitialized({batch, m, n});
    const auto& ops = active();
    if (stacked) {
        ops.gemm_nn(a.value().data(), b.value().data(), value.data(), batch * m, k, n, false);
    } else {
        for (std::int64_t t = 0; t < batch; ++t) {
            const double* pa = a.value().data() + (sa.d0 == 1 ? 0 : t) * m * k;
            const double* pb = b.value().data() + t * k * n;
            ops.gemm_nn(pa, pb, value.data() + t * m * n, m, k, n, false);
        }
    }
    return Var(make_node(std::move(value), {a.node(), b.node()},
                         [batch, m, k, n, sa, sb, stacked](Node& node) {
        Node& pa = *node.parents[0];
        Node& pb = *node.parents[1];
        const auto& ops = active();
        const double* g = node.grad.data();
        if (stacked && sa.d0 == batch) {
            if (pa.requires_grad)
                ops.gemm_nt(g, pb.value.data(), pa.grad.data(), batch * m, n, k, true);
            if (pb.requires_grad)
                ops.gemm_tn(pa.value.data(), g, pb.grad.data(), k, batch * m, n, true);
            return;
        }
        for (std::int64_t t = 0; t < batch; ++t) {
            const double* gt = g + t * m * n;
            if (pa.requires_grad) {
                const double* bv = pb.value.data() + (sb.d0 == 1 ? 0 : t) * k * n;
                double* ga = pa.grad.data() + (sa.d0 == 1 ? 0 : t) * m * k;
                ops.gemm_nt(gt, bv, ga, m, n, k, true);
            }
            if (pb.requires_grad) {
                const double* av = pa.value.data() + (sa.d0 == 1 ? 0 : t) * m * k;
                double* gb = pb.grad.data() + (sb.d0 == 1 ? 0 : t) * k * n;
                ops.gemm_tn(av, gt, gb, k, m, n, true);
            }
        }
    }));
}

Var fixed_linear_map(const Var& a, const Tensor3& matrix) {
    const Shape3 sa = a.shape();
    if (matrix.dim0() != 1 || matrix.dim1() != matrix.dim2())
        throw DimensionError("fixed_linear_map: matrix must be (1,L,L), got " +
                             matrix.shape().str());
    const std::int64_t L = matrix.dim1();
    if (sa.d2 != L)
        throw DimensionError("fixed_linear_map: trailing dim " + sa.str() +
                             " does not match matrix side " + std::to_string(L));
    const std::int64_t rows = sa.d0 * sa.d1;
    Tensor3 value = Tensor3::uninitialized(sa);
    // out rows = in rows * matrix^T
    active().gemm_nt(a.value().data(), matrix.data(), value.data(), rows, L, L, false);
    return Var(make_node(std::move(value), {a.node()}, [matrix, rows, L](Node& node) {
        Node& p = *node.parents[0];
        if (!p.requires_grad) return;
        active().gemm_nn(node.grad.data(), matrix.data(), p.grad.data(), rows, L, L, true);
    }));
}

Var transpose12(const Var& a) {
    Tensor3 value = a.value().transposed12();
    return Var(make_node(std::move(value), {a.node()}, [](Node& node) {
        Node& p = *node.parents[0];
        if (!p.requires_grad) return;
        const Tensor3 gt = node.grad.transposed12();
        active().axpy(1.0, gt.data(), p.grad.data(), static_cast<std::size_t>(gt.size()));
    }));
}

Var normalize_sum(const Var& a, int axis, std::int64_t* degenerate_count) {
    if (axis != 1 && axis != 2)
        throw DimensionError("normalize_sum: axis must be 1 or 2, got " + std::to_string(axis));
    const Shape3 s = a.shape();
    const std::int64_t slice_len = axis == 1 ? s.d1 : s.d2;
    const std::int64_t n_slices = axis == 1 ? s.d0 * s.d2 : s.d0 * s.d1;
    const double uniform = 1.0 / static_cast<double>(slice_len);

    auto sums = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n_slices), 0.0);
    auto degen = std::make_shared<std::vector<char>>(static_cast<std::size_t>(n_slices), 0);

    const double* src = a.value().data();
    Tensor3 value = Tensor3::uninitialized(s);
    double* dst = value.data();
    std::int64_t n_degenerate = 0;

    auto slice_index = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
        return axis == 1 ? i * s.d2 + k : i * s.d1 + j;
    };
    std::int64_t idx = 0;
    for (std::int64_t i = 0; i < s.d0; ++i)
        for (std::int64_t j = 0; j < s.d1; ++j)
            for (std::int64_t k = 0; k < s.d2; ++k, ++idx)
                (*sums)[static_cast<std::size_t>(slice_index(i, j, k))] += src[idx];
    for (std::int64_t t = 0; t < n_slices; ++t) {
        if ((*sums)[static_cast<std::size_t>(t)] < kDegenerateSliceSum) {
            (*degen)[static_cast<std::size_t>(t)] = 1;
            ++n_degenerate;
        }
    }
    idx = 0;
    for (std::int64_t i = 0; i < s.d0; ++i)
        for (std::int64_t j = 0; j < s.d1; ++j)
            for (std::int64_t k = 0; k < s.d2; ++k, ++idx) {
                const std::int64_t t = slice_index(i, j, k);
                dst[idx] = (*degen)[static_cast<std::size_t>(t)]
                               ? uniform
                               : src[idx] / (*sums)[static_cast<std::size_t>(t)];
            }
    if (degenerate_count != nullptr) *degenerate_count = n_degenerate;

    return Var(make_node(std::move(value), {a.node()}, [s, axis, sums, degen](Node& node) {
        Node& p = *node.parents[0];
        if (!p.requires_grad) return;
        // y = t / s  =>  dL/dt_i = (g_i - sum_k g_k y_k) / s, per slice.
        const std::int64_t n_slices = axis == 1 ? s.d0 * s.d2 : s.d0 * s.d1;
        std::vector<double> gdot(static_cast<std::size_t>(n_slices), 0.0);
        const double* g = node.grad.data();
        const double* y = node.value.data();
        auto slice_index = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
            return axis == 1 ? i * s.d2 + k : i * s.d1 + j;
        };
        std::int64_t idx = 0;
        for (std::int64_t i = 0; i < s.d0; ++i)
            for (std::int64_t j = 0; j < s.d1; ++j)
                for (std::int64_t k = 0; k < s.d2; ++k, ++idx)
                    gdot[static_cast<std::size_t>(slice_index(i, j, k))] += g[idx] * y[idx];
        double* pg = p.grad.data();
        idx = 0;
        for (std::int64_t i = 0; i < s.d0; ++i)
            for (std::int64_t j = 0; j < s.d1; ++j)
                for (std::int64_t k = 0; k < s.d2; ++k, ++idx) {
                    const std::int64_t t = slice_index(i, j, k);
                    if ((*degen)[static_cast<std::size_t>(t)]) continue;
                    pg[idx] += (g[idx] - gdot[static_cast<std::size_t>(t)]) /
                               (*sums)[static_cast<std::size_t>(t)];
                }
    }));
}

void backward(const Var& root) {
    Node* r = root.node().get();
    if (r == nullptr) throw Error("backward: undefined root");
    if (r->value.size() != 1)
        throw DimensionError("backward: root must be scalar, got shape " +
                             r->value.shape().str());
    if (!r->requires_grad) return;

    // Post-order DFS over grad-requiring parents; `order` ends leaves-first.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    visited.insert(r);
    stack.emplace_back(r, 0);
    while (!stack.empty()) {
        auto& frame = stack.back();
        Node* n = frame.first;
        if (frame.second < n->parents.size()) {
            Node* p = n->parents[frame.second++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    // Intermediates restart from zero; leaves keep accumulating. Fresh nodes
    // were zero-initialized, so only grads a previous backward touched need
    // the reset.
    for (Node* n : order)
        if (n->backward_fn && n->grad_dirty) n->zero_grad();
    r->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    for (Node* n : order)
        if (n->backward_fn) n->grad_dirty = true;
}

}  // namespace fsmlp::autodiff
