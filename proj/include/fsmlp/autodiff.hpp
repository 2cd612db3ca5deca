#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "fsmlp/tensor.hpp"

namespace fsmlp::autodiff {

// Reverse-mode engine over Tensor3. Define-by-run: every forward pass builds
// a fresh graph of Node objects on top of long-lived leaf nodes (parameters).
// backward() from a scalar loss accumulates d(loss)/d(leaf) into leaf grads.
// Leaf grads are NOT cleared by backward(), so two backward calls without
// zero_grad() in between accumulate both contributions.

struct Node {
    Tensor3 value;
    Tensor3 grad;  // allocated iff requires_grad
    bool requires_grad = false;
    bool grad_dirty = false;  // set once backward has written into grad
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // empty for leaves/constants

    void zero_grad() {
        if (requires_grad) grad.zero();
        grad_dirty = false;
    }
};

using NodePtr = std::shared_ptr<Node>;

// Value-semantic handle to a graph node.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : node_(std::move(n)) {}

    const Tensor3& value() const { return node_->value; }
    const Tensor3& grad() const { return node_->grad; }
    const Shape3& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const NodePtr& node() const { return node_; }
    bool defined() const { return node_ != nullptr; }

private:
    NodePtr node_;
};

// Leaf constructors.
Var constant(Tensor3 value);               // no gradient tracking
Var leaf(Tensor3 value);                   // trainable parameter leaf
Var scalar_constant(double v);

enum class ActKind { Gelu, Relu };
enum class EwKind { Add, Sub, Mul, Div };
enum class UnaryKind { Abs, Log1pAbs, Square, Relu, Gelu };

// Elementwise with NumPy-style broadcasting across the three fixed axes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// Denominator entries with |b| < 1e-30 trip a NumericError.
Var div(const Var& a, const Var& b);
Var elementwise(EwKind kind, const Var& a, const Var& b);

Var abs_val(const Var& a);
Var log1p_abs(const Var& a);
Var square(const Var& a);
Var relu(const Var& a);
Var gelu(const Var& a);
Var activation(const Var& a, ActKind kind);
Var unary(UnaryKind kind, const Var& a);

Var scale(const Var& a, double s);

// Reductions keep rank 3; reduced axes become size 1 (axes is a bitmask of
// {1,2,4} for dims {0,1,2}). Reducing with an empty axis set is an error.
Var reduce_sum(const Var& a, unsigned axes_mask);
Var reduce_mean(const Var& a, unsigned axes_mask);
constexpr unsigned kAxisAll = 0b111;

// a: (Ba, M, K), b: (Bb, K, N) with Ba == Bb or either equal to 1.
Var matmul(const Var& a, const Var& b);

// out[..., k] = sum_t matrix(0, k, t) * a[..., t]; backward applies the
// transpose. matrix must be square with side == a.dim2().
Var fixed_linear_map(const Var& a, const Tensor3& matrix);

Var transpose12(const Var& a);

// y = a / sum(a, axis) along axis in {1, 2}; slices whose sum falls below
// 1e-12 are replaced by the uniform vector 1/n and carry zero gradient.
// When degenerate_count is non-null it receives the number of such slices.
Var normalize_sum(const Var& a, int axis, std::int64_t* degenerate_count = nullptr);

// Runs reverse accumulation from a scalar (1,1,1) root. Intermediate grads
// are reset first; leaf grads accumulate.
void backward(const Var& root);

// Threshold below which a normalization slice counts as degenerate.
inline constexpr double kDegenerateSliceSum = 1e-12;
inline constexpr double kDivGuard = 1e-30;

}  // namespace fsmlp::autodiff
