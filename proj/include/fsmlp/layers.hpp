#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fsmlp/autodiff.hpp"
#include "fsmlp/rng.hpp"
#include "fsmlp/tensor.hpp"

namespace fsmlp::layers {

using autodiff::ActKind;
using autodiff::Var;

// Entrywise nonnegativity transforms for the simplex reparameterization.
enum class TransformKind { Abs, LogOffset, Square };

// Which weight axis is normalized to sum to one. Input (default): each
// output unit's incoming weights form a convex-combination vector over the
// input channels, which is what makes the boundedness property hold. Output
// is the other reading of the normalization formula, kept selectable.
enum class SimplexAxis { Input, Output };

const char* transform_name(TransformKind k);
const char* axis_name(SimplexAxis a);
const char* activation_name(ActKind a);
TransformKind transform_from_name(const std::string& s);
SimplexAxis axis_from_name(const std::string& s);
ActKind activation_from_name(const std::string& s);

// Named handle to a trainable leaf; the unit the optimizer and checkpoint
// formats traffic in.
struct Parameter {
    std::string name;
    autodiff::NodePtr node;
};

// f_trans: entrywise |w|, log(|w|+1) or w^2. Total function, keeps shape.
Tensor3 simplex_transform(const Tensor3& w, TransformKind kind);

// f_norm: divides each normalization slice by its sum so slices sum to 1.
// Requires entrywise nonnegative input. Slices with sum < 1e-12 become the
// uniform vector 1/n; their count is reported through degenerate_count.
Tensor3 simplex_normalize(const Tensor3& t, SimplexAxis axis,
                          std::int64_t* degenerate_count = nullptr);

// Plain dense layer acting on the trailing axis: y = x @ W + b.
class LinearLayer {
public:
    LinearLayer() = default;
    // Raw weights ~ uniform(-k, k) with k = 1/sqrt(n_in); bias zero.
    LinearLayer(std::int64_t n_in, std::int64_t n_out, Rng& rng);

    Var forward(const Var& x) const;
    std::int64_t n_in() const { return n_in_; }
    std::int64_t n_out() const { return n_out_; }
    const Var& weights() const { return w_; }
    const Var& bias() const { return b_; }
    void collect_parameters(std::vector<Parameter>& out, const std::string& prefix) const;
    static std::int64_t parameter_count(std::int64_t n_in, std::int64_t n_out) {
        return n_in * n_out + n_out;
    }

private:
    std::int64_t n_in_ = 0, n_out_ = 0;
    Var w_;  // (1, n_in, n_out)
    Var b_;  // (1, 1, n_out)
};

// Linear layer whose effective weights f_sim(W) = f_norm(f_trans(W)) live on
// the standard simplex. The constraint is a reparameterization: raw weights
// are unconstrained, effective weights are rebuilt from them on every
// forward pass, and gradients flow through f_sim into the raw weights.
class SimplexLinearLayer {
public:
    SimplexLinearLayer() = default;
    SimplexLinearLayer(std::int64_t n_in, std::int64_t n_out, TransformKind transform,
                       SimplexAxis axis, Rng& rng);

    // Differentiable f_sim(W) subgraph; degenerate slices hit this pass are
    // added to degenerate_slices_seen().
    Var effective_weights_var() const;
    // Plain snapshot for inspection/tests.
    Tensor3 effective_weights() const;

    Var forward(const Var& x) const;  // x (B, F, n_in) -> (B, F, n_out)

    TransformKind transform() const { return transform_; }
    SimplexAxis axis() const { return axis_; }
    const Var& raw_weights() const { return w_; }
    const Var& bias() const { return b_; }
    std::int64_t degenerate_slices_seen() const { return degenerate_seen_; }
    void collect_parameters(std::vector<Parameter>& out, const std::string& prefix) const;

private:
    std::int64_t n_in_ = 0, n_out_ = 0;
    TransformKind transform_ = TransformKind::LogOffset;
    SimplexAxis axis_ = SimplexAxis::Input;
    Var w_;
    Var b_;
    mutable std::int64_t degenerate_seen_ = 0;
};

// Reversible per-instance, per-channel standardization over the time axis.
// scale stores std + eps so that denormalize(normalize(x)) == x.
struct RevinState {
    Tensor3 mean;   // (B, N, 1)
    Tensor3 scale;  // (B, N, 1)
};

inline constexpr double kRevinEps = 1e-5;

RevinState revin_state(const Tensor3& x, double eps = kRevinEps);  // x (B,N,L), L >= 2
Tensor3 revin_normalize(const Tensor3& x, const RevinState& state);
Tensor3 revin_denormalize(const Tensor3& y, const RevinState& state);
// Differentiable denormalization for the model output path.
Var revin_denormalize(const Var& y, const RevinState& state);

// Channel-mixing sub-layer of the SCWM block, swappable for the constraint
// comparison: simplex reparameterization, plain linear (optionally with an
// L1/L2 penalty contributed to the loss), or an SVD-compressed layer.
class ChannelMixer {
public:
    virtual ~ChannelMixer() = default;
    virtual Var forward(const Var& x) const = 0;
    virtual void collect_parameters(std::vector<Parameter>& out,
                                    const std::string& prefix) const = 0;
    // Loss penalty term; undefined Var means none.
    virtual Var penalty() const { return {}; }
    virtual std::string kind_name() const = 0;
    virtual std::int64_t parameter_count() const = 0;
    virtual const SimplexLinearLayer* as_simplex() const { return nullptr; }
};

class SimplexMixer final : public ChannelMixer {
public:
    SimplexMixer(std::int64_t n, TransformKind transform, SimplexAxis axis, Rng& rng)
        : layer_(n, n, transform, axis, rng), n_(n) {}
    Var forward(const Var& x) const override { return layer_.forward(x); }
    void collect_parameters(std::vector<Parameter>& out,
                            const std::string& prefix) const override {
        layer_.collect_parameters(out, prefix);
    }
    std::string kind_name() const override { return "simplex"; }
    std::int64_t parameter_count() const override { return n_ * n_ + n_; }
    const SimplexLinearLayer* as_simplex() const override { return &layer_; }

private:
    SimplexLinearLayer layer_;
    std::int64_t n_;
};

// Unconstrained mixer; lambda_l1/lambda_l2 > 0 add weight penalties to the
// training loss (bias excluded).
class PlainMixer final : public ChannelMixer {
public:
    PlainMixer(std::int64_t n, double lambda_l1, double lambda_l2, Rng& rng)
        : layer_(n, n, rng), lambda_l1_(lambda_l1), lambda_l2_(lambda_l2), n_(n) {}
    Var forward(const Var& x) const override { return layer_.forward(x); }
    void collect_parameters(std::vector<Parameter>& out,
                            const std::string& prefix) const override {
        layer_.collect_parameters(out, prefix);
    }
    Var penalty() const override;
    std::string kind_name() const override;
    std::int64_t parameter_count() const override { return n_ * n_ + n_; }
    const LinearLayer& layer() const { return layer_; }

private:
    LinearLayer layer_;
    double lambda_l1_ = 0.0, lambda_l2_ = 0.0;
    std::int64_t n_;
};

// Compressed mixer: the weight matrix is stored as rank-k SVD factors and
// reconstructed (differentiably) before every forward pass.
class SvdMixer final : public ChannelMixer {
public:
    SvdMixer(std::int64_t n, std::int64_t rank, Rng& rng);
    Var forward(const Var& x) const override;
    void collect_parameters(std::vector<Parameter>& out,
                            const std::string& prefix) const override;
    std::string kind_name() const override { return "svd"; }
    std::int64_t parameter_count() const override { return 2 * n_ * rank_ + rank_ + n_; }
    Tensor3 reconstructed_weights() const;
    std::int64_t rank() const { return rank_; }

private:
    Var u_;   // (1, n, k)
    Var s_;   // (1, 1, k)
    Var vt_;  // (1, k, n)
    Var b_;   // (1, 1, n)
    std::int64_t n_ = 0, rank_ = 0;
};

using MixerFactory =
    std::function<std::unique_ptr<ChannelMixer>(std::int64_t n_channels, Rng& rng)>;

// Serializable description of a channel-mixer choice; "simplex", "none",
// "l1[:lambda]", "l2[:lambda]", "svd:k".
struct MixerSpec {
    enum class Kind { Simplex, Plain, L1, L2, Svd };
    Kind kind = Kind::Simplex;
    double lambda = 1e-4;   // L1/L2 penalty weight
    std::int64_t rank = 1;  // SVD rank
};

MixerFactory make_mixer_factory(const MixerSpec& spec, TransformKind transform,
                                SimplexAxis axis);
std::string mixer_spec_to_string(const MixerSpec& spec);
MixerSpec mixer_spec_from_string(const std::string& s);

// Residual block on (B, F, N): simplex (or substitute) channel mixing with
// activation and residual, then a one-layer temporal MLP over the feature
// axis with activation and residual.
class ScwmBlock {
public:
    ScwmBlock(std::int64_t n_channels, std::int64_t n_features, ActKind act,
              const MixerFactory& mixer_factory, Rng& rng);

    Var forward(const Var& z) const;  // (B, F, N) -> (B, F, N)
    const ChannelMixer& mixer() const { return *mixer_; }
    void collect_parameters(std::vector<Parameter>& out, const std::string& prefix) const;
    std::int64_t parameter_count() const;

private:
    std::unique_ptr<ChannelMixer> mixer_;
    LinearLayer temporal_;
    ActKind act_;
    std::int64_t n_channels_ = 0;
};

// Residual temporal block on (B, N, F): one linear map over the feature axis
// with activation and residual.
class FtmBlock {
public:
    FtmBlock(std::int64_t n_features, ActKind act, Rng& rng);

    Var forward(const Var& z) const;  // (B, N, F) -> (B, N, F)
    void collect_parameters(std::vector<Parameter>& out, const std::string& prefix) const;
    std::int64_t parameter_count() const;
    const LinearLayer& linear() const { return lin_; }

private:
    LinearLayer lin_;
    ActKind act_;
};

}  // namespace fsmlp::layers
