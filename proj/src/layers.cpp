#include "fsmlp/layers.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "fsmlp/kernels.hpp"
#include "fsmlp/linalg.hpp"

namespace fsmlp::layers {

namespace ad = fsmlp::autodiff;

const char* transform_name(TransformKind k) {
    switch (k) {
        case TransformKind::Abs: return "abs";
        case TransformKind::LogOffset: return "log";
        case TransformKind::Square: return "square";
    }
    return "?";
}

const char* axis_name(SimplexAxis a) { return a == SimplexAxis::Input ? "input" : "output"; }

const char* activation_name(ActKind a) { return a == ActKind::Gelu ? "gelu" : "relu"; }

TransformKind transform_from_name(const std::string& s) {
    if (s == "abs") return TransformKind::Abs;
    if (s == "log") return TransformKind::LogOffset;
    if (s == "square") return TransformKind::Square;
    throw ConfigError("unknown transform '" + s + "' (expected abs|log|square)");
}

SimplexAxis axis_from_name(const std::string& s) {
    if (s == "input") return SimplexAxis::Input;
    if (s == "output") return SimplexAxis::Output;
    throw ConfigError("unknown simplex_axis '" + s + "' (expected input|output)");
}

ActKind activation_from_name(const std::string& s) {
    if (s == "gelu") return ActKind::Gelu;
    if (s == "relu") return ActKind::Relu;
    throw ConfigError("unknown activation '" + s + "' (expected gelu|relu)");
}

Tensor3 simplex_transform(const Tensor3& w, TransformKind kind) {
    Tensor3 out(w.shape());
    const auto n = static_cast<std::size_t>(w.size());
    const auto& ops = kernels::active();
    switch (kind) {
        case TransformKind::Abs: ops.abs_val(w.data(), out.data(), n); break;
        case TransformKind::LogOffset: ops.log1p_abs(w.data(), out.data(), n); break;
        case TransformKind::Square: ops.square(w.data(), out.data(), n); break;
    }
    return out;
}

Tensor3 simplex_normalize(const Tensor3& t, SimplexAxis axis,
                          std::int64_t* degenerate_count) {
    const Var v = ad::constant(t);
    std::int64_t degenerate = 0;
    const Var out = ad::normalize_sum(v, axis == SimplexAxis::Input ? 1 : 2, &degenerate);
    if (degenerate_count != nullptr) *degenerate_count = degenerate;
    return out.value();
}

LinearLayer::LinearLayer(std::int64_t n_in, std::int64_t n_out, Rng& rng)
    : n_in_(n_in), n_out_(n_out) {
    if (n_in < 1 || n_out < 1)
        throw DimensionError("LinearLayer: dimensions must be >= 1");
    const double k = 1.0 / std::sqrt(static_cast<double>(n_in));
    w_ = ad::leaf(Tensor3::random_uniform({1, n_in, n_out}, -k, k, rng));
    b_ = ad::leaf(Tensor3(1, 1, n_out));
}

Var LinearLayer::forward(const Var& x) const {
    if (x.shape().d2 != n_in_)
        throw DimensionError("LinearLayer: input " + x.shape().str() + " does not end in n_in=" +
                             std::to_string(n_in_));
    return ad::add(ad::matmul(x, w_), b_);
}

void LinearLayer::collect_parameters(std::vector<Parameter>& out,
                                     const std::string& prefix) const {
    out.push_back({prefix + ".W", w_.node()});
    out.push_back({prefix + ".b", b_.node()});
}

SimplexLinearLayer::SimplexLinearLayer(std::int64_t n_in, std::int64_t n_out,
                                       TransformKind transform, SimplexAxis axis, Rng& rng)
    : n_in_(n_in), n_out_(n_out), transform_(transform), axis_(axis) {
    if (n_in < 1 || n_out < 1)
        throw DimensionError("SimplexLinearLayer: dimensions must be >= 1");
    // Fan-in uniform init; under the log transform this lands near-uniform
    // effective weights, a mix-everything-equally starting point.
    const double k = 1.0 / std::sqrt(static_cast<double>(n_in));
    w_ = ad::leaf(Tensor3::random_uniform({1, n_in, n_out}, -k, k, rng));
    b_ = ad::leaf(Tensor3(1, 1, n_out));
}

Var SimplexLinearLayer::effective_weights_var() const {
    Var t;
    switch (transform_) {
        case TransformKind::Abs: t = ad::abs_val(w_); break;
        case TransformKind::LogOffset: t = ad::log1p_abs(w_); break;
        case TransformKind::Square: t = ad::square(w_); break;
    }
    std::int64_t degenerate = 0;
    const Var eff = ad::normalize_sum(t, axis_ == SimplexAxis::Input ? 1 : 2, &degenerate);
    degenerate_seen_ += degenerate;
    return eff;
}

Tensor3 SimplexLinearLayer::effective_weights() const {
    return effective_weights_var().value();
}

Var SimplexLinearLayer::forward(const Var& x) const {
    if (x.shape().d2 != n_in_)
        throw DimensionError("SimplexLinearLayer: input " + x.shape().str() +
                             " does not end in n_in=" + std::to_string(n_in_));
    return ad::add(ad::matmul(x, effective_weights_var()), b_);
}

void SimplexLinearLayer::collect_parameters(std::vector<Parameter>& out,
                                            const std::string& prefix) const {
    out.push_back({prefix + ".W", w_.node()});
    out.push_back({prefix + ".b", b_.node()});
}

RevinState revin_state(const Tensor3& x, double eps) {
    const std::int64_t b = x.dim0(), n = x.dim1(), len = x.dim2();
    if (len < 2) throw DimensionError("revin_state: time axis must have length >= 2");
    RevinState st{Tensor3(b, n, 1), Tensor3(b, n, 1)};
    for (std::int64_t i = 0; i < b; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            const double* row = x.data() + (i * n + j) * len;
            const double mean =
                kernels::active().sum(row, static_cast<std::size_t>(len)) /
                static_cast<double>(len);
            double var = 0.0;
            for (std::int64_t t = 0; t < len; ++t) {
                const double d = row[t] - mean;
                var += d * d;
            }
            var /= static_cast<double>(len);
            st.mean.at(i, j, 0) = mean;
            st.scale.at(i, j, 0) = std::sqrt(var) + eps;
        }
    return st;
}

Tensor3 revin_normalize(const Tensor3& x, const RevinState& state) {
    Tensor3 out(x.shape());
    const std::int64_t b = x.dim0(), n = x.dim1(), len = x.dim2();
    for (std::int64_t i = 0; i < b; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            const double mean = state.mean.at(i, j, 0);
            const double inv = 1.0 / state.scale.at(i, j, 0);
            const double* src = x.data() + (i * n + j) * len;
            double* dst = out.data() + (i * n + j) * len;
            for (std::int64_t t = 0; t < len; ++t) dst[t] = (src[t] - mean) * inv;
        }
    return out;
}

Tensor3 revin_denormalize(const Tensor3& y, const RevinState& state) {
    Tensor3 out(y.shape());
    const std::int64_t b = y.dim0(), n = y.dim1(), len = y.dim2();
    for (std::int64_t i = 0; i < b; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            const double mean = state.mean.at(i, j, 0);
            const double scale = state.scale.at(i, j, 0);
            const double* src = y.data() + (i * n + j) * len;
            double* dst = out.data() + (i * n + j) * len;
            for (std::int64_t t = 0; t < len; ++t) dst[t] = src[t] * scale + mean;
        }
    return out;
}

Var revin_denormalize(const Var& y, const RevinState& state) {
    return ad::add(ad::mul(y, ad::constant(state.scale)), ad::constant(state.mean));
}

Var PlainMixer::penalty() const {
    Var p;
    if (lambda_l1_ > 0.0)
        p = ad::scale(ad::reduce_sum(ad::abs_val(layer_.weights()), ad::kAxisAll), lambda_l1_);
    if (lambda_l2_ > 0.0) {
        Var q = ad::scale(ad::reduce_sum(ad::square(layer_.weights()), ad::kAxisAll), lambda_l2_);
        p = p.defined() ? ad::add(p, q) : q;
    }
    return p;
}

std::string PlainMixer::kind_name() const {
    if (lambda_l1_ > 0.0) return "l1";
    if (lambda_l2_ > 0.0) return "l2";
    return "none";
}

SvdMixer::SvdMixer(std::int64_t n, std::int64_t rank, Rng& rng) : n_(n), rank_(rank) {
    if (rank < 1 || rank > n)
        throw DimensionError("SvdMixer: rank " + std::to_string(rank) + " out of [1," +
                             std::to_string(n) + "]");
    const double k = 1.0 / std::sqrt(static_cast<double>(n));
    const Tensor3 w0 = Tensor3::random_uniform({1, n, n}, -k, k, rng);
    const linalg::Svd f = linalg::svd(w0);
    Tensor3 u(1, n, rank), s(1, 1, rank), vt(1, rank, n);
    for (std::int64_t t = 0; t < rank; ++t) {
        s.at(0, 0, t) = f.s.at(0, 0, t);
        for (std::int64_t i = 0; i < n; ++i) {
            u.at(0, i, t) = f.u.at(0, i, t);
            vt.at(0, t, i) = f.vt.at(0, t, i);
        }
    }
    u_ = ad::leaf(std::move(u));
    s_ = ad::leaf(std::move(s));
    vt_ = ad::leaf(std::move(vt));
    b_ = ad::leaf(Tensor3(1, 1, n));
}

Var SvdMixer::forward(const Var& x) const {
    const Var w = ad::matmul(ad::mul(u_, s_), vt_);
    return ad::add(ad::matmul(x, w), b_);
}

Tensor3 SvdMixer::reconstructed_weights() const {
    return ad::matmul(ad::mul(u_, s_), vt_).value();
}

void SvdMixer::collect_parameters(std::vector<Parameter>& out,
                                  const std::string& prefix) const {
    out.push_back({prefix + ".U", u_.node()});
    out.push_back({prefix + ".s", s_.node()});
    out.push_back({prefix + ".Vt", vt_.node()});
    out.push_back({prefix + ".b", b_.node()});
}

MixerFactory make_mixer_factory(const MixerSpec& spec, TransformKind transform,
                                SimplexAxis axis) {
    switch (spec.kind) {
        case MixerSpec::Kind::Simplex:
            return [transform, axis](std::int64_t n, Rng& rng) {
                return std::make_unique<SimplexMixer>(n, transform, axis, rng);
            };
        case MixerSpec::Kind::Plain:
            return [](std::int64_t n, Rng& rng) {
                return std::make_unique<PlainMixer>(n, 0.0, 0.0, rng);
            };
        case MixerSpec::Kind::L1:
            return [lambda = spec.lambda](std::int64_t n, Rng& rng) {
                return std::make_unique<PlainMixer>(n, lambda, 0.0, rng);
            };
        case MixerSpec::Kind::L2:
            return [lambda = spec.lambda](std::int64_t n, Rng& rng) {
                return std::make_unique<PlainMixer>(n, 0.0, lambda, rng);
            };
        case MixerSpec::Kind::Svd:
            return [rank = spec.rank](std::int64_t n, Rng& rng) {
                return std::make_unique<SvdMixer>(n, rank, rng);
            };
    }
    throw ConfigError("make_mixer_factory: bad mixer kind");
}

std::string mixer_spec_to_string(const MixerSpec& spec) {
    char buf[64];
    switch (spec.kind) {
        case MixerSpec::Kind::Simplex: return "simplex";
        case MixerSpec::Kind::Plain: return "none";
        case MixerSpec::Kind::L1:
            std::snprintf(buf, sizeof(buf), "l1:%g", spec.lambda);
            return buf;
        case MixerSpec::Kind::L2:
            std::snprintf(buf, sizeof(buf), "l2:%g", spec.lambda);
            return buf;
        case MixerSpec::Kind::Svd: return "svd:" + std::to_string(spec.rank);
    }
    return "?";
}

MixerSpec mixer_spec_from_string(const std::string& s) {
    MixerSpec spec;
    std::string head = s;
    std::string arg;
    if (const auto pos = s.find(':'); pos != std::string::npos) {
        head = s.substr(0, pos);
        arg = s.substr(pos + 1);
    }
    try {
        if (head == "simplex") {
            spec.kind = MixerSpec::Kind::Simplex;
        } else if (head == "none" || head == "plain" || head == "unconstrained") {
            spec.kind = MixerSpec::Kind::Plain;
        } else if (head == "l1") {
            spec.kind = MixerSpec::Kind::L1;
            if (!arg.empty()) spec.lambda = std::stod(arg);
        } else if (head == "l2") {
            spec.kind = MixerSpec::Kind::L2;
            if (!arg.empty()) spec.lambda = std::stod(arg);
        } else if (head == "svd") {
            spec.kind = MixerSpec::Kind::Svd;
            if (arg.empty()) throw ConfigError("mixer 'svd' needs a rank, e.g. svd:8");
            spec.rank = std::stoll(arg);
        } else {
            throw ConfigError("unknown mixer '" + s +
                              "' (expected simplex|none|l1[:lambda]|l2[:lambda]|svd:k)");
        }
    } catch (const std::invalid_argument&) {
        throw ConfigError("bad mixer argument in '" + s + "'");
    } catch (const std::out_of_range&) {
        throw ConfigError("bad mixer argument in '" + s + "'");
    }
    if (spec.lambda < 0.0) throw ConfigError("mixer lambda must be >= 0");
    return spec;
}

ScwmBlock::ScwmBlock(std::int64_t n_channels, std::int64_t n_features, ActKind act,
                     const MixerFactory& mixer_factory, Rng& rng)
    : mixer_(mixer_factory(n_channels, rng)),
      temporal_(n_features, n_features, rng),
      act_(act),
      n_channels_(n_channels) {}

Var ScwmBlock::forward(const Var& z) const {
    if (z.shape().d2 != n_channels_)
        throw DimensionError("ScwmBlock: input " + z.shape().str() + " does not end in N=" +
                             std::to_string(n_channels_));
    const Var mixed = ad::add(ad::activation(mixer_->forward(z), act_), z);
    const Var t = ad::transpose12(mixed);  // (B, N, F)
    const Var temporal = ad::add(ad::activation(temporal_.forward(t), act_), t);
    return ad::transpose12(temporal);
}

void ScwmBlock::collect_parameters(std::vector<Parameter>& out,
                                   const std::string& prefix) const {
    mixer_->collect_parameters(out, prefix + ".mix");
    temporal_.collect_parameters(out, prefix + ".temporal");
}

std::int64_t ScwmBlock::parameter_count() const {
    return mixer_->parameter_count() +
           LinearLayer::parameter_count(temporal_.n_in(), temporal_.n_out());
}

FtmBlock::FtmBlock(std::int64_t n_features, ActKind act, Rng& rng)
    : lin_(n_features, n_features, rng), act_(act) {}

Var FtmBlock::forward(const Var& z) const {
    return ad::add(ad::activation(lin_.forward(z), act_), z);
}

void FtmBlock::collect_parameters(std::vector<Parameter>& out,
                                  const std::string& prefix) const {
    lin_.collect_parameters(out, prefix);
}

std::int64_t FtmBlock::parameter_count() const {
    return LinearLayer::parameter_count(lin_.n_in(), lin_.n_out());
}

}  // namespace fsmlp::layers
