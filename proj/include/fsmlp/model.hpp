#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fsmlp/frequency.hpp"
#include "fsmlp/layers.hpp"

namespace fsmlp::model {

struct ModelConfig {
    std::int64_t lookback = 96;
    std::int64_t horizon = 96;
    std::int64_t channels = 0;  // set from the dataset
    std::int64_t n_blocks = 3;
    std::int64_t hidden_dim = 128;
    layers::TransformKind transform = layers::TransformKind::LogOffset;
    autodiff::ActKind activation = autodiff::ActKind::Gelu;
    layers::SimplexAxis simplex_axis = layers::SimplexAxis::Input;
    // Skips the lookback->hidden embedding; blocks then run directly on the
    // L frequency coefficients.
    bool no_embedding = false;
    std::uint64_t seed = 0;

    void validate() const;
    // Width of the feature axis inside the blocks.
    std::int64_t feature_width() const { return no_embedding ? lookback : hidden_dim; }
};

// The forecasting pipeline: RevIN -> DCT -> [embedding] -> n SCWM blocks ->
// n FTM blocks -> linear head -> inverse DCT -> RevIN denormalize. All
// blocks operate on frequency-domain representations; the head emits horizon
// frequency coefficients, so the inverse transform uses a horizon-length
// plan.
class FsmlpModel {
public:
    explicit FsmlpModel(const ModelConfig& config);
    FsmlpModel(const ModelConfig& config, const layers::MixerSpec& mixer);

    // x: (B, N, L) in dataset units -> (B, N, tau), same units. Throws
    // NumericError naming the stage if non-finite values appear.
    Tensor3 forward(const Tensor3& x) const;
    // Training-path forward; the returned Var is the denormalized prediction.
    autodiff::Var forward_var(const Tensor3& x) const;

    std::vector<layers::Parameter> parameters() const;
    void zero_grad() const;

    // Sum of mixer penalty terms (L1/L2 constraint variants); undefined Var
    // when no mixer contributes one.
    autodiff::Var penalty() const;

    const ModelConfig& config() const { return cfg_; }
    const layers::MixerSpec& mixer_spec() const { return mixer_spec_; }
    const frequency::DctPlan& input_plan() const { return plan_in_; }
    const frequency::DctPlan& output_plan() const { return plan_out_; }

    std::int64_t parameter_count() const;  // actual, this instance
    // Closed form for the default (simplex-mixer) architecture:
    //   embedding L*H + H (unless no_embedding, then F = L and no terms)
    // + n_blocks * (N^2 + N + F^2 + F)   SCWM: channel mix + temporal MLP
    // + n_blocks * (F^2 + F)             FTM
    // + F*tau + tau                      head
    static std::int64_t parameter_count(const ModelConfig& config);

    std::vector<const layers::SimplexLinearLayer*> simplex_layers() const;
    std::int64_t degenerate_slices_seen() const;

private:
    ModelConfig cfg_;
    layers::MixerSpec mixer_spec_;
    frequency::DctPlan plan_in_;
    frequency::DctPlan plan_out_;
    std::optional<layers::LinearLayer> embedding_;
    std::vector<layers::ScwmBlock> scwm_;
    std::vector<layers::FtmBlock> ftm_;
    layers::LinearLayer head_;
};

// Checkpoint file: 8-byte magic "FSMLPCKP", little-endian u64 header length,
// JSON header (version, config, mixer, tensor table with name/shape/offset),
// then the raw float64 parameter blob. Round-trips bit-exactly.
void save_checkpoint(const FsmlpModel& model, const std::string& path);
FsmlpModel load_checkpoint(const std::string& path);
inline constexpr int kCheckpointVersion = 1;

}  // namespace fsmlp::model
