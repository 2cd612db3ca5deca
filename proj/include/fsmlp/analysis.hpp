#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fsmlp/data.hpp"
#include "fsmlp/layers.hpp"
#include "fsmlp/model.hpp"
#include "fsmlp/training.hpp"

namespace fsmlp::analysis {

// Hypothesis classes for the empirical Rademacher comparison: linear
// functionals with weights on the standard simplex versus an L2 ball of
// radius B. For a draw of signs sigma the per-trial supremum has a closed
// form in both cases: max_j v_j over the simplex (a linear maximum over a
// polytope sits at a vertex) and B * ||v||_2 over the ball, with
// v = sum_i sigma_i x^(i).
enum class ClassKind { Simplex, L2Ball };

const char* class_kind_name(ClassKind k);

struct RademacherEstimate {
    std::int64_t m = 0;         // sample count
    std::int64_t n_trials = 0;  // antithetic pairs
    ClassKind kind = ClassKind::Simplex;
    double ball_radius = 1.0;  // only meaningful for L2Ball
    double estimate = 0.0;     // mean of per-trial suprema / m
    double std_error = 0.0;
    double bound = 0.0;  // (1/m) sqrt(sum ||x_i||^2), scaled by B for the ball
};

// Monte-Carlo estimate over `n_trials` antithetic sign-vector pairs (each
// pair evaluates sigma and -sigma and averages; an unbiased variance
// reduction). Trials draw from independent seeded streams, so the result is
// identical for any thread count.
RademacherEstimate rademacher_estimate(const Tensor3& points, ClassKind kind,
                                       double ball_radius, std::int64_t n_trials,
                                       std::uint64_t seed, int threads = 1);

// Constraint selection for the channel mixer; see layers::MixerSpec for the
// textual forms (simplex | none | l1[:lambda] | l2[:lambda] | svd:k).
using ConstraintKind = layers::MixerSpec;

// Builds the constrained channel-mixing layer for an n x n mixer.
std::unique_ptr<layers::ChannelMixer> apply_constraint(std::int64_t n_channels,
                                                       const ConstraintKind& kind,
                                                       layers::TransformKind transform,
                                                       layers::SimplexAxis axis, Rng& rng);

struct GapRow {
    std::string constraint;
    double final_train_loss = 0.0;
    double best_val_loss = 0.0;
    double gap = 0.0;  // best_val_loss - final_train_loss
    double test_mse = 0.0;
    double test_mae = 0.0;
    bool diverged = false;
};

// Trains one model per constraint with identical seeds and configuration;
// divergence is recorded in the row and the experiment continues.
std::vector<GapRow> gap_experiment(const data::WindowedDataset& ds,
                                   const std::vector<ConstraintKind>& kinds,
                                   const model::ModelConfig& mcfg,
                                   const training::TrainConfig& tcfg);

void write_gap_csv(const std::vector<GapRow>& rows, const std::string& path);
std::string gap_csv_text(const std::vector<GapRow>& rows);

}  // namespace fsmlp::analysis
