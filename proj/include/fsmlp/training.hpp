#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsmlp/data.hpp"
#include "fsmlp/frequency.hpp"
#include "fsmlp/model.hpp"

namespace fsmlp::training {

// Dual optimizes L_time + L_fre; TimeOnly optimizes L_time alone (the
// frequency component is still computed and logged for the ablation).
enum class LossMode { Dual, TimeOnly };

const char* loss_mode_name(LossMode m);
LossMode loss_mode_from_name(const std::string& s);

struct TrainConfig {
    std::int64_t epochs = 100;
    std::int64_t patience = 10;
    std::int64_t batch_size = 256;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    LossMode loss_mode = LossMode::Dual;
    double divergence_threshold = 1e6;

    void validate() const;  // patience <= epochs, batch_size >= 1
};

struct EpochRecord {
    std::int64_t epoch;  // 1-based
    double train_loss;
    double val_loss;
    double seconds;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::int64_t best_epoch = 0;  // 1-based; 0 when nothing improved
    double best_val_loss = 0.0;
    double final_train_loss = 0.0;
    std::int64_t stopped_epoch = 0;
    bool early_stopped = false;
    bool diverged = false;
    std::string divergence_reason;
    double test_mse = 0.0;
    double test_mae = 0.0;
    // Loss components at the last completed epoch (both always computed).
    double final_time_loss = 0.0;
    double final_fre_loss = 0.0;
};

struct LossParts {
    double time = 0.0;
    double fre = 0.0;
    double total = 0.0;  // per loss mode, excludes penalties
};

// L_time: mean squared error over all entries. L_fre: mean absolute error
// between the DCT of prediction and target along the horizon axis. The
// optimized total follows `mode`; parts reports both components either way.
autodiff::Var dual_loss(const autodiff::Var& pred, const Tensor3& target,
                        const frequency::DctPlan& plan, LossMode mode,
                        LossParts* parts = nullptr);

// Standard Adam with bias correction on a single tensor; step counter t is
// 1-based. Exposed separately so the optimizer trajectory can be checked
// against hand-computed values.
void adam_update(Tensor3& param, const Tensor3& grad, Tensor3& m, Tensor3& v,
                 std::int64_t t, double lr, double beta1, double beta2, double eps);

class AdamOptimizer {
public:
    AdamOptimizer(std::vector<layers::Parameter> params, double lr, double beta1,
                  double beta2, double eps);
    void step();
    void zero_grad();
    std::int64_t steps_taken() const { return t_; }

private:
    std::vector<layers::Parameter> params_;
    std::vector<Tensor3> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
};

// Metrics over every window of a split. Standardized (z-scored) units by
// default, matching the benchmark convention; raw_units applies the inverse
// scaler first.
Metrics evaluate(const model::FsmlpModel& model, const data::WindowedDataset& ds,
                 data::Split split, bool raw_units = false, std::int64_t batch_size = 256);

// Epoch loop with early stopping; restores the best-validation parameters
// into the model before computing test metrics. Divergence (NaN or loss
// above the threshold) aborts and returns the report collected so far with
// diverged set.
TrainReport train(model::FsmlpModel& model, const data::WindowedDataset& ds,
                  const TrainConfig& cfg);

// epoch,train_loss,val_loss,seconds
void write_losses_csv(const TrainReport& report, const std::string& path);
// Deterministic serialization: no timing fields, fixed key order.
std::string report_to_json(const TrainReport& report);
void write_report_json(const TrainReport& report, const std::string& path);

}  // namespace fsmlp::training
