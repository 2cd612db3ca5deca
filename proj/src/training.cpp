#include "fsmlp/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "fsmlp/rng.hpp"

namespace fsmlp::training {

namespace ad = fsmlp::autodiff;

const char* loss_mode_name(LossMode m) { return m == LossMode::Dual ? "dual" : "time_only"; }

LossMode loss_mode_from_name(const std::string& s) {
    if (s == "dual") return LossMode::Dual;
    if (s == "time_only") return LossMode::TimeOnly;
    throw ConfigError("unknown loss_mode '" + s + "' (expected dual|time_only)");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (patience < 1 || patience > epochs)
        throw ConfigError("TrainConfig: patience must be in [1, epochs]");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("TrainConfig: learning_rate must be > 0");
}

ad::Var dual_loss(const ad::Var& pred, const Tensor3& target, const frequency::DctPlan& plan,
                  LossMode mode, LossParts* parts) {
    if (!(pred.shape() == target.shape()))
        throw DimensionError("dual_loss: prediction " + pred.shape().str() + " vs target " +
                             target.shape().str());
    const ad::Var target_c = ad::constant(target);
    const ad::Var err = ad::sub(pred, target_c);
    const ad::Var time_loss = ad::reduce_mean(ad::square(err), ad::kAxisAll);

    const ad::Var pred_f = ad::fixed_linear_map(pred, plan.matrix());
    const ad::Var target_f = ad::constant(frequency::dct_forward(target, plan));
    const ad::Var fre_loss =
        ad::reduce_mean(ad::abs_val(ad::sub(pred_f, target_f)), ad::kAxisAll);

    const ad::Var total =
        mode == LossMode::Dual ? ad::add(time_loss, fre_loss) : time_loss;
    if (!std::isfinite(total.value().item()))
        throw NumericError("dual_loss: non-finite loss value");
    if (parts != nullptr) {
        parts->time = time_loss.value().item();
        parts->fre = fre_loss.value().item();
        parts->total = total.value().item();
    }
    return total;
}

void adam_update(Tensor3& param, const Tensor3& grad, Tensor3& m, Tensor3& v,
                 std::int64_t t, double lr, double beta1, double beta2, double eps) {
    require_same_shape(param, grad, "adam_update");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    double* p = param.data();
    const double* g = grad.data();
    double* mp = m.data();
    double* vp = v.data();
    for (std::int64_t i = 0; i < param.size(); ++i) {
        mp[i] = beta1 * mp[i] + (1.0 - beta1) * g[i];
        vp[i] = beta2 * vp[i] + (1.0 - beta2) * g[i] * g[i];
        const double mhat = mp[i] / bc1;
        const double vhat = vp[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

AdamOptimizer::AdamOptimizer(std::vector<layers::Parameter> params, double lr, double beta1,
                             double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.node->value.shape());
        v_.emplace_back(p.node->value.shape());
    }
}

void AdamOptimizer::step() {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i)
        adam_update(params_[i].node->value, params_[i].node->grad, m_[i], v_[i], t_, lr_,
                    beta1_, beta2_, eps_);
}

void AdamOptimizer::zero_grad() {
    for (const auto& p : params_) p.node->zero_grad();
}

Metrics evaluate(const model::FsmlpModel& model, const data::WindowedDataset& ds,
                 data::Split split, bool raw_units, std::int64_t batch_size) {
    const std::int64_t count = ds.window_count(split);
    if (count <= 0) throw DataError(std::string("evaluate: split '") + data::split_name(split) +
                                    "' has no windows");
    const std::int64_t n = ds.channels();
    double se = 0.0, ae = 0.0;
    std::int64_t cells = 0;
    for (std::int64_t start = 0; start < count; start += batch_size) {
        const std::int64_t b = std::min(batch_size, count - start);
        Tensor3 x(b, n, ds.lookback()), y(b, n, ds.horizon());
        for (std::int64_t i = 0; i < b; ++i) ds.fill_window(split, start + i, x, y, i);
        Tensor3 pred = model.forward(x);
        if (raw_units) {
            ds.destandardize(pred);
            ds.destandardize(y);
        }
        for (std::int64_t i = 0; i < pred.size(); ++i) {
            const double d = pred[i] - y[i];
            se += d * d;
            ae += std::fabs(d);
        }
        cells += pred.size();
    }
    return {se / static_cast<double>(cells), ae / static_cast<double>(cells)};
}

namespace {

struct ParamSnapshot {
    std::vector<Tensor3> values;
};

ParamSnapshot snapshot(const std::vector<layers::Parameter>& params) {
    ParamSnapshot s;
    s.values.reserve(params.size());
    for (const auto& p : params) s.values.push_back(p.node->value);
    return s;
}

void restore(const std::vector<layers::Parameter>& params, const ParamSnapshot& s) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].node->value = s.values[i];
}

}  // namespace

TrainReport train(model::FsmlpModel& model, const data::WindowedDataset& ds,
                  const TrainConfig& cfg) {
    cfg.validate();
    const std::int64_t n_train = ds.window_count(data::Split::Train);
    const std::int64_t n_val = ds.window_count(data::Split::Val);
    if (n_train <= 0) throw DataError("train: no training windows");
    if (n_val <= 0) throw DataError("train: no validation windows");

    const std::int64_t n = ds.channels();
    auto params = model.parameters();
    AdamOptimizer opt(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);

    TrainReport report;
    double best_val = std::numeric_limits<double>::infinity();
    ParamSnapshot best;
    std::int64_t epochs_since_improvement = 0;

    std::vector<std::int64_t> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), 0);

    auto batch_loss = [&](data::Split split, std::int64_t start, std::int64_t b,
                          const std::vector<std::int64_t>* idx, bool optimize,
                          LossParts& parts) {
        Tensor3 x(b, n, ds.lookback()), y(b, n, ds.horizon());
        for (std::int64_t i = 0; i < b; ++i) {
            const std::int64_t w = idx != nullptr ? (*idx)[static_cast<std::size_t>(start + i)]
                                                  : start + i;
            ds.fill_window(split, w, x, y, i);
        }
        ad::Var pred = model.forward_var(x);
        ad::Var loss = dual_loss(pred, y, model.output_plan(), cfg.loss_mode, &parts);
        if (optimize) {
            ad::Var penalty = model.penalty();
            if (penalty.defined()) loss = ad::add(loss, penalty);
            opt.zero_grad();
            ad::backward(loss);
            opt.step();
        }
        return loss.value().item();
    };

    for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng shuffle_rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double train_sum = 0.0, time_sum = 0.0, fre_sum = 0.0;
        std::int64_t train_batches = 0;
        try {
            for (std::int64_t start = 0; start < n_train; start += cfg.batch_size) {
                const std::int64_t b = std::min(cfg.batch_size, n_train - start);
                LossParts parts;
                const double value = batch_loss(data::Split::Train, start, b, &order, true, parts);
                if (!std::isfinite(value) || value > cfg.divergence_threshold)
                    throw NumericError("training loss " + std::to_string(value) +
                                       " crossed the divergence threshold at epoch " +
                                       std::to_string(epoch));
                train_sum += parts.total;
                time_sum += parts.time;
                fre_sum += parts.fre;
                ++train_batches;
            }
        } catch (const NumericError& e) {
            report.diverged = true;
            report.divergence_reason = e.what();
            report.stopped_epoch = epoch;
            if (report.best_epoch > 0) restore(params, best);
            return report;
        }

        double val_sum = 0.0;
        std::int64_t val_batches = 0;
        for (std::int64_t start = 0; start < n_val; start += cfg.batch_size) {
            const std::int64_t b = std::min(cfg.batch_size, n_val - start);
            LossParts parts;
            batch_loss(data::Split::Val, start, b, nullptr, false, parts);
            val_sum += parts.total;
            ++val_batches;
        }

        const double train_loss = train_sum / static_cast<double>(train_batches);
        const double val_loss = val_sum / static_cast<double>(val_batches);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.epochs.push_back({epoch, train_loss, val_loss, seconds});
        report.final_train_loss = train_loss;
        report.final_time_loss = time_sum / static_cast<double>(train_batches);
        report.final_fre_loss = fre_sum / static_cast<double>(train_batches);
        report.stopped_epoch = epoch;

        if (val_loss < best_val) {
            best_val = val_loss;
            report.best_epoch = epoch;
            report.best_val_loss = val_loss;
            best = snapshot(params);
            epochs_since_improvement = 0;
        } else {
            ++epochs_since_improvement;
            if (epochs_since_improvement >= cfg.patience) {
                report.early_stopped = true;
                break;
            }
        }
    }

    if (report.best_epoch > 0) restore(params, best);
    const Metrics m = evaluate(model, ds, data::Split::Test);
    report.test_mse = m.mse;
    report.test_mae = m.mae;
    return report;
}

void write_losses_csv(const TrainReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("write_losses_csv: cannot open '" + path + "'");
    f << "epoch,train_loss,val_loss,seconds\n";
    for (const auto& e : report.epochs) {
        f << e.epoch << "," << nlohmann::json(e.train_loss).dump() << ","
          << nlohmann::json(e.val_loss).dump() << "," << nlohmann::json(e.seconds).dump()
          << "\n";
    }
}

std::string report_to_json(const TrainReport& report) {
    nlohmann::ordered_json j;
    j["best_epoch"] = report.best_epoch;
    j["best_val_loss"] = report.best_val_loss;
    j["final_train_loss"] = report.final_train_loss;
    j["final_time_loss"] = report.final_time_loss;
    j["final_fre_loss"] = report.final_fre_loss;
    j["stopped_epoch"] = report.stopped_epoch;
    j["early_stopped"] = report.early_stopped;
    j["diverged"] = report.diverged;
    if (report.diverged) j["divergence_reason"] = report.divergence_reason;
    j["test_mse"] = report.test_mse;
    j["test_mae"] = report.test_mae;
    nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
    for (const auto& e : report.epochs) {
        nlohmann::ordered_json row;
        row["epoch"] = e.epoch;
        row["train_loss"] = e.train_loss;
        row["val_loss"] = e.val_loss;
        epochs.push_back(row);
    }
    j["epochs"] = epochs;
    return j.dump(2) + "\n";
}

void write_report_json(const TrainReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("write_report_json: cannot open '" + path + "'");
    f << report_to_json(report);
}

}  // namespace fsmlp::training
