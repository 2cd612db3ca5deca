#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "fsmlp/synthetic.hpp"
#include "fsmlp/training.hpp"
#include "helpers.hpp"

using namespace fsmlp;
namespace ad = fsmlp::autodiff;
using data::Split;
using data::WindowedDataset;
using model::FsmlpModel;
using model::ModelConfig;
using training::LossMode;
using training::TrainConfig;

namespace {

ModelConfig small_model(std::int64_t channels, std::int64_t lookback, std::int64_t horizon) {
    ModelConfig cfg;
    cfg.lookback = lookback;
    cfg.horizon = horizon;
    cfg.channels = channels;
    cfg.n_blocks = 1;
    cfg.hidden_dim = 32;
    cfg.seed = 5;
    return cfg;
}

WindowedDataset learnable_dataset(std::uint64_t seed, double noise = 0.1) {
    const data::RawSeries series = synthetic::convex_mixing_series(6, 1600, noise, seed);
    return WindowedDataset(series, 48, 24, {0.7, 0.15, 0.15});
}

}  // namespace

TEST_CASE("dual loss: zero for a perfect prediction") {
    Rng rng(3);
    const frequency::DctPlan plan(6);
    const Tensor3 target = test::random_tensor({2, 3, 6}, rng);
    training::LossParts parts;
    const ad::Var loss =
        training::dual_loss(ad::constant(target), target, plan, LossMode::Dual, &parts);
    CHECK(loss.value().item() == 0.0);
    CHECK(parts.time == 0.0);
    CHECK(parts.fre == 0.0);
}

TEST_CASE("dual loss closed form for a constant offset") {
    // pred = target + c: L_time = c^2 and L_fre = |c| / sqrt(tau) since only
    // frequency coefficient 0 of the constant row is nonzero (|c| sqrt(tau)),
    // averaged over tau coefficients.
    Rng rng(4);
    const std::int64_t tau = 9;
    const frequency::DctPlan plan(tau);
    const double c = -0.37;
    const Tensor3 target = test::random_tensor({2, 3, tau}, rng);
    Tensor3 pred = target;
    for (std::int64_t i = 0; i < pred.size(); ++i) pred[i] += c;

    training::LossParts parts;
    const ad::Var loss =
        training::dual_loss(ad::constant(pred), target, plan, LossMode::Dual, &parts);
    CHECK(parts.time == doctest::Approx(c * c).epsilon(1e-12));
    CHECK(parts.fre ==
          doctest::Approx(std::fabs(c) / std::sqrt(static_cast<double>(tau))).epsilon(1e-10));
    CHECK(loss.value().item() == doctest::Approx(parts.time + parts.fre).epsilon(1e-12));
}

TEST_CASE("dual loss gradcheck wrt the prediction") {
    Rng rng(6);
    const std::int64_t tau = 5;
    const frequency::DctPlan plan(tau);
    const Tensor3 target = test::random_tensor({1, 2, tau}, rng);
    // offsets chosen so every DCT coefficient of (pred - target) stays far
    // from the |.| kink
    Tensor3 pt = target;
    for (std::int64_t i = 0; i < pt.size(); ++i)
        pt[i] += 0.5 + 0.3 * static_cast<double>(i % 4);
    const ad::Var pred = ad::leaf(pt);
    for (const auto mode : {LossMode::Dual, LossMode::TimeOnly}) {
        auto loss = [&] { return training::dual_loss(pred, target, plan, mode); };
        const auto r = test::gradcheck({pred}, loss);
        CHECK_MESSAGE(r.ok, r.worst_at);
    }
}

TEST_CASE("dual loss rejects shape mismatches and non-finite values") {
    const frequency::DctPlan plan(4);
    const Tensor3 target(1, 2, 4, 1.0);
    CHECK_THROWS_AS(
        training::dual_loss(ad::constant(Tensor3(1, 2, 5)), target, plan, LossMode::Dual),
        DimensionError);
    Tensor3 bad(1, 2, 4, 1.0);
    bad[0] = std::nan("");
    CHECK_THROWS_AS(training::dual_loss(ad::constant(bad), target, plan, LossMode::Dual),
                    NumericError);
}

TEST_CASE("adam first step moves a scalar by about -lr (bias corrected)") {
    Tensor3 p = Tensor3::scalar(1.0);
    Tensor3 g = Tensor3::scalar(1.0);
    Tensor3 m(1, 1, 1), v(1, 1, 1);
    training::adam_update(p, g, m, v, 1, 0.01, 0.9, 0.999, 1e-8);
    // mhat = g, vhat = g^2 -> step = lr * g / (|g| + eps) ~ lr
    CHECK(p.item() == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
}

TEST_CASE("adam with zero gradients never moves the parameters") {
    Tensor3 p = Tensor3::from_values(1, 1, 3, {0.5, -1.0, 2.0});
    const Tensor3 before = p;
    Tensor3 g(1, 1, 3);
    Tensor3 m(1, 1, 3), v(1, 1, 3);
    for (std::int64_t t = 1; t <= 25; ++t)
        training::adam_update(p, g, m, v, t, 0.05, 0.9, 0.999, 1e-8);
    CHECK(p.max_abs_diff(before) == 0.0);
}

TEST_CASE("adam 2-step trajectory matches the hand-computed reference") {
    // lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8, grads 0.5 then -0.25,
    // written out operation by operation.
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double m_ref = 0.0, v_ref = 0.0, p_ref = 1.0;
    const double g1 = 0.5, g2 = -0.25;
    // step 1
    m_ref = b1 * m_ref + (1 - b1) * g1;
    v_ref = b2 * v_ref + (1 - b2) * g1 * g1;
    p_ref -= lr * (m_ref / (1 - b1)) / (std::sqrt(v_ref / (1 - b2)) + eps);
    // step 2
    m_ref = b1 * m_ref + (1 - b1) * g2;
    v_ref = b2 * v_ref + (1 - b2) * g2 * g2;
    p_ref -= lr * (m_ref / (1 - b1 * b1)) / (std::sqrt(v_ref / (1 - b2 * b2)) + eps);

    Tensor3 p = Tensor3::scalar(1.0);
    Tensor3 m(1, 1, 1), v(1, 1, 1);
    Tensor3 g = Tensor3::scalar(g1);
    training::adam_update(p, g, m, v, 1, lr, b1, b2, eps);
    g = Tensor3::scalar(g2);
    training::adam_update(p, g, m, v, 2, lr, b1, b2, eps);
    CHECK(p.item() == doctest::Approx(p_ref).epsilon(1e-15));

    // frozen endpoint of the same trajectory
    CHECK(p.item() == doctest::Approx(0.87336629870784632).epsilon(1e-12));
}

TEST_CASE("evaluate: zeroed model on constant channels is a perfect predictor") {
    data::RawSeries series;
    const std::int64_t t_total = 60;
    series.values = Tensor3(1, t_total, 2);
    for (std::int64_t t = 0; t < t_total; ++t) {
        series.timestamps.push_back("t" + std::to_string(100 + t));
        series.values.at(0, t, 0) = 5.0;
        series.values.at(0, t, 1) = -2.0;
    }
    series.channel_names = {"a", "b"};
    const WindowedDataset ds(series, 8, 4, {0.5, 0.25, 0.25});
    ModelConfig cfg = small_model(2, 8, 4);
    const FsmlpModel m(cfg);
    for (const auto& p : m.parameters()) p.node->value.zero();
    const auto metrics = training::evaluate(m, ds, Split::Test);
    CHECK(metrics.mse == doctest::Approx(0.0).epsilon(1e-18));
    CHECK(metrics.mae == doctest::Approx(0.0).epsilon(1e-18));
}

TEST_CASE("evaluate: zeroed model on Gaussian data scores near (1.0, 0.8)") {
    const data::RawSeries series = synthetic::gaussian_series(3000, 4, 21);
    const WindowedDataset ds(series, 64, 16, data::kDefaultRatios);
    ModelConfig cfg = small_model(4, 64, 16);
    const FsmlpModel m(cfg);
    for (const auto& p : m.parameters()) p.node->value.zero();
    // prediction = per-window RevIN mean, close to the zero predictor
    const auto metrics = training::evaluate(m, ds, Split::Test);
    CHECK(metrics.mse > 0.9);
    CHECK(metrics.mse < 1.12);
    CHECK(metrics.mae > 0.74);
    CHECK(metrics.mae < 0.88);
}

TEST_CASE("evaluate matches a naive per-window oracle to 1e-12") {
    const data::RawSeries series = synthetic::gaussian_series(300, 3, 8);
    const WindowedDataset ds(series, 12, 6, data::kDefaultRatios);
    const ModelConfig cfg = small_model(3, 12, 6);
    const FsmlpModel m(cfg);

    const auto metrics = training::evaluate(m, ds, Split::Val, false, 7);

    double se = 0.0, ae = 0.0;
    std::int64_t cells = 0;
    for (std::int64_t w = 0; w < ds.window_count(Split::Val); ++w) {
        Tensor3 x(1, 3, 12), y(1, 3, 6);
        ds.fill_window(Split::Val, w, x, y, 0);
        const Tensor3 pred = m.forward(x);
        for (std::int64_t i = 0; i < pred.size(); ++i) {
            se += (pred[i] - y[i]) * (pred[i] - y[i]);
            ae += std::fabs(pred[i] - y[i]);
        }
        cells += pred.size();
    }
    CHECK(metrics.mse == doctest::Approx(se / cells).epsilon(1e-12));
    CHECK(metrics.mae == doctest::Approx(ae / cells).epsilon(1e-12));
}

TEST_CASE("training learns the convex-mixing task to the noise floor") {
    const double noise = 0.1;
    const WindowedDataset ds = learnable_dataset(42, noise);
    ModelConfig cfg = small_model(6, 48, 24);
    TrainConfig tcfg;
    tcfg.epochs = 50;
    tcfg.patience = 50;
    tcfg.batch_size = 64;
    tcfg.learning_rate = 0.01;
    tcfg.seed = 1;

    FsmlpModel m(cfg);
    const auto report = training::train(m, ds, tcfg);
    REQUIRE_FALSE(report.diverged);

    // standardized noise floor: mean over channels of noise^2 / train variance
    double floor = 0.0;
    for (const double sd : ds.scaler().stddev) floor += noise * noise / (sd * sd);
    floor /= static_cast<double>(ds.scaler().stddev.size());

    const auto val = training::evaluate(m, ds, Split::Val);
    MESSAGE("val mse ", val.mse, " floor ", floor);
    CHECK(val.mse < 1.5 * floor);

    // early stopping bookkeeping: best epoch is the argmin of val losses
    double min_val = 1e300;
    for (const auto& e : report.epochs) min_val = std::min(min_val, e.val_loss);
    CHECK(report.best_val_loss == doctest::Approx(min_val));

    // SIMPLEX-PRESERVATION: effective weights on the simplex after training
    for (const auto* s : m.simplex_layers()) {
        const Tensor3 eff = s->effective_weights();
        for (std::int64_t o = 0; o < eff.dim2(); ++o) {
            double sum = 0.0;
            for (std::int64_t i = 0; i < eff.dim1(); ++i) {
                CHECK(eff.at(0, i, o) >= 0.0);
                sum += eff.at(0, i, o);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("patience=1 with no improvement after epoch 1 stops at epoch 2") {
    const WindowedDataset ds = learnable_dataset(7);
    ModelConfig cfg = small_model(6, 48, 24);
    TrainConfig tcfg;
    tcfg.epochs = 5;
    tcfg.patience = 1;
    tcfg.batch_size = 64;
    // updates vanish below double precision, so the validation loss repeats
    // exactly and never strictly improves after the first epoch
    tcfg.learning_rate = 1e-300;
    tcfg.seed = 2;
    FsmlpModel m(cfg);
    const auto report = training::train(m, ds, tcfg);
    REQUIRE_FALSE(report.diverged);
    CHECK(report.early_stopped);
    CHECK(report.stopped_epoch == 2);
    CHECK(report.best_epoch == 1);
}

TEST_CASE("seed-fixed double run produces identical reports") {
    for (const auto mode : {LossMode::Dual, LossMode::TimeOnly}) {
        TrainConfig tcfg;
        tcfg.epochs = 3;
        tcfg.patience = 3;
        tcfg.batch_size = 128;
        tcfg.seed = 9;
        tcfg.loss_mode = mode;
        ModelConfig cfg = small_model(6, 48, 24);

        const WindowedDataset ds1 = learnable_dataset(5);
        FsmlpModel m1(cfg);
        const auto r1 = training::train(m1, ds1, tcfg);

        const WindowedDataset ds2 = learnable_dataset(5);
        FsmlpModel m2(cfg);
        const auto r2 = training::train(m2, ds2, tcfg);

        CHECK(training::report_to_json(r1) == training::report_to_json(r2));
        // both loss components are logged even when only time is optimized
        CHECK(r1.final_fre_loss > 0.0);
        if (mode == LossMode::TimeOnly)
            CHECK(r1.final_train_loss == doctest::Approx(r1.final_time_loss));
    }
}

TEST_CASE("divergence aborts with a report up to that epoch") {
    const WindowedDataset ds = learnable_dataset(11);
    ModelConfig cfg = small_model(6, 48, 24);
    TrainConfig tcfg;
    tcfg.epochs = 10;
    tcfg.patience = 10;
    tcfg.batch_size = 64;
    tcfg.learning_rate = 50.0;
    tcfg.divergence_threshold = 1e4;  // will trip once the params blow up
    tcfg.seed = 3;
    FsmlpModel m(cfg);
    const auto report = training::train(m, ds, tcfg);
    CHECK(report.diverged);
    CHECK_FALSE(report.divergence_reason.empty());
    CHECK(report.stopped_epoch >= 1);
    CHECK(report.stopped_epoch <= 10);
}

TEST_CASE("TrainConfig validation") {
    TrainConfig bad;
    bad.patience = 200;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("losses csv has the documented column layout") {
    training::TrainReport report;
    report.epochs.push_back({1, 0.5, 0.6, 0.01});
    report.epochs.push_back({2, 0.4, 0.55, 0.011});
    training::write_losses_csv(report, "losses_test.csv");
    std::ifstream f("losses_test.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == "epoch,train_loss,val_loss,seconds");
    std::string row;
    std::getline(f, row);
    CHECK(row.rfind("1,0.5,0.6,", 0) == 0);
    f.close();
    std::remove("losses_test.csv");
}
