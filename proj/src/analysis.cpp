#include "fsmlp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "fsmlp/kernels.hpp"
#include "fsmlp/rng.hpp"

namespace fsmlp::analysis {

const char* class_kind_name(ClassKind k) {
    return k == ClassKind::Simplex ? "simplex" : "l2ball";
}

namespace {

double trial_supremum(const double* v, std::int64_t d, ClassKind kind, double ball_radius) {
    if (kind == ClassKind::Simplex) {
        double best = v[0];
        for (std::int64_t j = 1; j < d; ++j) best = std::max(best, v[j]);
        return best;
    }
    return ball_radius * std::sqrt(kernels::active().sumsq(v, static_cast<std::size_t>(d)));
}

}  // namespace

RademacherEstimate rademacher_estimate(const Tensor3& points, ClassKind kind,
                                       double ball_radius, std::int64_t n_trials,
                                       std::uint64_t seed, int threads) {
    if (points.dim0() != 1)
        throw DimensionError("rademacher_estimate: points must be (1, m, d)");
    const std::int64_t m = points.dim1();
    const std::int64_t d = points.dim2();
    if (m < 1) throw DataError("rademacher_estimate: need m >= 1 data points");
    if (n_trials < 1) throw ConfigError("rademacher_estimate: need n_trials >= 1");

    std::vector<double> per_trial(static_cast<std::size_t>(n_trials));
    auto run_range = [&](std::int64_t lo, std::int64_t hi) {
        std::vector<double> v(static_cast<std::size_t>(d));
        std::vector<double> vneg(static_cast<std::size_t>(d));
        for (std::int64_t trial = lo; trial < hi; ++trial) {
            Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(trial));
            std::fill(v.begin(), v.end(), 0.0);
            for (std::int64_t i = 0; i < m; ++i) {
                const double s = static_cast<double>(rng.sign());
                kernels::active().axpy(s, points.data() + i * d, v.data(),
                                       static_cast<std::size_t>(d));
            }
            for (std::int64_t j = 0; j < d; ++j) vneg[static_cast<std::size_t>(j)] = -v[static_cast<std::size_t>(j)];
            const double sup_pos = trial_supremum(v.data(), d, kind, ball_radius);
            const double sup_neg = trial_supremum(vneg.data(), d, kind, ball_radius);
            per_trial[static_cast<std::size_t>(trial)] =
                0.5 * (sup_pos + sup_neg) / static_cast<double>(m);
        }
    };

    const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(n_trials)));
    if (n_threads == 1) {
        run_range(0, n_trials);
    } else {
        std::vector<std::thread> pool;
        const std::int64_t chunk = (n_trials + n_threads - 1) / n_threads;
        for (int t = 0; t < n_threads; ++t) {
            const std::int64_t lo = t * chunk;
            const std::int64_t hi = std::min<std::int64_t>(n_trials, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(run_range, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    double mean = 0.0;
    for (double x : per_trial) mean += x;
    mean /= static_cast<double>(n_trials);
    double var = 0.0;
    for (double x : per_trial) var += (x - mean) * (x - mean);
    var = n_trials > 1 ? var / static_cast<double>(n_trials - 1) : 0.0;

    double norms = 0.0;
    for (std::int64_t i = 0; i < m; ++i)
        norms += kernels::active().sumsq(points.data() + i * d, static_cast<std::size_t>(d));
    double bound = std::sqrt(norms) / static_cast<double>(m);
    if (kind == ClassKind::L2Ball) bound *= ball_radius;

    RademacherEstimate est;
    est.m = m;
    est.n_trials = n_trials;
    est.kind = kind;
    est.ball_radius = kind == ClassKind::L2Ball ? ball_radius : 1.0;
    est.estimate = mean;
    est.std_error = std::sqrt(var / static_cast<double>(n_trials));
    est.bound = bound;
    return est;
}

std::unique_ptr<layers::ChannelMixer> apply_constraint(std::int64_t n_channels,
                                                       const ConstraintKind& kind,
                                                       layers::TransformKind transform,
                                                       layers::SimplexAxis axis, Rng& rng) {
    return layers::make_mixer_factory(kind, transform, axis)(n_channels, rng);
}

std::vector<GapRow> gap_experiment(const data::WindowedDataset& ds,
                                   const std::vector<ConstraintKind>& kinds,
                                   const model::ModelConfig& mcfg,
                                   const training::TrainConfig& tcfg) {
    std::vector<GapRow> rows;
    rows.reserve(kinds.size());
    for (const auto& kind : kinds) {
        model::FsmlpModel m(mcfg, kind);
        const training::TrainReport report = training::train(m, ds, tcfg);
        GapRow row;
        row.constraint = layers::mixer_spec_to_string(kind);
        row.diverged = report.diverged;
        row.final_train_loss = report.final_train_loss;
        row.best_val_loss = report.best_val_loss;
        row.gap = report.best_val_loss - report.final_train_loss;
        row.test_mse = report.test_mse;
        row.test_mae = report.test_mae;
        rows.push_back(row);
    }
    return rows;
}

std::string gap_csv_text(const std::vector<GapRow>& rows) {
    std::ostringstream os;
    os << "constraint,final_train_loss,best_val_loss,gap,test_mse,test_mae,diverged\n";
    os.precision(10);
    for (const auto& r : rows) {
        os << r.constraint << "," << r.final_train_loss << "," << r.best_val_loss << ","
           << r.gap << "," << r.test_mse << "," << r.test_mae << ","
           << (r.diverged ? 1 : 0) << "\n";
    }
    return os.str();
}

void write_gap_csv(const std::vector<GapRow>& rows, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("write_gap_csv: cannot open '" + path + "'");
    f << gap_csv_text(rows);
}

}  // namespace fsmlp::analysis
