#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fsmlp/analysis.hpp"
#include "fsmlp/config.hpp"
#include "fsmlp/data.hpp"
#include "fsmlp/kernels.hpp"
#include "fsmlp/model.hpp"
#include "fsmlp/synthetic.hpp"
#include "fsmlp/training.hpp"

namespace fs = std::filesystem;
using namespace fsmlp;

namespace {

// Exit codes: 0 ok, 1 config error, 2 data error, 3 numeric divergence.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct CommonFlags {
    std::string config_path;
    std::optional<std::string> data, dataset_kind, out_root, run_name;
    std::optional<std::int64_t> lookback, horizon, channels, n_blocks, hidden_dim;
    std::optional<std::string> transform, activation, simplex_axis, mixer, loss_mode;
    std::optional<bool> no_embedding, raw_metrics;
    std::optional<std::int64_t> epochs, patience, batch_size;
    std::optional<double> learning_rate, beta1, beta2, adam_eps;
    std::optional<std::uint64_t> seed;
};

void add_common_options(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "key=value config file; flags override it");
    cmd->add_option("--data", f.data, "dataset CSV (date column + channels)");
    cmd->add_option("--dataset-kind", f.dataset_kind,
                    "split selection: auto|ett|other (ett 6:2:2, other 7:1:2)");
    cmd->add_option("--out", f.out_root, "output root (default $FSMLP_OUT or ./runs)");
    cmd->add_option("--name", f.run_name, "run directory name");
    cmd->add_option("--lookback", f.lookback, "input window length L");
    cmd->add_option("--horizon", f.horizon, "prediction length tau");
    cmd->add_option("--channels", f.channels, "channel count (checked against the data)");
    cmd->add_option("--n-blocks", f.n_blocks, "number of SCWM and FTM blocks");
    cmd->add_option("--hidden-dim", f.hidden_dim, "embedding width");
    cmd->add_option("--transform", f.transform, "simplex transform: abs|log|square");
    cmd->add_option("--activation", f.activation, "activation: gelu|relu");
    cmd->add_option("--simplex-axis", f.simplex_axis, "normalization axis: input|output");
    cmd->add_option("--no-embedding", f.no_embedding,
                    "true: run blocks directly on L frequency coefficients");
    cmd->add_option("--mixer", f.mixer,
                    "channel mixer: simplex|none|l1[:lambda]|l2[:lambda]|svd:k");
    cmd->add_option("--epochs", f.epochs, "max training epochs");
    cmd->add_option("--patience", f.patience, "early-stopping patience");
    cmd->add_option("--batch-size", f.batch_size, "training batch size");
    cmd->add_option("--learning-rate,--lr", f.learning_rate, "Adam learning rate");
    cmd->add_option("--beta1", f.beta1, "Adam beta1");
    cmd->add_option("--beta2", f.beta2, "Adam beta2");
    cmd->add_option("--adam-eps", f.adam_eps, "Adam epsilon");
    cmd->add_option("--loss-mode", f.loss_mode, "dual|time_only");
    cmd->add_option("--seed", f.seed, "seed for init, shuffling and experiments");
    cmd->add_option("--raw-metrics", f.raw_metrics,
                    "true: report metrics in raw units instead of standardized");
}

cli::RunConfig resolve(const CommonFlags& f) {
    cli::RunConfig rc;
    if (!f.config_path.empty()) rc.apply(cli::parse_kv_file(f.config_path));
    if (f.data) rc.apply_one("data.path", *f.data);
    if (f.dataset_kind) rc.apply_one("data.kind", *f.dataset_kind);
    if (f.raw_metrics) rc.raw_metrics = *f.raw_metrics;
    if (f.out_root) rc.out_root = *f.out_root;
    if (f.run_name) rc.run_name = *f.run_name;
    if (f.lookback) rc.model.lookback = *f.lookback;
    if (f.horizon) rc.model.horizon = *f.horizon;
    if (f.channels) rc.model.channels = *f.channels;
    if (f.n_blocks) rc.model.n_blocks = *f.n_blocks;
    if (f.hidden_dim) rc.model.hidden_dim = *f.hidden_dim;
    if (f.transform) rc.model.transform = layers::transform_from_name(*f.transform);
    if (f.activation) rc.model.activation = layers::activation_from_name(*f.activation);
    if (f.simplex_axis) rc.model.simplex_axis = layers::axis_from_name(*f.simplex_axis);
    if (f.no_embedding) rc.model.no_embedding = *f.no_embedding;
    if (f.mixer) rc.mixer = layers::mixer_spec_from_string(*f.mixer);
    if (f.epochs) rc.train.epochs = *f.epochs;
    if (f.patience) rc.train.patience = *f.patience;
    if (f.batch_size) rc.train.batch_size = *f.batch_size;
    if (f.learning_rate) rc.train.learning_rate = *f.learning_rate;
    if (f.beta1) rc.train.beta1 = *f.beta1;
    if (f.beta2) rc.train.beta2 = *f.beta2;
    if (f.adam_eps) rc.train.adam_eps = *f.adam_eps;
    if (f.loss_mode) rc.train.loss_mode = training::loss_mode_from_name(*f.loss_mode);
    if (f.seed) {
        rc.model.seed = *f.seed;
        rc.train.seed = *f.seed;
    }
    return rc;
}

data::RawSeries load_series(const cli::RunConfig& rc) {
    if (rc.data_path.empty()) throw ConfigError("no dataset given; use --data or data.path");
    return data::load_csv(rc.data_path);
}

data::WindowedDataset make_dataset(const cli::RunConfig& rc, const data::RawSeries& series) {
    data::WindowedDataset ds(series, rc.model.lookback, rc.model.horizon, rc.ratios());
    for (const auto& w : ds.warnings()) std::cerr << "warning: " << w << "\n";
    return ds;
}

void check_channels(cli::RunConfig& rc, const data::RawSeries& series) {
    if (rc.model.channels == 0) rc.model.channels = series.channels();
    else if (rc.model.channels != series.channels())
        throw ConfigError("config: model.channels=" + std::to_string(rc.model.channels) +
                          " but the dataset has " + std::to_string(series.channels()) +
                          " channels");
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << text;
}

int cmd_train(const CommonFlags& flags) {
    cli::RunConfig rc = resolve(flags);
    const data::RawSeries series = load_series(rc);
    check_channels(rc, series);
    const data::WindowedDataset ds = make_dataset(rc, series);

    model::FsmlpModel m(rc.model, rc.mixer);
    std::cout << "training " << layers::mixer_spec_to_string(rc.mixer) << " model: N="
              << rc.model.channels << " L=" << rc.model.lookback << " tau=" << rc.model.horizon
              << " blocks=" << rc.model.n_blocks << " params=" << m.parameter_count()
              << " kernels=" << kernels::active().name << "\n";
    const training::TrainReport report = training::train(m, ds, rc.train);

    const fs::path dir = rc.run_dir();
    fs::create_directories(dir);
    write_text((dir / "config.resolved").string(), rc.resolved_text());
    training::write_losses_csv(report, (dir / "losses.csv").string());
    training::write_report_json(report, (dir / "report.json").string());
    model::save_checkpoint(m, (dir / "model.ckpt").string());

    if (report.diverged) {
        std::cerr << "training diverged: " << report.divergence_reason << "\n";
        std::cout << "artifacts in " << dir.string() << "\n";
        return kExitNumeric;
    }
    std::cout << "best epoch " << report.best_epoch << " val_loss " << report.best_val_loss
              << "\n";
    if (rc.raw_metrics) {
        const training::Metrics raw =
            training::evaluate(m, ds, data::Split::Test, true, rc.train.batch_size);
        std::cout << "test (raw units): mse " << raw.mse << " mae " << raw.mae << "\n";
    }
    std::cout << "test mse " << report.test_mse << " mae " << report.test_mae << "\n";
    std::cout << "artifacts in " << dir.string() << "\n";
    return kExitOk;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint,
             const std::string& split_name) {
    cli::RunConfig rc = resolve(flags);
    if (checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
    model::FsmlpModel m = model::load_checkpoint(checkpoint);
    rc.model = m.config();
    const data::RawSeries series = load_series(rc);
    if (series.channels() != m.config().channels)
        throw DataError("eval: checkpoint expects " + std::to_string(m.config().channels) +
                        " channels, dataset has " + std::to_string(series.channels()));
    const data::WindowedDataset ds = make_dataset(rc, series);
    const data::Split split = data::split_from_name(split_name);
    const training::Metrics metrics =
        training::evaluate(m, ds, split, rc.raw_metrics, rc.train.batch_size);
    nlohmann::ordered_json j;
    j["checkpoint"] = checkpoint;
    j["split"] = split_name;
    j["units"] = rc.raw_metrics ? "raw" : "standardized";
    j["mse"] = metrics.mse;
    j["mae"] = metrics.mae;
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

nlohmann::ordered_json stats_to_json(const data::SigmaStats& stats, const std::string& path) {
    nlohmann::ordered_json j;
    j["data"] = path;
    j["within_sigma"] = stats.within_1sigma;
    j["beyond_3sigma"] = stats.beyond_3sigma;
    j["cells"] = stats.cells;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : stats.per_channel) {
        nlohmann::ordered_json row;
        row["channel"] = r.name;
        row["within_sigma"] = r.within_1sigma;
        row["beyond_3sigma"] = r.beyond_3sigma;
        rows.push_back(row);
    }
    j["per_channel"] = rows;
    j["excluded_channels"] = stats.excluded_channels;
    return j;
}

int cmd_stats(const CommonFlags& flags, bool as_json, const std::string& json_out) {
    cli::RunConfig rc = resolve(flags);
    const data::RawSeries series = load_series(rc);
    const data::SigmaStats stats = data::sigma_stats(series);
    const auto j = stats_to_json(stats, rc.data_path);
    if (!json_out.empty()) write_text(json_out, j.dump(2) + "\n");
    if (as_json) {
        std::cout << j.dump(2) << "\n";
        return kExitOk;
    }
    std::printf("%-16s %14s %14s\n", "channel", "within_sigma", "beyond_3sigma");
    for (const auto& r : stats.per_channel)
        std::printf("%-16s %13.2f%% %13.2f%%\n", r.name.c_str(), 100.0 * r.within_1sigma,
                    100.0 * r.beyond_3sigma);
    std::printf("%-16s %13.2f%% %13.2f%%\n", "TOTAL", 100.0 * stats.within_1sigma,
                100.0 * stats.beyond_3sigma);
    for (const auto& name : stats.excluded_channels)
        std::cout << "warning: channel '" << name << "' is constant and was excluded\n";
    return kExitOk;
}

int cmd_rademacher(std::int64_t m, std::int64_t dim, std::int64_t trials,
                   std::uint64_t seed, double ball_b, int threads, bool as_json,
                   const std::string& csv_out) {
    const Tensor3 points = synthetic::gaussian_matrix(m, dim, seed);
    const auto simplex = analysis::rademacher_estimate(points, analysis::ClassKind::Simplex,
                                                       1.0, trials, seed, threads);
    const auto ball = analysis::rademacher_estimate(points, analysis::ClassKind::L2Ball,
                                                    ball_b, trials, seed, threads);
    auto row_json = [](const analysis::RademacherEstimate& e) {
        nlohmann::ordered_json j;
        j["class"] = analysis::class_kind_name(e.kind);
        j["ball_radius"] = e.ball_radius;
        j["m"] = e.m;
        j["trials"] = e.n_trials;
        j["estimate"] = e.estimate;
        j["std_error"] = e.std_error;
        j["bound"] = e.bound;
        return j;
    };
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["dim"] = dim;
    j["rows"] = nlohmann::ordered_json::array({row_json(simplex), row_json(ball)});
    if (!csv_out.empty()) {
        std::ostringstream os;
        os << "class,ball_radius,m,trials,estimate,std_error,bound\n";
        os.precision(10);
        for (const auto* e : {&simplex, &ball})
            os << analysis::class_kind_name(e->kind) << "," << e->ball_radius << "," << e->m
               << "," << e->n_trials << "," << e->estimate << "," << e->std_error << ","
               << e->bound << "\n";
        write_text(csv_out, os.str());
    }
    if (as_json) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::printf("%-10s %8s %10s %12s %12s %12s\n", "class", "m", "trials", "estimate",
                    "std_error", "bound");
        for (const auto* e : {&simplex, &ball})
            std::printf("%-10s %8" PRId64 " %10" PRId64 " %12.6f %12.6f %12.6f\n",
                        analysis::class_kind_name(e->kind), e->m, e->n_trials, e->estimate,
                        e->std_error, e->bound);
    }
    return kExitOk;
}

int cmd_ablate(const CommonFlags& flags, const std::string& constraints, bool use_synthetic,
               std::int64_t syn_channels, std::int64_t syn_timesteps, double syn_noise,
               double outlier_frac, double outlier_mag) {
    cli::RunConfig rc = resolve(flags);

    std::vector<analysis::ConstraintKind> kinds;
    std::stringstream ss(constraints);
    std::string token;
    while (std::getline(ss, token, ','))
        if (!token.empty()) kinds.push_back(layers::mixer_spec_from_string(token));
    if (kinds.empty()) throw ConfigError("ablate: --constraints produced an empty list");

    data::RawSeries series;
    if (use_synthetic) {
        series = synthetic::convex_mixing_series(syn_channels, syn_timesteps, syn_noise,
                                                 rc.train.seed);
        if (outlier_frac > 0.0)
            synthetic::inject_outliers(series, outlier_frac, outlier_mag, rc.train.seed + 1);
        rc.data_path = "<synthetic>";
        rc.dataset_kind = "other";
    } else {
        series = load_series(rc);
    }
    check_channels(rc, series);
    const data::WindowedDataset ds = make_dataset(rc, series);

    const auto rows = analysis::gap_experiment(ds, kinds, rc.model, rc.train);

    const fs::path dir = rc.run_dir();
    fs::create_directories(dir);
    write_text((dir / "config.resolved").string(), rc.resolved_text());
    analysis::write_gap_csv(rows, (dir / "ablation.csv").string());
    std::cout << analysis::gap_csv_text(rows);
    std::cout << "artifacts in " << dir.string() << "\n";
    for (const auto& r : rows)
        if (r.diverged) return kExitNumeric;
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FSMLP: frequency-domain simplex-constrained MLP forecasting"};
    app.name("fsmlp");
    app.require_subcommand(1);

    CommonFlags train_flags;
    auto* train_cmd = app.add_subcommand("train", "train a model and write run artifacts");
    add_common_options(train_cmd, train_flags);

    CommonFlags eval_flags;
    std::string eval_checkpoint;
    std::string eval_split = "test";
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    add_common_options(eval_cmd, eval_flags);
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "model checkpoint file")->required();
    eval_cmd->add_option("--split", eval_split, "train|val|test (default test)");

    CommonFlags stats_flags;
    bool stats_json = false;
    std::string stats_json_out;
    auto* stats_cmd =
        app.add_subcommand("stats", "dataset sigma statistics (extreme-value fractions)");
    add_common_options(stats_cmd, stats_flags);
    stats_cmd->add_flag("--json", stats_json, "print JSON instead of the table");
    stats_cmd->add_option("--json-out", stats_json_out, "also write JSON to this path");

    std::int64_t rad_m = 200, rad_dim = 10, rad_trials = 10000;
    std::uint64_t rad_seed = 1;
    double rad_ball = 10.0;
    int rad_threads = 1;
    bool rad_json = false;
    std::string rad_csv;
    auto* rad_cmd = app.add_subcommand(
        "rademacher", "Monte-Carlo Rademacher complexity of simplex vs L2-ball classes");
    rad_cmd->add_option("--m", rad_m, "number of Gaussian data points");
    rad_cmd->add_option("--dim", rad_dim, "data dimensionality");
    rad_cmd->add_option("--trials", rad_trials, "antithetic sign-vector pairs");
    rad_cmd->add_option("--seed", rad_seed, "seed for data and trials");
    rad_cmd->add_option("--ball-b", rad_ball, "L2 ball radius B");
    rad_cmd->add_option("--threads", rad_threads, "worker threads (result is thread-count independent)");
    rad_cmd->add_flag("--json", rad_json, "print JSON instead of the table");
    rad_cmd->add_option("--csv", rad_csv, "write rows to this CSV path");

    CommonFlags ablate_flags;
    std::string ablate_constraints = "simplex,none";
    bool ablate_synthetic = false;
    std::int64_t syn_channels = 8, syn_timesteps = 2000;
    double syn_noise = 0.1, outlier_frac = 0.01, outlier_mag = 5.0;
    auto* ablate_cmd = app.add_subcommand(
        "ablate", "train one model per channel-mixer constraint and compare");
    add_common_options(ablate_cmd, ablate_flags);
    ablate_cmd->add_option("--constraints", ablate_constraints,
                           "comma list: simplex,none,l1[:lambda],l2[:lambda],svd:k");
    ablate_cmd->add_flag("--synthetic", ablate_synthetic,
                         "use the built-in convex-mixing task instead of --data");
    ablate_cmd->add_option("--syn-channels", syn_channels, "synthetic channel count");
    ablate_cmd->add_option("--syn-timesteps", syn_timesteps, "synthetic series length");
    ablate_cmd->add_option("--syn-noise", syn_noise, "synthetic noise sigma");
    ablate_cmd->add_option("--outlier-frac", outlier_frac, "fraction of cells spiked");
    ablate_cmd->add_option("--outlier-mag", outlier_mag, "spike size in channel sigmas");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(train_flags);
        if (eval_cmd->parsed()) return cmd_eval(eval_flags, eval_checkpoint, eval_split);
        if (stats_cmd->parsed()) return cmd_stats(stats_flags, stats_json, stats_json_out);
        if (rad_cmd->parsed())
            return cmd_rademacher(rad_m, rad_dim, rad_trials, rad_seed, rad_ball, rad_threads,
                                  rad_json, rad_csv);
        if (ablate_cmd->parsed())
            return cmd_ablate(ablate_flags, ablate_constraints, ablate_synthetic, syn_channels,
                              syn_timesteps, syn_noise, outlier_frac, outlier_mag);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
