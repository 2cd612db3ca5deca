#include "fsmlp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fsmlp::data {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

RawSeries load_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("load_csv: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(f, line)) throw DataError("load_csv: '" + path + "' is empty");
    auto header = split_line(line);
    if (header.size() < 2)
        throw DataError("load_csv: '" + path + "' needs a date column plus >= 1 channel");
    if (trim(header[0]) != "date")
        throw DataError("load_csv: first column of '" + path + "' must be named 'date', got '" +
                        trim(header[0]) + "'");

    RawSeries series;
    for (std::size_t c = 1; c < header.size(); ++c)
        series.channel_names.push_back(trim(header[c]));
    const std::size_t n_channels = series.channel_names.size();

    std::vector<double> flat;
    std::int64_t row_number = 1;  // header was row 1
    while (std::getline(f, line)) {
        ++row_number;
        if (trim(line).empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != n_channels + 1)
            throw DataError("load_csv: row " + std::to_string(row_number) + " of '" + path +
                            "' has " + std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(n_channels + 1));
        const std::string ts = trim(cells[0]);
        if (ts.empty())
            throw DataError("load_csv: empty timestamp at row " + std::to_string(row_number));
        if (!series.timestamps.empty()) {
            if (ts == series.timestamps.back())
                throw DataError("load_csv: duplicate timestamp '" + ts + "' at row " +
                                std::to_string(row_number));
            if (ts < series.timestamps.back())
                throw DataError("load_csv: timestamps not increasing at row " +
                                std::to_string(row_number) + " ('" + ts + "')");
        }
        series.timestamps.push_back(ts);
        for (std::size_t c = 0; c < n_channels; ++c) {
            const std::string cell = trim(cells[c + 1]);
            if (cell.empty())
                throw DataError("load_csv: blank cell at row " + std::to_string(row_number) +
                                ", column " + std::to_string(c + 2) + " of '" + path + "'");
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                throw DataError("load_csv: unparseable cell '" + cell + "' at row " +
                                std::to_string(row_number) + ", column " +
                                std::to_string(c + 2) + " of '" + path + "'");
            }
            if (used != cell.size())
                throw DataError("load_csv: unparseable cell '" + cell + "' at row " +
                                std::to_string(row_number) + ", column " +
                                std::to_string(c + 2) + " of '" + path + "'");
            flat.push_back(v);
        }
    }
    const std::int64_t t_steps = static_cast<std::int64_t>(series.timestamps.size());
    if (t_steps < 2) throw DataError("load_csv: '" + path + "' needs >= 2 data rows");
    series.values = Tensor3::from_values(1, t_steps, static_cast<std::int64_t>(n_channels),
                                         std::move(flat));
    if (!series.values.all_finite())
        throw DataError("load_csv: non-finite value in '" + path + "'");
    return series;
}

bool looks_like_ett(const std::string& path) {
    const auto slash = path.find_last_of("/\\");
    const std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    return base.rfind("ETT", 0) == 0;
}

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split split_from_name(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw ConfigError("unknown split '" + s + "' (expected train|val|test)");
}

WindowedDataset::WindowedDataset(const RawSeries& series, std::int64_t lookback,
                                 std::int64_t horizon, SplitRatios ratios)
    : lookback_(lookback), horizon_(horizon) {
    if (lookback < 1 || horizon < 1)
        throw ConfigError("WindowedDataset: lookback and horizon must be >= 1");
    const std::int64_t t_steps = series.timesteps();
    const std::int64_t n = series.channels();
    n_train_ = static_cast<std::int64_t>(static_cast<double>(t_steps) * ratios.train);
    n_val_ = static_cast<std::int64_t>(static_cast<double>(t_steps) * ratios.val);
    n_test_ = t_steps - n_train_ - n_val_;
    if (n_train_ < lookback + horizon)
        throw DataError("WindowedDataset: training range (" + std::to_string(n_train_) +
                        ") shorter than lookback+horizon");

    // Scaler fit on the training range only; no leakage from val/test.
    scaler_.mean.assign(static_cast<std::size_t>(n), 0.0);
    scaler_.stddev.assign(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t c = 0; c < n; ++c) {
        double s = 0.0;
        for (std::int64_t t = 0; t < n_train_; ++t) s += series.values.at(0, t, c);
        const double mean = s / static_cast<double>(n_train_);
        double var = 0.0;
        for (std::int64_t t = 0; t < n_train_; ++t) {
            const double d = series.values.at(0, t, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n_train_);
        double sd = std::sqrt(var);
        if (sd < 1e-12) {
            warnings_.push_back("channel '" + series.channel_names[static_cast<std::size_t>(c)] +
                                "' is constant on the training range; scaling by 1");
            sd = 1.0;
        }
        scaler_.mean[static_cast<std::size_t>(c)] = mean;
        scaler_.stddev[static_cast<std::size_t>(c)] = sd;
    }

    values_ = Tensor3(1, t_steps, n);
    for (std::int64_t t = 0; t < t_steps; ++t)
        for (std::int64_t c = 0; c < n; ++c)
            values_.at(0, t, c) =
                (series.values.at(0, t, c) - scaler_.mean[static_cast<std::size_t>(c)]) /
                scaler_.stddev[static_cast<std::size_t>(c)];

    for (const Split split : {Split::Train, Split::Val, Split::Test})
        if (window_count(split) <= 0)
            warnings_.push_back(std::string("split '") + split_name(split) +
                                "' is too short for lookback+horizon; it has no windows");
}

std::int64_t WindowedDataset::range_begin(Split split) const {
    switch (split) {
        case Split::Train: return 0;
        case Split::Val: return n_train_ - lookback_;
        case Split::Test: return n_train_ + n_val_ - lookback_;
    }
    return 0;
}

std::int64_t WindowedDataset::window_count(Split split) const {
    std::int64_t range_len = 0;
    switch (split) {
        case Split::Train: range_len = n_train_; break;
        case Split::Val: range_len = n_val_ + lookback_; break;
        case Split::Test: range_len = n_test_ + lookback_; break;
    }
    const std::int64_t count = range_len - lookback_ - horizon_ + 1;
    return count > 0 ? count : 0;
}

void WindowedDataset::fill_window(Split split, std::int64_t w, Tensor3& x, Tensor3& y,
                                  std::int64_t row) const {
    const std::int64_t n = channels();
    if (x.dim1() != n || x.dim2() != lookback_ || y.dim1() != n || y.dim2() != horizon_)
        throw DimensionError("fill_window: batch tensors " + x.shape().str() + "/" +
                             y.shape().str() + " do not match (.," + std::to_string(n) + "," +
                             std::to_string(lookback_) + "/" + std::to_string(horizon_) + ")");
    if (w < 0 || w >= window_count(split))
        throw DataError("fill_window: window " + std::to_string(w) + " out of range for split " +
                        split_name(split));
    const std::int64_t start = range_begin(split) + w;
    for (std::int64_t c = 0; c < n; ++c) {
        for (std::int64_t t = 0; t < lookback_; ++t)
            x.at(row, c, t) = values_.at(0, start + t, c);
        for (std::int64_t t = 0; t < horizon_; ++t)
            y.at(row, c, t) = values_.at(0, start + lookback_ + t, c);
    }
}

std::int64_t WindowedDataset::max_index_read(Split split) const {
    const std::int64_t count = window_count(split);
    if (count <= 0) return -1;
    return range_begin(split) + (count - 1) + lookback_ + horizon_ - 1;
}

void WindowedDataset::destandardize(Tensor3& windows) const {
    const std::int64_t n = windows.dim1();
    if (n != channels())
        throw DimensionError("destandardize: channel count mismatch");
    for (std::int64_t b = 0; b < windows.dim0(); ++b)
        for (std::int64_t c = 0; c < n; ++c)
            for (std::int64_t t = 0; t < windows.dim2(); ++t)
                windows.at(b, c, t) = windows.at(b, c, t) * scaler_.stddev[static_cast<std::size_t>(c)] +
                                      scaler_.mean[static_cast<std::size_t>(c)];
}

SigmaStats sigma_stats(const RawSeries& series) {
    const std::int64_t t_steps = series.timesteps();
    const std::int64_t n = series.channels();
    if (t_steps < 2) throw DataError("sigma_stats: need >= 2 timesteps");

    SigmaStats stats;
    std::int64_t within = 0, beyond = 0;
    for (std::int64_t c = 0; c < n; ++c) {
        double s = 0.0;
        for (std::int64_t t = 0; t < t_steps; ++t) s += series.values.at(0, t, c);
        const double mean = s / static_cast<double>(t_steps);
        double var = 0.0;
        for (std::int64_t t = 0; t < t_steps; ++t) {
            const double d = series.values.at(0, t, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(t_steps);
        const double sd = std::sqrt(var);
        const std::string& name = series.channel_names[static_cast<std::size_t>(c)];
        if (sd < 1e-12) {
            stats.excluded_channels.push_back(name);
            continue;
        }
        std::int64_t w = 0, b3 = 0;
        for (std::int64_t t = 0; t < t_steps; ++t) {
            const double z = std::fabs((series.values.at(0, t, c) - mean) / sd);
            if (z <= 1.0) ++w;
            if (z >= 3.0) ++b3;
        }
        stats.per_channel.push_back({name, static_cast<double>(w) / static_cast<double>(t_steps),
                                     static_cast<double>(b3) / static_cast<double>(t_steps)});
        within += w;
        beyond += b3;
        stats.cells += t_steps;
    }
    if (stats.cells == 0)
        throw DataError("sigma_stats: every channel is constant; nothing to report");
    stats.within_1sigma = static_cast<double>(within) / static_cast<double>(stats.cells);
    stats.beyond_3sigma = static_cast<double>(beyond) / static_cast<double>(stats.cells);
    return stats;
}

}  // namespace fsmlp::data
