#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsmlp/tensor.hpp"

namespace fsmlp::data {

// Multi-channel series as loaded from disk: first CSV column is `date`,
// remaining columns are channels. No missing cells, strictly increasing
// timestamps.
struct RawSeries {
    std::vector<std::string> timestamps;
    Tensor3 values;  // (1, T, N)
    std::vector<std::string> channel_names;

    std::int64_t timesteps() const { return values.dim1(); }
    std::int64_t channels() const { return values.dim2(); }
};

// UTF-8, comma-separated, header row starting with `date`.
RawSeries load_csv(const std::string& path);

struct SplitRatios {
    double train, val, test;
};
inline constexpr SplitRatios kEttRatios{0.6, 0.2, 0.2};
inline constexpr SplitRatios kDefaultRatios{0.7, 0.1, 0.2};

// ETT datasets use the 6:2:2 split; everything else 7:1:2. Matching is by
// file name ("ETTh1.csv" etc.), overridable from the CLI.
bool looks_like_ett(const std::string& path);

enum class Split { Train, Val, Test };
const char* split_name(Split s);
Split split_from_name(const std::string& s);

// Per-channel z-score statistics fit on the training range only.
struct Scaler {
    std::vector<double> mean;
    std::vector<double> stddev;
};

// Standardized series cut chronologically into train/val/test. Val and test
// input windows may reach back up to `lookback` points before their range for
// context (standard benchmark convention); label windows never overlap
// across splits and training windows never read past the training range.
class WindowedDataset {
public:
    WindowedDataset(const RawSeries& series, std::int64_t lookback, std::int64_t horizon,
                    SplitRatios ratios);

    std::int64_t lookback() const { return lookback_; }
    std::int64_t horizon() const { return horizon_; }
    std::int64_t channels() const { return values_.dim2(); }
    std::int64_t timesteps() const { return values_.dim1(); }

    std::int64_t train_size() const { return n_train_; }
    std::int64_t val_size() const { return n_val_; }
    std::int64_t test_size() const { return n_test_; }

    // Number of stride-1 windows in a split; 0 when the range is too short
    // (a warning is recorded at construction).
    std::int64_t window_count(Split split) const;

    // Copies window w of a split into batch row `row` of x (B, N, L) and
    // y (B, N, tau), both in standardized units.
    void fill_window(Split split, std::int64_t w, Tensor3& x, Tensor3& y,
                     std::int64_t row) const;

    // Largest flat time index any window of this split reads; for leakage
    // checks the train value must stay below the validation start.
    std::int64_t max_index_read(Split split) const;
    std::int64_t range_begin(Split split) const;

    const Scaler& scaler() const { return scaler_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    // Undoes the train-fit standardization for raw-unit metrics.
    void destandardize(Tensor3& windows) const;  // (B, N, t) in place

private:
    Tensor3 values_;  // (1, T, N) standardized
    std::int64_t lookback_ = 0, horizon_ = 0;
    std::int64_t n_train_ = 0, n_val_ = 0, n_test_ = 0;
    Scaler scaler_;
    std::vector<std::string> warnings_;
};

// Dataset-level extreme-value statistics: per-channel z-scores over the FULL
// series (this describes the dataset, not the training protocol), then the
// fraction of all cells with |z| <= 1 and |z| >= 3.
struct ChannelSigmaRow {
    std::string name;
    double within_1sigma;
    double beyond_3sigma;
};

struct SigmaStats {
    double within_1sigma = 0.0;  // fraction over all non-excluded cells
    double beyond_3sigma = 0.0;
    std::int64_t cells = 0;
    std::vector<ChannelSigmaRow> per_channel;
    std::vector<std::string> excluded_channels;  // constant channels
};

SigmaStats sigma_stats(const RawSeries& series);

}  // namespace fsmlp::data
