#pragma once

#include <cstdint>

#include "fsmlp/data.hpp"
#include "fsmlp/tensor.hpp"

namespace fsmlp::synthetic {

// Learnable forecasting task: a few periodic source channels plus channels
// that are fixed convex combinations of the sources, all with iid Gaussian
// observation noise. The clean signal is exactly predictable from a lookback
// window, so the best achievable MSE equals the (standardized) noise floor.
data::RawSeries convex_mixing_series(std::int64_t n_channels, std::int64_t timesteps,
                                     double noise_sigma, std::uint64_t seed);

// Replaces `cell_fraction` of all cells with spikes of `magnitude` channel
// standard deviations (sign random), mimicking the extreme values seen in
// the benchmark datasets.
void inject_outliers(data::RawSeries& series, double cell_fraction, double magnitude,
                     std::uint64_t seed);

// iid standard normal channels; sanity target for the sigma statistics.
data::RawSeries gaussian_series(std::int64_t timesteps, std::int64_t n_channels,
                                std::uint64_t seed);

// (1, m, d) of iid standard normals for Rademacher estimation.
Tensor3 gaussian_matrix(std::int64_t m, std::int64_t d, std::uint64_t seed);

}  // namespace fsmlp::synthetic
