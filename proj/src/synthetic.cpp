#include "fsmlp/synthetic.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "fsmlp/rng.hpp"

namespace fsmlp::synthetic {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

std::vector<std::string> hour_stamps(std::int64_t timesteps) {
    // Synthetic hourly timestamps; only ordering matters.
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(timesteps));
    for (std::int64_t t = 0; t < timesteps; ++t) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "t%010lld", static_cast<long long>(t));
        out.emplace_back(buf);
    }
    return out;
}
}  // namespace

data::RawSeries convex_mixing_series(std::int64_t n_channels, std::int64_t timesteps,
                                     double noise_sigma, std::uint64_t seed) {
    if (n_channels < 2) throw DataError("convex_mixing_series: need >= 2 channels");
    Rng rng(seed);
    const std::int64_t n_sources = std::min<std::int64_t>(3, n_channels - 1);
    const double periods[3] = {24.0, 12.0, 8.0};

    // Sources: sin mixtures with unit-ish variance (sum a_p^2 = 2).
    std::vector<std::vector<double>> amp(static_cast<std::size_t>(n_sources)),
        phase(static_cast<std::size_t>(n_sources));
    for (std::int64_t s = 0; s < n_sources; ++s) {
        auto& a = amp[static_cast<std::size_t>(s)];
        auto& p = phase[static_cast<std::size_t>(s)];
        double norm = 0.0;
        for (int f = 0; f < 3; ++f) {
            a.push_back(0.25 + rng.uniform());
            p.push_back(rng.uniform() * kTwoPi);
            norm += a.back() * a.back();
        }
        const double scale = std::sqrt(2.0 / norm);
        for (auto& v : a) v *= scale;
    }

    // Remaining channels: fixed convex combinations of the sources.
    const std::int64_t n_mixed = n_channels - n_sources;
    std::vector<std::vector<double>> mix(static_cast<std::size_t>(n_mixed));
    for (auto& w : mix) {
        double sum = 0.0;
        for (std::int64_t s = 0; s < n_sources; ++s) {
            w.push_back(0.05 + rng.uniform());
            sum += w.back();
        }
        for (auto& v : w) v /= sum;
    }

    data::RawSeries series;
    series.timestamps = hour_stamps(timesteps);
    series.values = Tensor3(1, timesteps, n_channels);
    for (std::int64_t c = 0; c < n_channels; ++c)
        series.channel_names.push_back("ch" + std::to_string(c));

    auto source_value = [&](std::int64_t s, std::int64_t t) {
        double v = 0.0;
        const auto& a = amp[static_cast<std::size_t>(s)];
        const auto& p = phase[static_cast<std::size_t>(s)];
        for (int f = 0; f < 3; ++f)
            v += a[static_cast<std::size_t>(f)] *
                 std::sin(kTwoPi * static_cast<double>(t) / periods[f] +
                          p[static_cast<std::size_t>(f)]);
        return v;
    };

    for (std::int64_t t = 0; t < timesteps; ++t) {
        for (std::int64_t s = 0; s < n_sources; ++s)
            series.values.at(0, t, s) = source_value(s, t) + noise_sigma * rng.normal();
        for (std::int64_t m = 0; m < n_mixed; ++m) {
            double v = 0.0;
            for (std::int64_t s = 0; s < n_sources; ++s)
                v += mix[static_cast<std::size_t>(m)][static_cast<std::size_t>(s)] *
                     source_value(s, t);
            series.values.at(0, t, n_sources + m) = v + noise_sigma * rng.normal();
        }
    }
    return series;
}

void inject_outliers(data::RawSeries& series, double cell_fraction, double magnitude,
                     std::uint64_t seed) {
    Rng rng(seed);
    const std::int64_t t_steps = series.timesteps();
    const std::int64_t n = series.channels();

    // Channel scale for sizing the spikes.
    std::vector<double> sd(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t c = 0; c < n; ++c) {
        double s = 0.0, s2 = 0.0;
        for (std::int64_t t = 0; t < t_steps; ++t) {
            const double v = series.values.at(0, t, c);
            s += v;
            s2 += v * v;
        }
        const double mean = s / static_cast<double>(t_steps);
        sd[static_cast<std::size_t>(c)] =
            std::sqrt(std::max(0.0, s2 / static_cast<double>(t_steps) - mean * mean));
    }

    const std::int64_t cells = t_steps * n;
    const auto n_hits = static_cast<std::int64_t>(cell_fraction * static_cast<double>(cells));
    for (std::int64_t h = 0; h < n_hits; ++h) {
        const std::int64_t flat = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(cells)));
        const std::int64_t t = flat / n;
        const std::int64_t c = flat % n;
        series.values.at(0, t, c) +=
            static_cast<double>(rng.sign()) * magnitude * sd[static_cast<std::size_t>(c)];
    }
}

data::RawSeries gaussian_series(std::int64_t timesteps, std::int64_t n_channels,
                                std::uint64_t seed) {
    Rng rng(seed);
    data::RawSeries series;
    series.timestamps = hour_stamps(timesteps);
    series.values = Tensor3::random_normal({1, timesteps, n_channels}, 0.0, 1.0, rng);
    for (std::int64_t c = 0; c < n_channels; ++c)
        series.channel_names.push_back("g" + std::to_string(c));
    return series;
}

Tensor3 gaussian_matrix(std::int64_t m, std::int64_t d, std::uint64_t seed) {
    Rng rng(seed);
    return Tensor3::random_normal({1, m, d}, 0.0, 1.0, rng);
}

}  // namespace fsmlp::synthetic
