#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "greybox/timeseries.hpp"

namespace greybox {

/// Per-channel affine map to zero mean and unit (population) variance over
/// the observable channels [u, x_c]. Hidden channels pass through untouched.
struct Normalizer {
    std::vector<double> mean;
    std::vector<double> stddev;

    /// Fit on the observable channels of a training split. Needs >= 2 samples
    /// and nonzero variance in every channel.
    static Normalizer fit(const TimeSeries& train);
    static Normalizer identity(std::size_t channels);

    std::size_t channels() const noexcept { return mean.size(); }
    double normalize(std::size_t channel, double x) const { return (x - mean[channel]) / stddev[channel]; }
    double denormalize(std::size_t channel, double x) const { return x * stddev[channel] + mean[channel]; }

    TimeSeries normalize(const TimeSeries& series) const;
    TimeSeries denormalize(const TimeSeries& series) const;

    std::span<const double> input_mean(std::size_t n_inputs) const { return {mean.data(), n_inputs}; }
    std::span<const double> input_std(std::size_t n_inputs) const { return {stddev.data(), n_inputs}; }
    std::span<const double> state_mean(std::size_t n_inputs) const {
        return std::span<const double>(mean).subspan(n_inputs);
    }
    std::span<const double> state_std(std::size_t n_inputs) const {
        return std::span<const double>(stddev).subspan(n_inputs);
    }

    bool operator==(const Normalizer&) const = default;
};

}  // namespace greybox
