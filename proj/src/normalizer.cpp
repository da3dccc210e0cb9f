#include "greybox/normalizer.hpp"

#include <cmath>
#include <string>

#include "greybox/errors.hpp"

namespace greybox {

Normalizer Normalizer::fit(const TimeSeries& train) {
    const std::size_t channels = train.n_inputs() + train.n_states();
    const std::size_t n = train.length();
    if (n < 2) throw ContractError("normalizer: need at least two samples per channel");
    Normalizer out;
    out.mean.assign(channels, 0.0);
    out.stddev.assign(channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) sum += train.at(k, c);
        const double mu = sum / static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double d = train.at(k, c) - mu;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / static_cast<double>(n));
        if (!(sd > 0.0) || sd <= 1e-14 * std::max(1.0, std::abs(mu))) {
            const std::string name =
                c < train.n_inputs() ? train.input_names[c] : train.state_names[c - train.n_inputs()];
            throw ContractError("normalizer: channel '" + name + "' has zero variance and cannot be normalized");
        }
        out.mean[c] = mu;
        out.stddev[c] = sd;
    }
    return out;
}

Normalizer Normalizer::identity(std::size_t channels) {
    return Normalizer{std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
}

TimeSeries Normalizer::normalize(const TimeSeries& series) const {
    if (series.n_inputs() + series.n_states() != channels())
        throw ContractError("normalizer: channel count mismatch");
    TimeSeries out = series;
    for (std::size_t k = 0; k < out.length(); ++k) {
        auto r = out.row(k);
        for (std::size_t c = 0; c < channels(); ++c) r[c] = normalize(c, r[c]);
    }
    return out;
}

TimeSeries Normalizer::denormalize(const TimeSeries& series) const {
    if (series.n_inputs() + series.n_states() != channels())
        throw ContractError("normalizer: channel count mismatch");
    TimeSeries out = series;
    for (std::size_t k = 0; k < out.length(); ++k) {
        auto r = out.row(k);
        for (std::size_t c = 0; c < channels(); ++c) r[c] = denormalize(c, r[c]);
    }
    return out;
}

}  // namespace greybox
