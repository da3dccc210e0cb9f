#include "greybox/timeseries.hpp"

#include "greybox/errors.hpp"

namespace greybox {

void TimeSeries::append(std::span<const double> sample) {
    if (sample.size() != width()) throw ContractError("time series: sample width mismatch");
    data.insert(data.end(), sample.begin(), sample.end());
}

TimeSeries TimeSeries::segment(std::size_t begin, std::size_t end) const {
    if (begin > end || end > length()) throw ContractError("time series: segment out of range");
    TimeSeries out = *this;
    out.t0 = time(begin);
    out.data.assign(data.begin() + static_cast<std::ptrdiff_t>(begin * width()),
                    data.begin() + static_cast<std::ptrdiff_t>(end * width()));
    return out;
}

TimeSeries TimeSeries::without_hidden() const {
    TimeSeries out;
    out.t0 = t0;
    out.ts = ts;
    out.input_names = input_names;
    out.state_names = state_names;
    const std::size_t keep = n_inputs() + n_states();
    out.data.reserve(length() * keep);
    for (std::size_t k = 0; k < length(); ++k) {
        auto r = row(k);
        out.data.insert(out.data.end(), r.begin(), r.begin() + static_cast<std::ptrdiff_t>(keep));
    }
    return out;
}

std::vector<double> TimeSeries::channel(std::size_t c) const {
    if (c >= width()) throw ContractError("time series: channel out of range");
    std::vector<double> out(length());
    for (std::size_t k = 0; k < length(); ++k) out[k] = at(k, c);
    return out;
}

}  // namespace greybox
