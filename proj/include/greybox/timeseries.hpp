#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace greybox {

/// Uniformly sampled multichannel record. Columns are laid out as
/// [inputs u..., observed states x_c..., hidden states...]; hidden channels
/// only exist for oracle/diagnostic use and never feed a model.
struct TimeSeries {
    double t0 = 0.0;
    double ts = 1.0;
    std::vector<std::string> input_names;
    std::vector<std::string> state_names;
    std::vector<std::string> hidden_names;
    std::vector<double> data;  // row-major, one row per sample

    std::size_t n_inputs() const noexcept { return input_names.size(); }
    std::size_t n_states() const noexcept { return state_names.size(); }
    std::size_t n_hidden() const noexcept { return hidden_names.size(); }
    std::size_t width() const noexcept { return n_inputs() + n_states() + n_hidden(); }
    std::size_t length() const noexcept { return width() == 0 ? 0 : data.size() / width(); }
    double time(std::size_t k) const noexcept { return t0 + static_cast<double>(k) * ts; }

    std::span<const double> row(std::size_t k) const { return {data.data() + k * width(), width()}; }
    std::span<double> row(std::size_t k) { return {data.data() + k * width(), width()}; }
    std::span<const double> inputs(std::size_t k) const { return row(k).first(n_inputs()); }
    std::span<const double> states(std::size_t k) const { return row(k).subspan(n_inputs(), n_states()); }
    std::span<const double> hidden(std::size_t k) const {
        return row(k).subspan(n_inputs() + n_states(), n_hidden());
    }
    /// [u, x_c] part of a row, the augmented observable.
    std::span<const double> observable(std::size_t k) const {
        return row(k).first(n_inputs() + n_states());
    }
    double at(std::size_t k, std::size_t channel) const { return data[k * width() + channel]; }

    void append(std::span<const double> sample);
    /// Samples [begin, end), keeping timestamps.
    TimeSeries segment(std::size_t begin, std::size_t end) const;
    /// Same samples with the hidden channels removed.
    TimeSeries without_hidden() const;
    std::vector<double> channel(std::size_t c) const;
};

}  // namespace greybox
