#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "greybox/timeseries.hpp"

namespace greybox {

/// Delay embedding z_e(t) = [z(t), z(t - tau), ..., z(t - (d-1) tau)] of the
/// augmented observable z = [u, x_c]. tau must be an integer multiple of the
/// sampling interval.
struct EmbeddingSpec {
    double tau = 1.0;
    std::size_t dimension = 1;
    std::size_t n_states = 1;
    std::size_t n_inputs = 1;
    double ts = 1.0;

    void validate() const;
    /// tau / ts as an integer.
    std::size_t delay_steps() const;
    std::size_t block_width() const noexcept { return n_states + n_inputs; }
    std::size_t width() const noexcept { return dimension * block_width(); }
    /// Samples needed before the first embedding exists: (d-1)*m + 1.
    std::size_t warmup_samples() const { return (dimension - 1) * delay_steps() + 1; }

    bool operator==(const EmbeddingSpec&) const = default;
};

/// Ring buffer of z samples at uniform spacing ts. Samples are addressed by
/// their absolute index k (timestamp t0 + k*ts); pushing past capacity drops
/// the oldest sample.
class HistoryBuffer {
public:
    HistoryBuffer(std::size_t width, std::size_t capacity, double t0, double ts);
    /// Observable [u, x_c] channels of series rows [begin, end). The buffer
    /// keeps the original indices and timestamps. capacity 0 means end-begin.
    static HistoryBuffer from_series(const TimeSeries& series, std::size_t begin, std::size_t end,
                                     std::size_t capacity = 0);

    void push(std::span<const double> z);
    std::size_t width() const noexcept { return width_; }
    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const noexcept { return count_; }
    bool empty() const noexcept { return count_ == 0; }
    double ts() const noexcept { return ts_; }

    /// Absolute index of the oldest / newest retained sample.
    std::int64_t first_index() const noexcept { return next_ - static_cast<std::int64_t>(count_); }
    std::int64_t last_index() const noexcept { return next_ - 1; }
    double time_of(std::int64_t k) const noexcept { return t0_ + static_cast<double>(k) * ts_; }
    /// Index whose timestamp equals t; ContractError when t is off-grid.
    std::int64_t index_of(double t) const;

    std::span<const double> sample(std::int64_t k) const;
    std::span<double> mutable_sample(std::int64_t k);

private:
    std::size_t width_;
    std::size_t capacity_;
    double t0_;
    double ts_;
    std::vector<double> data_;
    std::size_t count_ = 0;
    std::int64_t next_ = 0;
};

/// z_e at sample index k. ColdStartError when the history does not reach back
/// (d-1)*tau.
std::vector<double> embed_at_index(const HistoryBuffer& buffer, const EmbeddingSpec& spec, std::int64_t k);
std::vector<double> embed_at(const HistoryBuffer& buffer, const EmbeddingSpec& spec, double t);

/// Delayed blocks j = 1..d-1 of z_e at t_k + fraction*ts, linearly
/// interpolated between the samples bracketing t_k + fraction*ts - j*tau.
/// fraction must lie in (0, 1]. Result length (d-1)*(M+N_c).
void delayed_blocks(const HistoryBuffer& buffer, const EmbeddingSpec& spec, std::int64_t k, double fraction,
                    std::vector<double>& out);

/// Estimated z_e(t + delta) inside a prediction step: block 0 is
/// [u(t), x_head_estimate], the delayed blocks interpolate recorded history.
std::vector<double> embed_interpolated(const HistoryBuffer& buffer, const EmbeddingSpec& spec, double t,
                                       double delta, std::span<const double> x_head_estimate);

}  // namespace greybox
