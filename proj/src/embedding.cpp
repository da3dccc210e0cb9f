#include "greybox/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "greybox/errors.hpp"

namespace greybox {

void EmbeddingSpec::validate() const {
    if (!(ts > 0.0) || !(tau > 0.0)) throw ContractError("embedding: tau and ts must be positive");
    if (dimension == 0 || n_states == 0 || n_inputs == 0)
        throw ContractError("embedding: dimension and channel counts must be positive");
    (void)delay_steps();
}

std::size_t EmbeddingSpec::delay_steps() const {
    const double ratio = tau / ts;
    const double m = std::round(ratio);
    if (m < 1.0 || std::abs(ratio - m) > 1e-9 * std::max(1.0, ratio)) {
        throw ContractError("embedding: tau=" + std::to_string(tau) +
                            " is not a positive integer multiple of ts=" + std::to_string(ts));
    }
    return static_cast<std::size_t>(m);
}

HistoryBuffer::HistoryBuffer(std::size_t width, std::size_t capacity, double t0, double ts)
    : width_(width), capacity_(capacity), t0_(t0), ts_(ts), data_(width * capacity) {
    if (width == 0 || capacity == 0) throw ContractError("history buffer: width and capacity must be positive");
    if (!(ts > 0.0)) throw ContractError("history buffer: ts must be positive");
}

HistoryBuffer HistoryBuffer::from_series(const TimeSeries& series, std::size_t begin, std::size_t end,
                                         std::size_t capacity) {
    if (begin >= end || end > series.length()) throw ContractError("history buffer: empty or invalid range");
    HistoryBuffer buf(series.n_inputs() + series.n_states(), capacity == 0 ? end - begin : capacity,
                      series.t0, series.ts);
    buf.next_ = static_cast<std::int64_t>(begin);
    for (std::size_t k = begin; k < end; ++k) buf.push(series.observable(k));
    return buf;
}

void HistoryBuffer::push(std::span<const double> z) {
    if (z.size() != width_) throw ContractError("history buffer: sample width mismatch");
    const std::size_t slot = static_cast<std::size_t>(next_ % static_cast<std::int64_t>(capacity_));
    std::copy(z.begin(), z.end(), data_.begin() + static_cast<std::ptrdiff_t>(slot * width_));
    ++next_;
    if (count_ < capacity_) ++count_;
}

std::int64_t HistoryBuffer::index_of(double t) const {
    const double r = (t - t0_) / ts_;
    const double k = std::round(r);
    if (std::abs(r - k) > 1e-9 * std::max(1.0, std::abs(r)))
        throw ContractError("history buffer: time " + std::to_string(t) + " is not on the sampling grid");
    return static_cast<std::int64_t>(k);
}

std::span<const double> HistoryBuffer::sample(std::int64_t k) const {
    if (k < first_index() || k > last_index())
        throw ContractError("history buffer: index " + std::to_string(k) + " not retained");
    const std::size_t slot = static_cast<std::size_t>(k % static_cast<std::int64_t>(capacity_));
    return {data_.data() + slot * width_, width_};
}

std::span<double> HistoryBuffer::mutable_sample(std::int64_t k) {
    auto s = std::as_const(*this).sample(k);
    return {const_cast<double*>(s.data()), s.size()};
}

namespace {

void require_history(const HistoryBuffer& buffer, const EmbeddingSpec& spec, std::int64_t k) {
    if (buffer.width() != spec.block_width()) throw ContractError("embedding: buffer width does not match spec");
    if (k > buffer.last_index())
        throw ContractError("embedding: index " + std::to_string(k) + " is past the newest sample");
    const auto reach = static_cast<std::int64_t>((spec.dimension - 1) * spec.delay_steps());
    if (buffer.empty() || k - reach < buffer.first_index()) {
        const double earliest = buffer.time_of(buffer.first_index() + reach);
        throw ColdStartError("embedding: cold start, history does not cover t - (d-1)tau at t=" +
                                 std::to_string(buffer.time_of(k)) + "; earliest feasible t=" +
                                 std::to_string(earliest),
                             earliest);
    }
}

}  // namespace

std::vector<double> embed_at_index(const HistoryBuffer& buffer, const EmbeddingSpec& spec, std::int64_t k) {
    require_history(buffer, spec, k);
    const auto m = static_cast<std::int64_t>(spec.delay_steps());
    std::vector<double> out;
    out.reserve(spec.width());
    for (std::size_t j = 0; j < spec.dimension; ++j) {
        auto z = buffer.sample(k - static_cast<std::int64_t>(j) * m);
        out.insert(out.end(), z.begin(), z.end());
    }
    return out;
}

std::vector<double> embed_at(const HistoryBuffer& buffer, const EmbeddingSpec& spec, double t) {
    return embed_at_index(buffer, spec, buffer.index_of(t));
}

void delayed_blocks(const HistoryBuffer& buffer, const EmbeddingSpec& spec, std::int64_t k, double fraction,
                    std::vector<double>& out) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw ContractError("embedding: interpolation offset must lie in (0, ts]");
    require_history(buffer, spec, k);
    const auto m = static_cast<std::int64_t>(spec.delay_steps());
    const std::size_t w = spec.block_width();
    out.resize((spec.dimension - 1) * w);
    for (std::size_t j = 1; j < spec.dimension; ++j) {
        const std::int64_t lo = k - static_cast<std::int64_t>(j) * m;
        auto a = buffer.sample(lo);
        auto b = buffer.sample(lo + 1);
        double* dst = out.data() + (j - 1) * w;
        for (std::size_t c = 0; c < w; ++c) dst[c] = (1.0 - fraction) * a[c] + fraction * b[c];
    }
}

std::vector<double> embed_interpolated(const HistoryBuffer& buffer, const EmbeddingSpec& spec, double t,
                                       double delta, std::span<const double> x_head_estimate) {
    if (x_head_estimate.size() != spec.n_states)
        throw ContractError("embedding: head estimate must have n_states entries");
    if (!(delta > 0.0) || delta > spec.ts * (1.0 + 1e-12))
        throw ContractError("embedding: delta must lie in (0, ts]");
    const std::int64_t k = buffer.index_of(t);
    std::vector<double> delayed;
    delayed_blocks(buffer, spec, k, std::min(delta / spec.ts, 1.0), delayed);
    std::vector<double> out;
    out.reserve(spec.width());
    auto z = buffer.sample(k);
    out.insert(out.end(), z.begin(), z.begin() + static_cast<std::ptrdiff_t>(spec.n_inputs));
    out.insert(out.end(), x_head_estimate.begin(), x_head_estimate.end());
    out.insert(out.end(), delayed.begin(), delayed.end());
    return out;
}

}  // namespace greybox
