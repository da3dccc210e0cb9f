#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace greybox::nn {

struct AdamConfig {
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;

    AdamState() = default;
    AdamState(std::size_t n, AdamConfig cfg = {}) : config(cfg), m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update, in place.
void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state);

/// Value-semantics form of the same update; takes the parameters by rvalue so
/// that an lvalue vector always selects the in-place overload.
std::pair<std::vector<double>, AdamState> adam_step(std::vector<double>&& params,
                                                    std::span<const double> grad, AdamState state);

}  // namespace greybox::nn
