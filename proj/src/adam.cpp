#include "greybox/nncore/adam.hpp"

#include <cmath>

#include "greybox/errors.hpp"

namespace greybox::nn {

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state) {
    if (params.size() != grad.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ContractError("adam: params, grad and moment vectors must have equal lengths");
    }
    const AdamConfig& c = state.config;
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= c.step_size * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

std::pair<std::vector<double>, AdamState> adam_step(std::vector<double>&& params, std::span<const double> grad,
                                                    AdamState state) {
    adam_step(std::span<double>(params), grad, state);
    return {std::move(params), std::move(state)};
}

}  // namespace greybox::nn
