#pragma once

#include <cmath>
#include <memory>

#include "greybox/rkmodel.hpp"
#include "greybox/random.hpp"
#include "greybox/simulators.hpp"

namespace fixture {

using namespace greybox;

/// dx/dt = theta on one state and one input.
class PassLaw final : public ConservationLaw {
public:
    std::string name() const override { return "pass"; }
    std::size_t n_states() const override { return 1; }
    std::size_t n_inputs() const override { return 1; }
    std::size_t n_constitutive() const override { return 1; }
    std::vector<NamedValue> known_constants() const override { return {}; }
    Var record(Tape&, Var, Var, Var theta, Var) const override { return theta; }
};

inline EmbeddingSpec embedding(double tau, std::size_t d, std::size_t n_states, double ts = 1.0) {
    EmbeddingSpec e;
    e.tau = tau;
    e.dimension = d;
    e.n_states = n_states;
    e.n_inputs = 1;
    e.ts = ts;
    return e;
}

/// Grey-box model on PassLaw whose constitutive term is replaced by `fn`.
inline GreyBoxModel pass_model(const EmbeddingSpec& e, ConstitutiveOverride fn) {
    GreyBoxModel m(nn::MlpSpec{e.width(), {4}, 1}, PhysicsModel(std::make_shared<PassLaw>()), e,
                   Normalizer::identity(2));
    m.set_override(std::move(fn));
    return m;
}

inline TimeSeries random_series(std::size_t n, std::size_t n_states, std::uint64_t seed, double ts = 1.0) {
    TimeSeries s;
    s.ts = ts;
    s.input_names = {"u"};
    for (std::size_t i = 0; i < n_states; ++i) s.state_names.push_back("x" + std::to_string(i));
    Rng rng(seed);
    std::vector<double> row(1 + n_states);
    for (std::size_t k = 0; k < n; ++k) {
        for (auto& v : row) v = rng.uniform(-1, 1);
        s.append(row);
    }
    return s;
}

/// Substrate slope from the true rate law, with the enzyme propagated
/// exactly from the recorded full state (u held over the step). Stage times
/// are matched to rows of `full` by timestamp.
inline ConstitutiveOverride mm_oracle(const MMTruthParams& p, const TimeSeries& full, const Normalizer& norm) {
    return [p, &full, norm](Tape& tape, const StageContext& ctx) {
        const auto k = static_cast<std::size_t>(std::llround((ctx.history->time_of(ctx.k) - full.t0) / full.ts));
        const double u = full.inputs(k)[0];
        const double e = u + (full.hidden(k)[0] - u) * std::exp(-ctx.fraction * full.ts / p.residence_time);
        const double sd[] = {norm.stddev[1]}, mu[] = {norm.mean[1]}, km[] = {p.k_m};
        Var s = tape.shift(tape.scale(ctx.x_norm, sd), mu);
        Var rate = tape.div(tape.scalar_mul(s, p.k_cat * e), tape.shift(s, km));
        return tape.scalar_mul(rate, -1.0);
    };
}

}  // namespace fixture
