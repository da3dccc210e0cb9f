#include "greybox/physics.hpp"

#include <cmath>

#include "greybox/errors.hpp"

namespace greybox {

namespace {

void require_positive(double v, const char* what) {
    if (!(v > 0.0)) throw ContractError(std::string("physics: ") + what + " must be strictly positive");
}

void require_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError(std::string("physics: non-finite ") + what);
}

const double* lookup(const std::vector<NamedValue>& constants, const std::string& name) {
    for (const auto& c : constants)
        if (c.name == name) return &c.value;
    return nullptr;
}

}  // namespace

MichaelisMentenLaw::MichaelisMentenLaw(MMGreyParams params) : params_(params) {
    require_positive(params_.residence_time, "residence time");
    require_positive(params_.inlet_substrate, "inlet substrate");
}

std::vector<NamedValue> MichaelisMentenLaw::known_constants() const {
    return {{"theta", params_.residence_time}, {"S0", params_.inlet_substrate}};
}

Var MichaelisMentenLaw::record(Tape& tape, Var x, Var /*u*/, Var theta, Var /*beta*/) const {
    // (S0 - S)/theta + phi
    const double inv = 1.0 / params_.residence_time;
    const double s0 = params_.inlet_substrate * inv;
    Var inflow = tape.shift(tape.scalar_mul(x, -inv), std::span<const double>(&s0, 1));
    return tape.add(inflow, theta);
}

BioreactorLaw::BioreactorLaw(BioGreyParams params) : params_(params) {
    require_positive(params_.dilution, "dilution rate");
    require_positive(params_.inlet_nutrient, "inlet nutrient");
    if (!(params_.initial_yield > 0.0 && params_.initial_yield < 2.0))
        throw ContractError("physics: initial yield must lie in (0, 2)");
}

std::vector<NamedValue> BioreactorLaw::known_constants() const {
    return {{"D", params_.dilution}, {"S0", params_.inlet_nutrient}};
}

std::vector<TrainableConstant> BioreactorLaw::unknown_constants() const {
    return {{"Y_X", params_.initial_yield, true},
            {"Y_A", params_.initial_yield, true},
            {"Y_B", params_.initial_yield, true}};
}

Var BioreactorLaw::record(Tape& tape, Var x, Var /*u*/, Var theta, Var beta) const {
    const double d = params_.dilution;
    Var biomass = tape.slice(x, 0, 1);
    Var nutrient = tape.slice(x, 3, 1);
    Var mu = tape.slice(theta, 0, 1);

    // rows 1-3: production theta_i * X minus washout
    Var dx = tape.mul(tape.shift(mu, std::vector<double>{-d}), biomass);
    Var products = tape.slice(x, 1, 2);
    Var dprod = tape.sub(tape.mul(tape.slice(theta, 1, 2), biomass), tape.scalar_mul(products, d));

    // row 4: feed minus uptake for growth and both products
    Var uptake = tape.sum(tape.div(theta, beta));
    const double feed = params_.inlet_nutrient * d;
    Var ds = tape.sub(tape.shift(tape.scalar_mul(nutrient, -d), std::vector<double>{feed}),
                      tape.mul(uptake, biomass));
    const Var parts[] = {dx, dprod, ds};
    return tape.concat(parts);
}

std::vector<double> PhenomPriors::as_vector() const {
    return {growth_scale, growth_inhibit_a, growth_inhibit_b, growth_b_offset, a_scale,
            a_inhibit,    a_half_saturation, b_scale,        b_inhibit,       b_half_saturation};
}

PhenomPriors PhenomPriors::from_vector(std::span<const double> v) {
    if (v.size() != 10) throw ContractError("priors: expected 10 constants");
    return PhenomPriors{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]};
}

PhysicsModel::PhysicsModel(std::shared_ptr<const ConservationLaw> law_, PriorKind prior_)
    : law(std::move(law_)), prior(prior_) {
    if (!law) throw ContractError("physics: null conservation law");
    for (const auto& c : law->unknown_constants())
        beta_raw.push_back(c.positive ? std::log(c.initial) : c.initial);
}

std::vector<double> PhysicsModel::beta_values() const {
    const auto unknown = law->unknown_constants();
    std::vector<double> out(beta_raw.size());
    for (std::size_t i = 0; i < beta_raw.size(); ++i)
        out[i] = unknown[i].positive ? std::exp(beta_raw[i]) : beta_raw[i];
    return out;
}

std::vector<std::string> PhysicsModel::beta_names() const {
    std::vector<std::string> out;
    for (const auto& c : law->unknown_constants()) out.push_back(c.name);
    return out;
}

void PhysicsModel::set_beta_values(std::span<const double> values) {
    const auto unknown = law->unknown_constants();
    if (values.size() != unknown.size()) throw ContractError("physics: wrong number of trainable constants");
    beta_raw.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (unknown[i].positive) {
            require_positive(values[i], "positivity-flagged constant");
            beta_raw[i] = std::log(values[i]);
        } else {
            beta_raw[i] = values[i];
        }
    }
}

std::span<const double> PhysicsModel::phi_offsets() const { return phi_mean; }
std::span<const double> PhysicsModel::phi_scales() const { return phi_std; }

std::vector<NamedScalar> trainable_parameters(const PhysicsModel& model) {
    std::vector<NamedScalar> out;
    const auto unknown = model.law->unknown_constants();
    for (std::size_t i = 0; i < unknown.size(); ++i)
        out.push_back({(unknown[i].positive ? "log_" : "") + unknown[i].name, model.beta_raw[i]});
    return out;
}

Var record_beta(Tape& tape, const PhysicsModel& model, Var beta_raw) {
    if (!beta_raw.valid()) return beta_raw;
    const auto unknown = model.law->unknown_constants();
    bool all_positive = true, none_positive = true;
    for (const auto& c : unknown) {
        all_positive = all_positive && c.positive;
        none_positive = none_positive && !c.positive;
    }
    if (all_positive) return tape.exp(beta_raw);
    if (none_positive) return beta_raw;
    std::vector<Var> parts;
    for (std::size_t i = 0; i < unknown.size(); ++i) {
        Var e = tape.slice(beta_raw, i, 1);
        parts.push_back(unknown[i].positive ? tape.exp(e) : e);
    }
    return tape.concat(parts);
}

std::vector<double> evaluate_g(const PhysicsModel& model, std::span<const double> x, std::span<const double> u,
                               std::span<const double> theta) {
    if (x.size() != model.n_states() || u.size() != model.n_inputs() || theta.size() != model.n_constitutive())
        throw ContractError("evaluate_g: arity mismatch for model '" + model.law->name() + "'");
    require_finite(x, "state");
    require_finite(u, "input");
    require_finite(theta, "constitutive term");
    Tape tape;
    Var beta;
    if (!model.beta_raw.empty()) beta = record_beta(tape, model, tape.constant(model.beta_raw));
    Var out = model.law->record(tape, tape.constant(x), tape.constant(u), tape.constant(theta), beta);
    auto v = tape.value(out);
    std::vector<double> result(v.begin(), v.end());
    require_finite(result, "right-hand side");
    return result;
}

namespace {

Var record_phenom(Tape& tape, const PhenomPriors& p, Var x) {
    Var a = tape.slice(x, 1, 1);
    Var b = tape.slice(x, 2, 1);
    Var s = tape.slice(x, 3, 1);
    // p1 = c exp(-A/ka - B/kb) S / (off + B)
    Var e1 = tape.exp(tape.add(tape.scalar_mul(a, -1.0 / p.growth_inhibit_a), tape.scalar_mul(b, -1.0 / p.growth_inhibit_b)));
    Var p1 = tape.div(tape.scalar_mul(tape.mul(e1, s), p.growth_scale),
                      tape.shift(b, std::vector<double>{p.growth_b_offset}));
    // p2, p3 share the exp(-A/k) S/(K+S) shape
    Var e2 = tape.exp(tape.scalar_mul(a, -1.0 / p.a_inhibit));
    Var p2 = tape.div(tape.scalar_mul(tape.mul(e2, s), p.a_scale), tape.shift(s, std::vector<double>{p.a_half_saturation}));
    Var e3 = tape.exp(tape.scalar_mul(a, -1.0 / p.b_inhibit));
    Var p3 = tape.div(tape.scalar_mul(tape.mul(e3, s), p.b_scale), tape.shift(s, std::vector<double>{p.b_half_saturation}));
    const Var parts[] = {p1, p2, p3};
    return tape.concat(parts);
}

}  // namespace

std::vector<double> evaluate_prior(const PhenomPriors& priors, std::span<const double> x,
                                   std::span<const double> /*u*/) {
    if (x.size() != 4) throw ContractError("evaluate_prior: chemostat prior needs 4 states");
    Tape tape;
    auto v = tape.value(record_phenom(tape, priors, tape.constant(x)));
    return {v.begin(), v.end()};
}

std::vector<double> evaluate_prior(const PhysicsModel& model, std::span<const double> x,
                                   std::span<const double> u) {
    if (model.prior == PriorKind::Unit) return std::vector<double>(model.n_constitutive(), 1.0);
    return evaluate_prior(model.priors, x, u);
}

Var record_prior(Tape& tape, const PhysicsModel& model, Var x, Var /*u*/) {
    if (model.prior == PriorKind::Unit) return tape.constant(std::vector<double>(model.n_constitutive(), 1.0));
    if (model.n_states() != 4 || model.n_constitutive() != 3)
        throw ContractError("physics: phenomenological prior is defined for the 4-state chemostat only");
    return record_phenom(tape, model.priors, x);
}

NormalizationBridge NormalizationBridge::from(const Normalizer& norm, std::size_t n_inputs) {
    NormalizationBridge b;
    auto um = norm.input_mean(n_inputs), us = norm.input_std(n_inputs);
    auto xm = norm.state_mean(n_inputs), xs = norm.state_std(n_inputs);
    b.u_mean.assign(um.begin(), um.end());
    b.u_std.assign(us.begin(), us.end());
    b.x_mean.assign(xm.begin(), xm.end());
    b.x_std.assign(xs.begin(), xs.end());
    for (double s : b.x_std) b.inv_x_std.push_back(1.0 / s);
    return b;
}

NormalizationBridge NormalizationBridge::identity(std::size_t n_inputs, std::size_t n_states) {
    return from(Normalizer::identity(n_inputs + n_states), n_inputs);
}

Var record_normalized_rhs(Tape& tape, const PhysicsModel& model, const NormalizationBridge& bridge, Var x_norm,
                          Var u_norm, Var phi_out, Var beta_phys, bool phi_is_physical) {
    Var x = tape.shift(tape.scale(x_norm, bridge.x_std), bridge.x_mean);
    Var u = tape.shift(tape.scale(u_norm, bridge.u_std), bridge.u_mean);
    Var phi = phi_out;
    if (!phi_is_physical) {
        if (!model.phi_std.empty()) phi = tape.scale(phi, model.phi_std);
        if (!model.phi_mean.empty()) phi = tape.shift(phi, model.phi_mean);
    }
    Var theta = phi;
    if (model.prior != PriorKind::Unit) {
        Var p = record_prior(tape, model, x, u);
        theta = model.composition == PriorComposition::Multiplicative ? tape.mul(p, phi) : tape.add(p, phi);
    }
    Var dx = model.law->record(tape, x, u, theta, beta_phys);
    return tape.scale(dx, bridge.inv_x_std);
}

std::unique_ptr<ConservationLaw> make_law(const std::string& name, const std::vector<NamedValue>& constants) {
    const auto need = [&](const char* key) {
        const double* v = lookup(constants, key);
        if (!v) throw ContractError("physics: law '" + name + "' needs constant '" + key + "'");
        return *v;
    };
    if (name == "mm") return std::make_unique<MichaelisMentenLaw>(MMGreyParams{need("theta"), need("S0")});
    if (name == "bioreactor") {
        BioGreyParams p{need("D"), need("S0")};
        if (const double* y = lookup(constants, "initial_yield")) p.initial_yield = *y;
        return std::make_unique<BioreactorLaw>(p);
    }
    throw ContractError("physics: unknown conservation law '" + name + "'");
}

}  // namespace greybox
