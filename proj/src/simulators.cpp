#include "greybox/simulators.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "greybox/errors.hpp"
#include "greybox/random.hpp"

namespace greybox {

SystemId parse_system(const std::string& name) {
    if (name == "mm") return SystemId::MM;
    if (name == "bioreactor") return SystemId::Bioreactor;
    throw ConfigError("unknown system '" + name + "' (expected mm or bioreactor)");
}

std::string to_string(SystemId id) { return id == SystemId::MM ? "mm" : "bioreactor"; }

void BioTruthParams::validate() const {
    const double all[] = {dilution, inlet_nutrient, yield_x, yield_a, yield_b, mu0,   k_s,  k_a,  k_b,
                          k_eb,     r_a1,           r_a2,    k_sa,    k_aa,    r_b1,  r_b2, k_sb, k_bb,
                          tau1,     tau2,           tau3,    tau4,    n_a,     n_b,   k_ha, k_hb};
    for (double v : all)
        if (!(v >= 0.0)) throw ContractError("bioreactor: parameters must be non-negative");
    if (!(tau1 > 0 && tau2 > 0 && tau3 > 0 && tau4 > 0)) throw ContractError("bioreactor: time constants must be positive");
    for (double y : {yield_x, yield_a, yield_b})
        if (!(y > 0.0 && y <= 1.0)) throw ContractError("bioreactor: yields must lie in (0, 1]");
}

SystemLayout system_layout(SystemId id) {
    if (id == SystemId::MM) return {{"u"}, {"S"}, {"E"}};
    return {{"u"}, {"X", "A", "B", "S"}, {"E_A", "E_B", "R_A", "R_B"}};
}

double mm_rate(const MMTruthParams& p, double enzyme, double substrate) {
    return p.k_cat * enzyme * substrate / (p.k_m + substrate);
}

void mm_rhs(const MMTruthParams& p, std::span<const double> x, double u, std::span<double> dxdt) {
    const double s = x[0], e = x[1];
    dxdt[0] = (p.inlet_substrate - s) / p.residence_time - mm_rate(p, e, s);
    dxdt[1] = (u - e) / p.residence_time;
}

std::array<double, 3> bio_rates(const BioTruthParams& p, std::span<const double> x) {
    const double a = x[1], b = x[2], s = x[3], ea = x[4], eb = x[5];
    const double mu = p.mu0 * s * std::exp(-a / p.k_a - b / p.k_b - eb / p.k_eb) / (p.k_s + s);
    const double mu_a = ea * s * std::exp(-a / p.k_aa) / (p.k_sa + s);
    const double mu_b = eb * s * std::exp(-b / p.k_bb) / (p.k_sb + s);
    return {mu, mu_a, mu_b};
}

std::array<double, 2> bio_mrna_setpoints(const BioTruthParams& p, double u) {
    const double on = std::pow(std::max(u, 0.0), p.n_a);
    const double off = std::pow(std::max(1.0 - u, 0.0), p.n_b);
    return {p.r_a1 + (p.r_a2 - p.r_a1) * on / (p.k_ha + on), p.r_b1 + (p.r_b2 - p.r_b1) * off / (p.k_hb + off)};
}

void bio_rhs(const BioTruthParams& p, std::span<const double> x, double u, std::span<double> dxdt) {
    const double X = x[0], A = x[1], B = x[2], S = x[3], EA = x[4], EB = x[5], RA = x[6], RB = x[7];
    const auto [mu, mu_a, mu_b] = bio_rates(p, x);
    const auto [ra0, rb0] = bio_mrna_setpoints(p, u);
    const double d = p.dilution;
    dxdt[0] = (mu - d) * X;
    dxdt[1] = mu_a * X - d * A;
    dxdt[2] = mu_b * X - d * B;
    dxdt[3] = -(mu / p.yield_x + mu_a / p.yield_a + mu_b / p.yield_b) * X + (p.inlet_nutrient - S) * d;
    dxdt[4] = -(EA - RA) / p.tau1;
    dxdt[5] = -(EB - RB) / p.tau2;
    dxdt[6] = -(RA - ra0) / p.tau3;
    dxdt[7] = -(RB - rb0) / p.tau4;
}

void TruthModel::rhs(std::span<const double> x, double u, std::span<double> dxdt) const {
    if (system == SystemId::MM)
        mm_rhs(mm, x, u, dxdt);
    else
        bio_rhs(bio, x, u, dxdt);
}

void truth_rk4_step(const TruthModel& model, std::span<double> x, double u, double dt) {
    const std::size_t n = x.size();
    std::array<double, 8> k1{}, k2{}, k3{}, k4{}, tmp{};
    const auto sp = [n](std::array<double, 8>& a) { return std::span<double>(a.data(), n); };
    model.rhs(x, u, sp(k1));
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
    model.rhs(sp(tmp), u, sp(k2));
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
    model.rhs(sp(tmp), u, sp(k3));
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + dt * k3[i];
    model.rhs(sp(tmp), u, sp(k4));
    for (std::size_t i = 0; i < n; ++i) x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

namespace {

void guard_negative(std::span<double> x, double t) {
    for (double& v : x) {
        if (v < -1e-9) {
            throw NumericError("truth model: state went negative (" + std::to_string(v) + ") at t=" +
                               std::to_string(t));
        }
        if (v < 0.0) v = 0.0;
    }
}

void check_model(const TruthModel& model, std::span<const double> x0) {
    if (x0.size() != model.n_full_states()) throw ContractError("truth model: initial state has wrong length");
    for (double v : x0)
        if (!(v >= 0.0)) throw ContractError("truth model: initial state must be non-negative");
    if (model.system == SystemId::Bioreactor) model.bio.validate();
}

}  // namespace

TimeSeries integrate_truth(const TruthModel& model, std::span<const double> x0, std::span<const double> input,
                           double ts, std::size_t substeps) {
    check_model(model, x0);
    if (!(ts > 0.0) || substeps == 0) throw ContractError("truth model: ts and substeps must be positive");
    const SystemLayout layout = system_layout(model.system);
    TimeSeries out;
    out.ts = ts;
    out.input_names = layout.input_names;
    out.state_names = layout.state_names;
    out.hidden_names = layout.hidden_names;
    out.data.reserve(input.size() * (1 + x0.size()));

    std::vector<double> x(x0.begin(), x0.end());
    const double dt = ts / static_cast<double>(substeps);
    for (std::size_t k = 0; k < input.size(); ++k) {
        out.data.push_back(input[k]);
        out.data.insert(out.data.end(), x.begin(), x.end());
        if (k + 1 == input.size()) break;
        for (std::size_t s = 0; s < substeps; ++s) {
            truth_rk4_step(model, x, input[k], dt);
            guard_negative(x, static_cast<double>(k) * ts + static_cast<double>(s + 1) * dt);
        }
    }
    return out;
}

std::vector<double> settle(const TruthModel& model, std::span<const double> x0, double u, double duration,
                           double dt) {
    check_model(model, x0);
    std::vector<double> x(x0.begin(), x0.end());
    const auto steps = static_cast<std::size_t>(std::ceil(duration / dt));
    for (std::size_t s = 0; s < steps; ++s) {
        truth_rk4_step(model, x, u, dt);
        guard_negative(x, static_cast<double>(s + 1) * dt);
    }
    return x;
}

std::vector<double> default_initial_state(const TruthModel& model) {
    if (model.system == SystemId::MM) return {model.mm.inlet_substrate, 0.0};
    const auto& p = model.bio;
    const auto [ra0, rb0] = bio_mrna_setpoints(p, 0.5);
    const std::vector<double> start = {1.0, 0.0, 0.0, p.inlet_nutrient, ra0, rb0, ra0, rb0};
    return settle(model, start, 0.5, 5000.0, 0.01);
}

StepSignal StepSignal::mm_defaults(std::uint64_t seed) { return StepSignal{seed, 20.0, 100.0, 0.0, 0.02, 1800.0, 1.0}; }

StepSignal StepSignal::bioreactor_defaults(std::uint64_t seed) {
    return StepSignal{seed, 10.0, 50.0, 0.0, 1.0, 2500.0, 1.0};
}

std::vector<double> make_step_signal(const StepSignal& spec) {
    if (!(spec.ts > 0.0) || !(spec.duration > 0.0)) throw ContractError("step signal: ts and duration must be positive");
    if (spec.hold_min > spec.hold_max || spec.amplitude_min > spec.amplitude_max)
        throw ContractError("step signal: empty range");
    const auto n = static_cast<std::size_t>(std::llround(spec.duration / spec.ts));
    std::vector<double> out;
    out.reserve(n);
    Rng rng(spec.seed);
    while (out.size() < n) {
        const double value = rng.uniform(spec.amplitude_min, spec.amplitude_max);
        const double hold = rng.uniform(spec.hold_min, spec.hold_max);
        auto samples = static_cast<std::size_t>(std::llround(hold / spec.ts));
        samples = std::max<std::size_t>(samples, 1);
        for (std::size_t i = 0; i < samples && out.size() < n; ++i) out.push_back(value);
    }
    return out;
}

std::vector<double> make_chirp_signal(double base, double amplitude, double f0, double f1, double duration,
                                      double ts) {
    if (base - std::abs(amplitude) < 0.0) throw ContractError("chirp: signal would go negative");
    if (!(ts > 0.0) || !(duration > 0.0)) throw ContractError("chirp: ts and duration must be positive");
    const auto n = static_cast<std::size_t>(std::llround(duration / ts));
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * ts;
        const double phase = 2.0 * std::numbers::pi * (f0 * t + (f1 - f0) * t * t / (2.0 * duration));
        out[k] = base + amplitude * std::sin(phase);
    }
    return out;
}

void write_csv(std::ostream& out, const TimeSeries& series, bool include_hidden) {
    out << 't';
    for (const auto& n : series.input_names) out << ',' << n;
    for (const auto& n : series.state_names) out << ',' << n;
    if (include_hidden)
        for (const auto& n : series.hidden_names) out << ',' << n;
    out << '\n';
    const std::size_t cols = series.n_inputs() + series.n_states() + (include_hidden ? series.n_hidden() : 0);
    char buf[32];
    for (std::size_t k = 0; k < series.length(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", series.time(k));
        out << buf;
        auto r = series.row(k);
        for (std::size_t c = 0; c < cols; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", r[c]);
            out << ',' << buf;
        }
        out << '\n';
    }
}

TimeSeries read_csv(std::istream& in, const SystemLayout& layout, bool keep_hidden) {
    std::string header;
    if (!std::getline(in, header)) throw ContractError("csv: empty file");
    std::vector<std::string> cols;
    {
        std::istringstream hs(header);
        for (std::string c; std::getline(hs, c, ',');) cols.push_back(c);
    }
    std::vector<std::string> observed = {"t"};
    observed.insert(observed.end(), layout.input_names.begin(), layout.input_names.end());
    observed.insert(observed.end(), layout.state_names.begin(), layout.state_names.end());
    std::vector<std::string> full = observed;
    full.insert(full.end(), layout.hidden_names.begin(), layout.hidden_names.end());
    const bool has_hidden = cols == full && !layout.hidden_names.empty();
    if (cols != observed && !has_hidden) throw ContractError("csv: header '" + header + "' does not match the system");
    if (keep_hidden && !has_hidden) throw ContractError("csv: hidden channels requested but not present");

    TimeSeries out;
    out.input_names = layout.input_names;
    out.state_names = layout.state_names;
    if (keep_hidden) out.hidden_names = layout.hidden_names;
    const std::size_t keep = out.width();
    std::vector<double> times;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<double> vals;
        for (std::string c; std::getline(ls, c, ',');) vals.push_back(std::stod(c));
        if (vals.size() != cols.size()) throw ContractError("csv: ragged row");
        times.push_back(vals[0]);
        out.data.insert(out.data.end(), vals.begin() + 1, vals.begin() + 1 + static_cast<std::ptrdiff_t>(keep));
    }
    if (times.empty()) throw ContractError("csv: no data rows");
    out.t0 = times[0];
    out.ts = times.size() > 1 ? times[1] - times[0] : 1.0;
    for (std::size_t k = 1; k < times.size(); ++k)
        if (std::abs(times[k] - times[k - 1] - out.ts) > 1e-9 * std::max(1.0, std::abs(times[k])))
            throw ContractError("csv: non-uniform sampling");
    return out;
}

}  // namespace greybox
