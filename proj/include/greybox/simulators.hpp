#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "greybox/timeseries.hpp"

namespace greybox {

enum class SystemId { MM, Bioreactor };

SystemId parse_system(const std::string& name);
std::string to_string(SystemId id);

/// Enzyme-catalysed reaction S -> P in an isothermal CSTR.
struct MMTruthParams {
    double inlet_substrate = 3.0e-2;  // S0, mol/L
    double residence_time = 20.0;     // theta, s
    double k_cat = 0.14;              // 1/s
    double k_m = 1.5e-2;              // mol/L
};

/// Light-driven chemostat with intracellular enzyme/mRNA dynamics.
struct BioTruthParams {
    double dilution = 0.05;        // D, 1/h
    double inlet_nutrient = 20.0;  // S0, g/L
    double yield_x = 0.435;
    double yield_a = 0.607;
    double yield_b = 0.3;
    double mu0 = 0.22;     // 1/h
    double k_s = 1.03;     // g/L
    double k_a = 7.12;     // g/L
    double k_b = 0.712;    // g/L
    double k_eb = 0.5;     // 1/h
    double r_a1 = 0.0;
    double r_a2 = 1.79;    // 1/h
    double k_sa = 1.68;    // g/L
    double k_aa = 14.0;    // g/L
    double r_b1 = 0.0985;  // 1/h
    double r_b2 = 0.448;   // 1/h
    double k_sb = 1.68;    // g/L
    double k_bb = 14.0;    // g/L
    double tau1 = 5.0;     // h
    double tau2 = 6.0;     // h
    double tau3 = 1.0;     // h
    double tau4 = 1.0;     // h
    double n_a = 2.7;
    double n_b = 2.3;
    double k_ha = 0.08;
    double k_hb = 0.30;

    void validate() const;
};

/// Channel names of each system: observed states first, then hidden ones.
struct SystemLayout {
    std::vector<std::string> input_names;
    std::vector<std::string> state_names;
    std::vector<std::string> hidden_names;
};
SystemLayout system_layout(SystemId id);

// Right-hand sides of the full mechanistic models. State order:
//   MM:         [S, E]
//   bioreactor: [X, A, B, S, E_A, E_B, R_A, R_B]
void mm_rhs(const MMTruthParams& p, std::span<const double> x, double u, std::span<double> dxdt);
void bio_rhs(const BioTruthParams& p, std::span<const double> x, double u, std::span<double> dxdt);

/// k_cat E S / (K_M + S), the reaction rate removed from the substrate balance.
double mm_rate(const MMTruthParams& p, double enzyme, double substrate);
/// {mu, mu_A, mu_B} at a full bioreactor state.
std::array<double, 3> bio_rates(const BioTruthParams& p, std::span<const double> x);
/// mRNA set-points {R_A0, R_B0} for light intensity u.
std::array<double, 2> bio_mrna_setpoints(const BioTruthParams& p, double u);

struct TruthModel {
    SystemId system = SystemId::MM;
    MMTruthParams mm;
    BioTruthParams bio;

    std::size_t n_full_states() const { return system == SystemId::MM ? 2 : 8; }
    void rhs(std::span<const double> x, double u, std::span<double> dxdt) const;
};

/// One classical RK4 step of the truth model with u held constant.
void truth_rk4_step(const TruthModel& model, std::span<double> x, double u, double dt);

/// Fixed-step RK4 over a piecewise-constant input sampled every ts (input[k]
/// holds on [t_k, t_k + ts)). Returns input.size() samples at t_0..t_{n-1}
/// with columns [u, observed states, hidden states]. Excursions below
/// -1e-9 abort with NumericError; smaller negative values are clamped.
TimeSeries integrate_truth(const TruthModel& model, std::span<const double> x0, std::span<const double> input,
                           double ts, std::size_t substeps = 100);

/// Long pre-integration at constant input until the state settles.
std::vector<double> settle(const TruthModel& model, std::span<const double> x0, double u, double duration,
                           double dt);

/// Default initial states: MM S=S0, E=0; bioreactor settled at u=0.5.
std::vector<double> default_initial_state(const TruthModel& model);

struct StepSignal {
    std::uint64_t seed = 0;
    double hold_min = 20.0;
    double hold_max = 100.0;
    double amplitude_min = 0.0;
    double amplitude_max = 0.02;
    double duration = 1800.0;
    double ts = 1.0;

    static StepSignal mm_defaults(std::uint64_t seed);
    static StepSignal bioreactor_defaults(std::uint64_t seed);
};

/// Random piecewise-constant signal, one value per sampling interval.
std::vector<double> make_step_signal(const StepSignal& spec);

/// base + amplitude sin(2 pi (f0 t + (f1 - f0) t^2 / (2 T))), sampled every ts.
std::vector<double> make_chirp_signal(double base, double amplitude, double f0, double f1, double duration,
                                      double ts);

/// Dataset CSV: header `t,<inputs>,<states>[,<hidden>]`, 17 significant digits.
void write_csv(std::ostream& out, const TimeSeries& series, bool include_hidden);
/// Reads a dataset CSV laid out per `layout`. Hidden columns, when present,
/// are dropped unless keep_hidden is set.
TimeSeries read_csv(std::istream& in, const SystemLayout& layout, bool keep_hidden = false);

}  // namespace greybox
