#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "greybox/nncore/tape.hpp"
#include "greybox/normalizer.hpp"

namespace greybox {

using nn::Tape;
using nn::Var;

struct NamedValue {
    std::string name;
    double value = 0.0;
};

struct TrainableConstant {
    std::string name;
    double initial = 1.0;
    bool positive = true;
};

/// Known balance equations g(x_c, u, theta | alpha, beta) in physical units.
/// theta is the closed constitutive term (prior times learned factor).
class ConservationLaw {
public:
    virtual ~ConservationLaw() = default;

    virtual std::string name() const = 0;
    virtual std::size_t n_states() const = 0;
    virtual std::size_t n_inputs() const = 0;
    virtual std::size_t n_constitutive() const = 0;
    virtual std::vector<NamedValue> known_constants() const = 0;
    virtual std::vector<TrainableConstant> unknown_constants() const { return {}; }

    /// Records g on the tape. `beta` holds physical (not log) values and is
    /// invalid when the law has no unknown constants.
    virtual Var record(Tape& tape, Var x, Var u, Var theta, Var beta) const = 0;
};

/// Substrate balance of the enzyme CSTR: dS/dt = (S0 - S)/theta_res + phi.
struct MMGreyParams {
    double residence_time = 20.0;     // theta, s
    double inlet_substrate = 3.0e-2;  // S0, mol/L
};

class MichaelisMentenLaw final : public ConservationLaw {
public:
    explicit MichaelisMentenLaw(MMGreyParams params = {});

    std::string name() const override { return "mm"; }
    std::size_t n_states() const override { return 1; }
    std::size_t n_inputs() const override { return 1; }
    std::size_t n_constitutive() const override { return 1; }
    std::vector<NamedValue> known_constants() const override;
    Var record(Tape& tape, Var x, Var u, Var theta, Var beta) const override;

    const MMGreyParams& params() const noexcept { return params_; }

private:
    MMGreyParams params_;
};

/// Macroscopic balances of the light-driven chemostat on x_c = {X, A, B, S}
/// with theta = {mu, mu_A, mu_B} and unknown yields beta = {Y_X, Y_A, Y_B}.
struct BioGreyParams {
    double dilution = 0.05;        // D, 1/h
    double inlet_nutrient = 20.0;  // S0, g/L
    double initial_yield = 0.5;
};

class BioreactorLaw final : public ConservationLaw {
public:
    explicit BioreactorLaw(BioGreyParams params = {});

    std::string name() const override { return "bioreactor"; }
    std::size_t n_states() const override { return 4; }
    std::size_t n_inputs() const override { return 1; }
    std::size_t n_constitutive() const override { return 3; }
    std::vector<NamedValue> known_constants() const override;
    std::vector<TrainableConstant> unknown_constants() const override;
    Var record(Tape& tape, Var x, Var u, Var theta, Var beta) const override;

    const BioGreyParams& params() const noexcept { return params_; }

private:
    BioGreyParams params_;
};

/// Approximate rate laws for the chemostat, written on physical x_c.
struct PhenomPriors {
    double growth_scale = 0.18;
    double growth_inhibit_a = 7.0;
    double growth_inhibit_b = 7.0;
    double growth_b_offset = 1.0;
    double a_scale = 0.9;
    double a_inhibit = 10.0;
    double a_half_saturation = 1.5;
    double b_scale = 0.25;
    double b_inhibit = 10.0;
    double b_half_saturation = 1.5;

    std::vector<double> as_vector() const;
    static PhenomPriors from_vector(std::span<const double> v);
};

enum class PriorKind { Unit, Phenomenological };
enum class PriorComposition { Multiplicative, Additive };

/// A conservation law together with everything the grey-box layer needs
/// around it: the prior, how it combines with the learned factor, the
/// scaling of the network output and the trainable constants.
struct PhysicsModel {
    std::shared_ptr<const ConservationLaw> law;
    PriorKind prior = PriorKind::Unit;
    PhenomPriors priors;
    PriorComposition composition = PriorComposition::Multiplicative;
    /// phi = phi_mean + phi_std * network output. Empty means identity.
    std::vector<double> phi_mean;
    std::vector<double> phi_std;
    /// Raw storage of the trainable constants (log of value when positive).
    std::vector<double> beta_raw;

    PhysicsModel() = default;
    explicit PhysicsModel(std::shared_ptr<const ConservationLaw> law_, PriorKind prior_ = PriorKind::Unit);

    std::size_t n_states() const { return law->n_states(); }
    std::size_t n_inputs() const { return law->n_inputs(); }
    std::size_t n_constitutive() const { return law->n_constitutive(); }

    /// Physical values of the trainable constants.
    std::vector<double> beta_values() const;
    std::vector<std::string> beta_names() const;
    void set_beta_values(std::span<const double> values);
    std::span<const double> phi_offsets() const;
    std::span<const double> phi_scales() const;
};

/// Flattened names and raw values of the trainable constants, in the order
/// used for optimization ("log_Y_X", ... for positivity-flagged entries).
struct NamedScalar {
    std::string name;
    double value = 0.0;
};
std::vector<NamedScalar> trainable_parameters(const PhysicsModel& model);

/// Physical-unit g(x_c, u, theta | alpha, beta_hat) for plain vectors.
std::vector<double> evaluate_g(const PhysicsModel& model, std::span<const double> x,
                               std::span<const double> u, std::span<const double> theta);

/// Chemostat prior p(x_c, u) in physical units.
std::vector<double> evaluate_prior(const PhenomPriors& priors, std::span<const double> x,
                                   std::span<const double> u);
/// Prior of a model: all ones for the unit prior.
std::vector<double> evaluate_prior(const PhysicsModel& model, std::span<const double> x,
                                   std::span<const double> u);

Var record_prior(Tape& tape, const PhysicsModel& model, Var x, Var u);
/// Map raw beta leaves to physical values (exp for positive entries).
Var record_beta(Tape& tape, const PhysicsModel& model, Var beta_raw);

/// Affine change of variables x = sigma*x~ + mu applied to g, so the
/// grey-box layer can work on normalized state and input.
struct NormalizationBridge {
    std::vector<double> u_mean, u_std, x_mean, x_std, inv_x_std;

    static NormalizationBridge from(const Normalizer& norm, std::size_t n_inputs);
    static NormalizationBridge identity(std::size_t n_inputs, std::size_t n_states);
};

/// d(x~)/dt for normalized state/input and raw network output phi_out.
/// When phi_is_physical is set, phi_out is taken as phi in physical units
/// (used to substitute a known constitutive law for the network).
Var record_normalized_rhs(Tape& tape, const PhysicsModel& model, const NormalizationBridge& bridge, Var x_norm,
                          Var u_norm, Var phi_out, Var beta_phys, bool phi_is_physical = false);

std::unique_ptr<ConservationLaw> make_law(const std::string& name, const std::vector<NamedValue>& constants);

}  // namespace greybox
