#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "greybox/embedding.hpp"
#include "greybox/nncore/mlp.hpp"
#include "greybox/physics.hpp"
#include "greybox/timeseries.hpp"

namespace greybox {

/// Tape leaves of a model's trainable parameters for one recording session.
struct Binding {
    nn::BoundMlp mlp;
    Var beta_raw;
};

/// Anything that maps a (normalized) history to the normalized x_c one
/// sampling interval ahead.
class StepPredictor {
public:
    virtual ~StepPredictor() = default;

    virtual const EmbeddingSpec& embedding() const = 0;
    virtual std::span<const double> parameters() const { return {}; }
    virtual std::span<double> mutable_parameters() { return {}; }
    std::size_t parameter_count() const { return parameters().size(); }

    virtual Binding bind(Tape& tape) const;
    /// Records x~_c(t_k + h) on the tape using samples up to index k.
    virtual Var record_step(Tape& tape, const Binding& binding, const HistoryBuffer& history,
                            std::int64_t k) const = 0;

    /// Forward-only evaluation of record_step.
    std::vector<double> predict(const HistoryBuffer& history, std::int64_t k) const;
};

/// Inputs seen by a constitutive law at one RK stage.
struct StageContext {
    const HistoryBuffer* history = nullptr;
    std::int64_t k = 0;  // sample index of t
    int stage = 1;       // 1..4
    double fraction = 0.0;  // stage time is t + fraction*h
    Var embedding;       // normalized z_e estimate at the stage time
    Var x_norm;          // normalized state estimate at the stage time
};

/// Replacement for the network: returns phi in physical units.
using ConstitutiveOverride = std::function<Var(Tape&, const StageContext&)>;

/// RK4-templated grey-box model: four passes through the constitutive-law
/// network and the physics layer per sampling interval. Parameters are laid
/// out as [network weights..., raw trainable constants...].
class GreyBoxModel final : public StepPredictor {
public:
    GreyBoxModel(nn::MlpSpec mlp, PhysicsModel physics, EmbeddingSpec embedding, Normalizer normalizer);

    const EmbeddingSpec& embedding() const override { return embedding_; }
    std::span<const double> parameters() const override { return params_; }
    std::span<double> mutable_parameters() override { return params_; }

    Binding bind(Tape& tape) const override;
    Var record_step(Tape& tape, const Binding& binding, const HistoryBuffer& history,
                    std::int64_t k) const override;

    /// Network output phi (physical units, after de-scaling) at a sample.
    std::vector<double> constitutive(const HistoryBuffer& history, std::int64_t k) const;
    /// p * phi at a sample: the estimate of the full constitutive law.
    std::vector<double> constitutive_law(const HistoryBuffer& history, std::int64_t k) const;

    void set_override(ConstitutiveOverride fn) { override_ = std::move(fn); }
    void initialize(Rng& rng);
    void set_mlp_params(const nn::MlpParams& p);
    nn::MlpParams mlp_params() const;

    const nn::MlpSpec& mlp_spec() const noexcept { return mlp_; }
    /// Physics with beta_raw synced to the current parameter vector.
    PhysicsModel physics() const;
    const Normalizer& normalizer() const noexcept { return normalizer_; }
    const NormalizationBridge& bridge() const noexcept { return bridge_; }
    double step_size() const noexcept { return embedding_.ts; }

private:
    nn::MlpSpec mlp_;
    PhysicsModel physics_;
    EmbeddingSpec embedding_;
    Normalizer normalizer_;
    NormalizationBridge bridge_;
    std::vector<double> params_;
    ConstitutiveOverride override_;
};

/// Black-box baseline: the same network shape maps z_e(t) straight to
/// normalized x_c(t + ts).
class BlackBoxModel final : public StepPredictor {
public:
    BlackBoxModel(nn::MlpSpec mlp, EmbeddingSpec embedding, Normalizer normalizer);

    const EmbeddingSpec& embedding() const override { return embedding_; }
    std::span<const double> parameters() const override { return params_; }
    std::span<double> mutable_parameters() override { return params_; }

    Binding bind(Tape& tape) const override;
    Var record_step(Tape& tape, const Binding& binding, const HistoryBuffer& history,
                    std::int64_t k) const override;

    void initialize(Rng& rng);
    void set_mlp_params(const nn::MlpParams& p);
    nn::MlpParams mlp_params() const;
    const nn::MlpSpec& mlp_spec() const noexcept { return mlp_; }
    const Normalizer& normalizer() const noexcept { return normalizer_; }

private:
    nn::MlpSpec mlp_;
    EmbeddingSpec embedding_;
    Normalizer normalizer_;
    std::vector<double> params_;
};

/// Predicts x_c(t + ts) = x_c(t).
class PersistenceModel final : public StepPredictor {
public:
    explicit PersistenceModel(EmbeddingSpec embedding) : embedding_(embedding) {}
    const EmbeddingSpec& embedding() const override { return embedding_; }
    Var record_step(Tape& tape, const Binding& binding, const HistoryBuffer& history,
                    std::int64_t k) const override;

private:
    EmbeddingSpec embedding_;
};

inline constexpr double kDivergenceLimit = 1e6;

/// Closed-loop rollout. `initial_history` supplies at least the warm-up
/// samples ([u, x_c] channels, normalized); `inputs` holds one row of M
/// input values for each predicted sample. Returns the n_steps predicted
/// samples [u, x_c] on the sampling grid after the history. Throws
/// DivergenceError when |x~_c| exceeds kDivergenceLimit.
TimeSeries free_run(const StepPredictor& model, const TimeSeries& initial_history,
                    std::span<const double> inputs, std::size_t n_steps);

/// Rollout over a whole region: the first warm-up samples seed the history,
/// the remaining rows supply inputs.
TimeSeries free_run(const StepPredictor& model, const TimeSeries& region);

struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> gradient;
};

/// Mean over batch and channels of the squared normalized one-step error.
/// `indices` are sample indices k; the target is sample k+1 of `history`.
LossAndGradient step_loss_and_grad(const StepPredictor& model, std::span<const std::int64_t> indices,
                                   const HistoryBuffer& history, Tape& tape);
LossAndGradient step_loss_and_grad(const StepPredictor& model, std::span<const std::int64_t> indices,
                                   const HistoryBuffer& history);

/// Self-describing plain-text model files.
void save_model(std::ostream& out, const StepPredictor& model);
std::unique_ptr<StepPredictor> load_model(std::istream& in);

}  // namespace greybox
