#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "greybox/nncore/tape.hpp"
#include "greybox/random.hpp"

namespace greybox::nn {

enum class HiddenActivation { Softplus };
enum class OutputActivation { Linear };

struct MlpSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_layers;
    std::size_t output_dim = 0;
    HiddenActivation hidden_activation = HiddenActivation::Softplus;
    OutputActivation output_activation = OutputActivation::Linear;

    /// fan-in/fan-out of every affine layer, input to output.
    std::vector<std::size_t> widths() const;
    std::size_t layer_count() const noexcept { return hidden_layers.size() + 1; }
    std::size_t parameter_count() const;

    bool operator==(const MlpSpec&) const = default;
};

/// The three-hidden-layer softplus network used for every model here.
MlpSpec standard_spec(std::size_t input_dim, std::size_t output_dim);

struct DenseLayer {
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    std::vector<double> weights;  // fan_out x fan_in, row-major
    std::vector<double> bias;     // fan_out

    bool operator==(const DenseLayer&) const = default;
};

/// Layer weights and biases. The flat ordering is layer by layer, weights
/// (row-major) then bias; optimizers and checkpoints rely on it.
struct MlpParams {
    std::vector<DenseLayer> layers;

    static MlpParams zeros(const MlpSpec& spec);
    /// Glorot-uniform weights, zero biases.
    static MlpParams glorot_uniform(const MlpSpec& spec, Rng& rng);
    static MlpParams unflatten(const MlpSpec& spec, std::span<const double> flat);

    std::vector<double> flatten() const;
    std::size_t parameter_count() const;
    /// Throws ShapeError naming the first layer that disagrees with spec.
    void check_shape(const MlpSpec& spec) const;

    bool operator==(const MlpParams&) const = default;
};

std::vector<double> mlp_forward(const MlpSpec& spec, const MlpParams& params, std::span<const double> x);

/// Parameter leaves of one network bound onto a tape.
struct BoundMlp {
    const MlpSpec* spec = nullptr;
    std::vector<Var> weights;
    std::vector<Var> biases;
};

/// Record every layer of `flat` (laid out per MlpParams::flatten) as tape
/// parameters whose gradients land at flat_offset + local index.
BoundMlp bind_mlp(Tape& tape, const MlpSpec& spec, std::span<const double> flat, std::size_t flat_offset);
Var record_mlp(Tape& tape, const BoundMlp& net, Var x);

/// Plain-text checkpoint: one header line, then one value per line.
///   mlp-checkpoint v1 widths=10,20,20,20,1 activations=softplus,linear count=1021
void write_checkpoint(std::ostream& out, const MlpSpec& spec, const MlpParams& params);
struct Checkpoint {
    MlpSpec spec;
    MlpParams params;
};
Checkpoint read_checkpoint(std::istream& in);

}  // namespace greybox::nn
