#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace greybox::nn {

/// Handle to a node recorded on a Tape. Only meaningful for the tape that
/// produced it, and only until that tape is cleared.
struct Var {
    static constexpr std::uint32_t kInvalid = std::numeric_limits<std::uint32_t>::max();
    std::uint32_t id = kInvalid;
    bool valid() const noexcept { return id != kInvalid; }
};

/// Reverse-mode recorder for vector-valued primitives.
///
/// Every node owns a contiguous slice of one value arena and one adjoint
/// arena, so clearing and re-recording reuses memory. Binary elementwise ops
/// accept a length-1 operand and broadcast it. Leaves come in three kinds:
/// constants (no adjoint of interest), variables (adjoint readable after a
/// backward pass) and parameters (adjoint scattered into a flat gradient at a
/// fixed offset, which is how optimizer alignment is kept).
class Tape {
public:
    enum class Op : std::uint8_t {
        Constant,
        Variable,
        Parameter,
        Affine,
        Softplus,
        Exp,
        Add,
        Sub,
        Mul,
        Div,
        Scale,
        Shift,
        ScalarMul,
        Concat,
        Slice,
        Sum,
        HillRatio,
    };

    void clear() noexcept;
    std::size_t size() const noexcept { return nodes_.size(); }

    Var constant(std::span<const double> values);
    Var constant(double value);
    Var variable(std::span<const double> values);
    Var variable(double value);
    /// Trainable leaf whose entries map to flat parameter indices
    /// [flat_offset, flat_offset + values.size()).
    Var parameter(std::span<const double> values, std::size_t flat_offset);

    /// weights (rows*cols, row-major) * x (cols) + bias (rows).
    Var affine(Var weights, Var bias, Var x, std::size_t rows, std::size_t cols);
    Var softplus(Var x);
    Var exp(Var x);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    /// Elementwise product with a constant vector.
    Var scale(Var a, std::span<const double> factors);
    /// Elementwise sum with a constant vector.
    Var shift(Var a, std::span<const double> offsets);
    Var scalar_mul(Var a, double k);
    Var concat(std::span<const Var> parts);
    Var slice(Var a, std::size_t start, std::size_t count);
    Var sum(Var a);
    /// x^n / (k + x^n), with negative x treated as zero.
    Var hill_ratio(Var x, double n, double k);

    std::size_t length(Var v) const;
    std::span<const double> value(Var v) const;
    double scalar(Var v) const;
    Op op(Var v) const;

    /// Reverse sweep seeded with d(loss)/d(loss) = 1. The loss must be a
    /// length-1 node; anything else is a ContractError.
    void backward(Var loss);
    /// Adjoint of any node from the most recent backward().
    std::span<const double> adjoint(Var v) const;
    /// Adjoints of all parameter leaves scattered into a vector of length
    /// n_params (zero where no recorded path reaches the loss).
    std::vector<double> parameter_gradient(std::size_t n_params) const;
    void accumulate_parameter_gradient(std::span<double> grad, double weight = 1.0) const;

    /// Recompute every non-leaf node from the stored leaves, in order.
    void replay();

private:
    struct Node {
        Op op;
        std::uint32_t a = 0;
        std::uint32_t b = 0;
        std::uint32_t c = 0;
        std::uint32_t offset = 0;
        std::uint32_t size = 0;
        std::uint32_t aux = 0;   // const / link offset, slice start, param offset, rows
        std::uint32_t aux2 = 0;  // cols, link count
        double k1 = 0.0;
        double k2 = 0.0;
    };

    Var push(Node node);
    Var push_leaf(Op op, std::span<const double> values);
    Var binary(Op op, Var a, Var b);
    const Node& node(Var v) const;
    void forward(std::size_t index);
    void check(Var v) const;

    std::vector<Node> nodes_;
    std::vector<double> values_;
    std::vector<double> adjoints_;
    std::vector<double> consts_;
    std::vector<std::uint32_t> links_;
    bool have_adjoints_ = false;
};

/// Convenience: d(loss)/d(parameters) over the flat parameter ordering.
std::vector<double> loss_gradient(Tape& tape, Var loss, std::size_t n_params);

}  // namespace greybox::nn
