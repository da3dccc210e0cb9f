#include "greybox/nncore/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "greybox/errors.hpp"

namespace greybox::nn {

namespace {

double softplus_value(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::uint32_t broadcast_size(std::uint32_t a, std::uint32_t b) {
    if (a == b || b == 1) return a;
    if (a == 1) return b;
    throw ContractError("tape: incompatible operand lengths " + std::to_string(a) + " and " +
                        std::to_string(b));
}

}  // namespace

void Tape::clear() noexcept {
    nodes_.clear();
    values_.clear();
    adjoints_.clear();
    consts_.clear();
    links_.clear();
    have_adjoints_ = false;
}

void Tape::check(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw ContractError("tape: invalid node handle");
}

const Tape::Node& Tape::node(Var v) const {
    check(v);
    return nodes_[v.id];
}

Var Tape::push(Node n) {
    n.offset = static_cast<std::uint32_t>(values_.size());
    values_.resize(values_.size() + n.size);
    nodes_.push_back(n);
    have_adjoints_ = false;
    const std::size_t index = nodes_.size() - 1;
    forward(index);
    return Var{static_cast<std::uint32_t>(index)};
}

Var Tape::push_leaf(Op op, std::span<const double> values) {
    Node n{op};
    n.size = static_cast<std::uint32_t>(values.size());
    n.offset = static_cast<std::uint32_t>(values_.size());
    values_.insert(values_.end(), values.begin(), values.end());
    nodes_.push_back(n);
    have_adjoints_ = false;
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(std::span<const double> values) { return push_leaf(Op::Constant, values); }
Var Tape::constant(double value) { return push_leaf(Op::Constant, std::span<const double>(&value, 1)); }
Var Tape::variable(std::span<const double> values) { return push_leaf(Op::Variable, values); }
Var Tape::variable(double value) { return push_leaf(Op::Variable, std::span<const double>(&value, 1)); }

Var Tape::parameter(std::span<const double> values, std::size_t flat_offset) {
    Var v = push_leaf(Op::Parameter, values);
    nodes_[v.id].aux = static_cast<std::uint32_t>(flat_offset);
    return v;
}

Var Tape::affine(Var weights, Var bias, Var x, std::size_t rows, std::size_t cols) {
    const Node& w = node(weights);
    const Node& b = node(bias);
    const Node& xn = node(x);
    if (w.size != rows * cols || b.size != rows || xn.size != cols) {
        throw ContractError("tape: affine shape mismatch (weights " + std::to_string(w.size) +
                            ", bias " + std::to_string(b.size) + ", input " +
                            std::to_string(xn.size) + " for " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ")");
    }
    Node n{Op::Affine};
    n.a = weights.id;
    n.b = bias.id;
    n.c = x.id;
    n.size = static_cast<std::uint32_t>(rows);
    n.aux = static_cast<std::uint32_t>(rows);
    n.aux2 = static_cast<std::uint32_t>(cols);
    return push(n);
}

Var Tape::softplus(Var x) {
    Node n{Op::Softplus};
    n.a = x.id;
    n.size = node(x).size;
    return push(n);
}

Var Tape::exp(Var x) {
    Node n{Op::Exp};
    n.a = x.id;
    n.size = node(x).size;
    return push(n);
}

Var Tape::binary(Op op, Var a, Var b) {
    Node n{op};
    n.a = a.id;
    n.b = b.id;
    n.size = broadcast_size(node(a).size, node(b).size);
    return push(n);
}

Var Tape::add(Var a, Var b) { return binary(Op::Add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::Sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::Mul, a, b); }
Var Tape::div(Var a, Var b) { return binary(Op::Div, a, b); }

Var Tape::scale(Var a, std::span<const double> factors) {
    Node n{Op::Scale};
    n.a = a.id;
    n.size = broadcast_size(node(a).size, static_cast<std::uint32_t>(factors.size()));
    if (factors.size() != n.size) throw ContractError("tape: scale factors must match operand length");
    n.aux = static_cast<std::uint32_t>(consts_.size());
    consts_.insert(consts_.end(), factors.begin(), factors.end());
    return push(n);
}

Var Tape::shift(Var a, std::span<const double> offsets) {
    Node n{Op::Shift};
    n.a = a.id;
    n.size = broadcast_size(node(a).size, static_cast<std::uint32_t>(offsets.size()));
    if (offsets.size() != n.size) throw ContractError("tape: shift offsets must match operand length");
    n.aux = static_cast<std::uint32_t>(consts_.size());
    consts_.insert(consts_.end(), offsets.begin(), offsets.end());
    return push(n);
}

Var Tape::scalar_mul(Var a, double k) {
    Node n{Op::ScalarMul};
    n.a = a.id;
    n.size = node(a).size;
    n.k1 = k;
    return push(n);
}

Var Tape::concat(std::span<const Var> parts) {
    Node n{Op::Concat};
    n.aux = static_cast<std::uint32_t>(links_.size());
    n.aux2 = static_cast<std::uint32_t>(parts.size());
    std::uint32_t total = 0;
    for (Var p : parts) {
        total += node(p).size;
        links_.push_back(p.id);
    }
    n.size = total;
    return push(n);
}

Var Tape::slice(Var a, std::size_t start, std::size_t count) {
    if (start + count > node(a).size) throw ContractError("tape: slice out of range");
    Node n{Op::Slice};
    n.a = a.id;
    n.aux = static_cast<std::uint32_t>(start);
    n.size = static_cast<std::uint32_t>(count);
    return push(n);
}

Var Tape::sum(Var a) {
    Node n{Op::Sum};
    n.a = a.id;
    n.size = 1;
    check(a);
    return push(n);
}

Var Tape::hill_ratio(Var x, double exponent, double half_saturation) {
    Node n{Op::HillRatio};
    n.a = x.id;
    n.size = node(x).size;
    n.k1 = exponent;
    n.k2 = half_saturation;
    return push(n);
}

std::size_t Tape::length(Var v) const { return node(v).size; }

std::span<const double> Tape::value(Var v) const {
    const Node& n = node(v);
    return {values_.data() + n.offset, n.size};
}

double Tape::scalar(Var v) const {
    const Node& n = node(v);
    if (n.size != 1) throw ContractError("tape: node is not scalar");
    return values_[n.offset];
}

Tape::Op Tape::op(Var v) const { return node(v).op; }

void Tape::forward(std::size_t index) {
    const Node& n = nodes_[index];
    double* y = values_.data() + n.offset;
    const auto in = [&](std::uint32_t id) { return values_.data() + nodes_[id].offset; };
    const auto len = [&](std::uint32_t id) { return nodes_[id].size; };

    switch (n.op) {
        case Op::Constant:
        case Op::Variable:
        case Op::Parameter:
            return;
        case Op::Affine: {
            const double* w = in(n.a);
            const double* b = in(n.b);
            const double* x = in(n.c);
            for (std::uint32_t r = 0; r < n.aux; ++r) {
                double acc = b[r];
                const double* row = w + static_cast<std::size_t>(r) * n.aux2;
                for (std::uint32_t c = 0; c < n.aux2; ++c) acc += row[c] * x[c];
                y[r] = acc;
            }
            return;
        }
        case Op::Softplus: {
            const double* x = in(n.a);
            for (std::uint32_t i = 0; i < n.size; ++i) y[i] = softplus_value(x[i]);
            return;
        }
        case Op::Exp: {
            const double* x = in(n.a);
            for (std::uint32_t i = 0; i < n.size; ++i) y[i] = std::exp(x[i]);
            return;
        }
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div: {
            const double* a = in(n.a);
            const double* b = in(n.b);
            const std::uint32_t sa = len(n.a) == 1 ? 0 : 1;
            const std::uint32_t sb = len(n.b) == 1 ? 0 : 1;
            for (std::uint32_t i = 0; i < n.size; ++i) {
                const double av = a[i * sa];
                const double bv = b[i * sb];
                switch (n.op) {
                    case Op::Add: y[i] = av + bv; break;
                    case Op::Sub: y[i] = av - bv; break;
                    case Op::Mul: y[i] = av * bv; break;
                    default: y[i] = av / bv; break;
                }
            }
            return;
        }
        case Op::Scale:
        case Op::Shift: {
            const double* a = in(n.a);
            const std::uint32_t sa = len(n.a) == 1 ? 0 : 1;
            const double* k = consts_.data() + n.aux;
            for (std::uint32_t i = 0; i < n.size; ++i)
                y[i] = n.op == Op::Scale ? a[i * sa] * k[i] : a[i * sa] + k[i];
            return;
        }
        case Op::ScalarMul: {
            const double* a = in(n.a);
            for (std::uint32_t i = 0; i < n.size; ++i) y[i] = n.k1 * a[i];
            return;
        }
        case Op::Concat: {
            double* out = y;
            for (std::uint32_t p = 0; p < n.aux2; ++p) {
                const std::uint32_t id = links_[n.aux + p];
                out = std::copy_n(in(id), len(id), out);
            }
            return;
        }
        case Op::Slice:
            std::copy_n(in(n.a) + n.aux, n.size, y);
            return;
        case Op::Sum: {
            const double* a = in(n.a);
            double acc = 0.0;
            for (std::uint32_t i = 0; i < len(n.a); ++i) acc += a[i];
            y[0] = acc;
            return;
        }
        case Op::HillRatio: {
            const double* x = in(n.a);
            for (std::uint32_t i = 0; i < n.size; ++i) {
                const double xn = std::pow(std::max(x[i], 0.0), n.k1);
                y[i] = xn / (n.k2 + xn);
            }
            return;
        }
    }
}

void Tape::replay() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) forward(i);
    have_adjoints_ = false;
}

void Tape::backward(Var loss) {
    const Node& ln = node(loss);
    if (ln.size != 1) {
        throw ContractError("tape: backward() needs a scalar loss node, got length " +
                            std::to_string(ln.size));
    }
    adjoints_.assign(values_.size(), 0.0);
    adjoints_[ln.offset] = 1.0;

    for (std::size_t idx = loss.id + 1; idx-- > 0;) {
        const Node& n = nodes_[idx];
        const double* dy = adjoints_.data() + n.offset;
        const double* y = values_.data() + n.offset;
        const auto val = [&](std::uint32_t id) { return values_.data() + nodes_[id].offset; };
        const auto adj = [&](std::uint32_t id) { return adjoints_.data() + nodes_[id].offset; };
        const auto len = [&](std::uint32_t id) { return nodes_[id].size; };

        switch (n.op) {
            case Op::Constant:
            case Op::Variable:
            case Op::Parameter:
                break;
            case Op::Affine: {
                const double* w = val(n.a);
                const double* x = val(n.c);
                double* dw = adj(n.a);
                double* db = adj(n.b);
                double* dx = adj(n.c);
                for (std::uint32_t r = 0; r < n.aux; ++r) {
                    const double g = dy[r];
                    if (g == 0.0) continue;
                    db[r] += g;
                    const std::size_t row = static_cast<std::size_t>(r) * n.aux2;
                    for (std::uint32_t c = 0; c < n.aux2; ++c) {
                        dw[row + c] += g * x[c];
                        dx[c] += g * w[row + c];
                    }
                }
                break;
            }
            case Op::Softplus: {
                const double* x = val(n.a);
                double* dx = adj(n.a);
                for (std::uint32_t i = 0; i < n.size; ++i) dx[i] += dy[i] * sigmoid(x[i]);
                break;
            }
            case Op::Exp: {
                double* dx = adj(n.a);
                for (std::uint32_t i = 0; i < n.size; ++i) dx[i] += dy[i] * y[i];
                break;
            }
            case Op::Add:
            case Op::Sub:
            case Op::Mul:
            case Op::Div: {
                const double* a = val(n.a);
                const double* b = val(n.b);
                double* da = adj(n.a);
                double* db = adj(n.b);
                const std::uint32_t sa = len(n.a) == 1 ? 0 : 1;
                const std::uint32_t sb = len(n.b) == 1 ? 0 : 1;
                for (std::uint32_t i = 0; i < n.size; ++i) {
                    const double g = dy[i];
                    const double av = a[i * sa];
                    const double bv = b[i * sb];
                    switch (n.op) {
                        case Op::Add:
                            da[i * sa] += g;
                            db[i * sb] += g;
                            break;
                        case Op::Sub:
                            da[i * sa] += g;
                            db[i * sb] -= g;
                            break;
                        case Op::Mul:
                            da[i * sa] += g * bv;
                            db[i * sb] += g * av;
                            break;
                        default:
                            da[i * sa] += g / bv;
                            db[i * sb] -= g * av / (bv * bv);
                            break;
                    }
                }
                break;
            }
            case Op::Scale:
            case Op::Shift: {
                double* da = adj(n.a);
                const std::uint32_t sa = len(n.a) == 1 ? 0 : 1;
                const double* k = consts_.data() + n.aux;
                for (std::uint32_t i = 0; i < n.size; ++i)
                    da[i * sa] += n.op == Op::Scale ? dy[i] * k[i] : dy[i];
                break;
            }
            case Op::ScalarMul: {
                double* da = adj(n.a);
                for (std::uint32_t i = 0; i < n.size; ++i) da[i] += n.k1 * dy[i];
                break;
            }
            case Op::Concat: {
                const double* g = dy;
                for (std::uint32_t p = 0; p < n.aux2; ++p) {
                    const std::uint32_t id = links_[n.aux + p];
                    double* da = adj(id);
                    for (std::uint32_t i = 0; i < len(id); ++i) da[i] += g[i];
                    g += len(id);
                }
                break;
            }
            case Op::Slice: {
                double* da = adj(n.a) + n.aux;
                for (std::uint32_t i = 0; i < n.size; ++i) da[i] += dy[i];
                break;
            }
            case Op::Sum: {
                double* da = adj(n.a);
                for (std::uint32_t i = 0; i < len(n.a); ++i) da[i] += dy[0];
                break;
            }
            case Op::HillRatio: {
                const double* x = val(n.a);
                double* dx = adj(n.a);
                for (std::uint32_t i = 0; i < n.size; ++i) {
                    if (x[i] <= 0.0) continue;
                    const double xn = std::pow(x[i], n.k1);
                    const double denom = n.k2 + xn;
                    dx[i] += dy[i] * n.k1 * xn / x[i] * n.k2 / (denom * denom);
                }
                break;
            }
        }
    }
    have_adjoints_ = true;
}

std::span<const double> Tape::adjoint(Var v) const {
    const Node& n = node(v);
    if (!have_adjoints_) throw ContractError("tape: adjoint() before backward()");
    return {adjoints_.data() + n.offset, n.size};
}

void Tape::accumulate_parameter_gradient(std::span<double> grad, double weight) const {
    if (!have_adjoints_) throw ContractError("tape: parameter gradient before backward()");
    for (const Node& n : nodes_) {
        if (n.op != Op::Parameter) continue;
        if (static_cast<std::size_t>(n.aux) + n.size > grad.size())
            throw ContractError("tape: parameter leaf exceeds gradient length");
        for (std::uint32_t i = 0; i < n.size; ++i) grad[n.aux + i] += weight * adjoints_[n.offset + i];
    }
}

std::vector<double> Tape::parameter_gradient(std::size_t n_params) const {
    std::vector<double> grad(n_params, 0.0);
    accumulate_parameter_gradient(grad);
    return grad;
}

std::vector<double> loss_gradient(Tape& tape, Var loss, std::size_t n_params) {
    tape.backward(loss);
    return tape.parameter_gradient(n_params);
}

}  // namespace greybox::nn
