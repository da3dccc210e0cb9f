#include "greybox/nncore/mlp.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "greybox/errors.hpp"

namespace greybox::nn {

namespace {

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

std::string join(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

}  // namespace

std::vector<std::size_t> MlpSpec::widths() const {
    std::vector<std::size_t> w;
    w.reserve(hidden_layers.size() + 2);
    w.push_back(input_dim);
    w.insert(w.end(), hidden_layers.begin(), hidden_layers.end());
    w.push_back(output_dim);
    return w;
}

std::size_t MlpSpec::parameter_count() const {
    const auto w = widths();
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) n += w[i] * w[i + 1] + w[i + 1];
    return n;
}

MlpSpec standard_spec(std::size_t input_dim, std::size_t output_dim) {
    return MlpSpec{input_dim, {20, 20, 20}, output_dim};
}

MlpParams MlpParams::zeros(const MlpSpec& spec) {
    const auto w = spec.widths();
    MlpParams p;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        p.layers.push_back(DenseLayer{w[i], w[i + 1], std::vector<double>(w[i] * w[i + 1], 0.0),
                                      std::vector<double>(w[i + 1], 0.0)});
    }
    return p;
}

MlpParams MlpParams::glorot_uniform(const MlpSpec& spec, Rng& rng) {
    MlpParams p = zeros(spec);
    for (auto& layer : p.layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.fan_in + layer.fan_out));
        for (double& w : layer.weights) w = rng.uniform(-limit, limit);
    }
    return p;
}

MlpParams MlpParams::unflatten(const MlpSpec& spec, std::span<const double> flat) {
    if (flat.size() != spec.parameter_count()) {
        throw ContractError("unflatten: expected " + std::to_string(spec.parameter_count()) +
                            " values, got " + std::to_string(flat.size()));
    }
    MlpParams p = zeros(spec);
    std::size_t k = 0;
    for (auto& layer : p.layers) {
        for (double& w : layer.weights) w = flat[k++];
        for (double& b : layer.bias) b = flat[k++];
    }
    return p;
}

std::vector<double> MlpParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& layer : layers) {
        flat.insert(flat.end(), layer.weights.begin(), layer.weights.end());
        flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
    }
    return flat;
}

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += layer.weights.size() + layer.bias.size();
    return n;
}

void MlpParams::check_shape(const MlpSpec& spec) const {
    const auto w = spec.widths();
    if (layers.size() + 1 != w.size()) {
        throw ShapeError("mlp: spec has " + std::to_string(w.size() - 1) + " layers, params have " +
                             std::to_string(layers.size()),
                         std::min(layers.size(), w.size() - 1));
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.fan_in != w[i] || l.fan_out != w[i + 1] || l.weights.size() != w[i] * w[i + 1] ||
            l.bias.size() != w[i + 1]) {
            throw ShapeError("mlp: layer " + std::to_string(i) + " is " + std::to_string(l.fan_out) +
                                 "x" + std::to_string(l.fan_in) + ", spec expects " +
                                 std::to_string(w[i + 1]) + "x" + std::to_string(w[i]),
                             i);
        }
    }
}

std::vector<double> mlp_forward(const MlpSpec& spec, const MlpParams& params, std::span<const double> x) {
    if (x.size() != spec.input_dim) {
        throw ShapeError("mlp: layer 0 expects input of length " + std::to_string(spec.input_dim) +
                             ", got " + std::to_string(x.size()),
                         0);
    }
    params.check_shape(spec);
    std::vector<double> a(x.begin(), x.end());
    std::vector<double> next;
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        const auto& layer = params.layers[li];
        next.assign(layer.fan_out, 0.0);
        for (std::size_t r = 0; r < layer.fan_out; ++r) {
            double acc = layer.bias[r];
            for (std::size_t c = 0; c < layer.fan_in; ++c) acc += layer.weights[r * layer.fan_in + c] * a[c];
            next[r] = li + 1 < params.layers.size() ? softplus(acc) : acc;
        }
        a.swap(next);
    }
    return a;
}

BoundMlp bind_mlp(Tape& tape, const MlpSpec& spec, std::span<const double> flat, std::size_t flat_offset) {
    if (flat.size() != spec.parameter_count()) {
        throw ContractError("bind_mlp: expected " + std::to_string(spec.parameter_count()) +
                            " values, got " + std::to_string(flat.size()));
    }
    BoundMlp net;
    net.spec = &spec;
    const auto w = spec.widths();
    std::size_t k = 0;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        const std::size_t nw = w[i] * w[i + 1];
        net.weights.push_back(tape.parameter(flat.subspan(k, nw), flat_offset + k));
        k += nw;
        net.biases.push_back(tape.parameter(flat.subspan(k, w[i + 1]), flat_offset + k));
        k += w[i + 1];
    }
    return net;
}

Var record_mlp(Tape& tape, const BoundMlp& net, Var x) {
    const auto w = net.spec->widths();
    if (tape.length(x) != w.front()) {
        throw ShapeError("mlp: layer 0 expects input of length " + std::to_string(w.front()) +
                             ", got " + std::to_string(tape.length(x)),
                         0);
    }
    Var a = x;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        a = tape.affine(net.weights[i], net.biases[i], a, w[i + 1], w[i]);
        if (i + 2 < w.size()) a = tape.softplus(a);
    }
    return a;
}

void write_checkpoint(std::ostream& out, const MlpSpec& spec, const MlpParams& params) {
    params.check_shape(spec);
    out << "mlp-checkpoint v1 widths=" << join(spec.widths())
        << " activations=softplus,linear count=" << spec.parameter_count() << '\n';
    char buf[32];
    for (double v : params.flatten()) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf << '\n';
    }
}

Checkpoint read_checkpoint(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw ContractError("checkpoint: missing header");
    std::istringstream hs(header);
    std::string magic, version, widths_tok, act_tok, count_tok;
    hs >> magic >> version >> widths_tok >> act_tok >> count_tok;
    if (magic != "mlp-checkpoint" || version != "v1" || widths_tok.rfind("widths=", 0) != 0 ||
        act_tok != "activations=softplus,linear" || count_tok.rfind("count=", 0) != 0) {
        throw ContractError("checkpoint: malformed header '" + header + "'");
    }
    std::vector<std::size_t> widths;
    std::istringstream ws(widths_tok.substr(7));
    for (std::string item; std::getline(ws, item, ',');) widths.push_back(std::stoul(item));
    if (widths.size() < 2) throw ContractError("checkpoint: need at least input and output widths");
    Checkpoint cp;
    cp.spec.input_dim = widths.front();
    cp.spec.output_dim = widths.back();
    cp.spec.hidden_layers.assign(widths.begin() + 1, widths.end() - 1);
    const std::size_t count = std::stoul(count_tok.substr(6));
    if (count != cp.spec.parameter_count()) throw ContractError("checkpoint: count disagrees with widths");
    std::vector<double> flat;
    flat.reserve(count);
    std::string line;
    while (flat.size() < count && std::getline(in, line)) flat.push_back(std::stod(line));
    if (flat.size() != count) throw ContractError("checkpoint: truncated value list");
    cp.params = MlpParams::unflatten(cp.spec, flat);
    return cp;
}

}  // namespace greybox::nn
