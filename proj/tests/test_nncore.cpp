#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "greybox/errors.hpp"
#include "greybox/nncore/adam.hpp"
#include "greybox/nncore/mlp.hpp"
#include "oracles.hpp"

using namespace greybox;
using namespace greybox::nn;

namespace {

MlpSpec random_spec(Rng& rng) {
    MlpSpec s;
    s.input_dim = 1 + rng.below(5);
    const auto layers = 1 + rng.below(3);
    for (std::size_t i = 0; i < layers; ++i) s.hidden_layers.push_back(1 + rng.below(6));
    s.output_dim = 1 + rng.below(3);
    return s;
}

std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

}  // namespace

TEST_CASE("mlp spec counts parameters layer by layer") {
    const MlpSpec s = standard_spec(10, 1);
    CHECK(s.widths() == std::vector<std::size_t>{10, 20, 20, 20, 1});
    CHECK(s.parameter_count() == (10 * 20 + 20) + 2 * (20 * 20 + 20) + (20 + 1));
    CHECK(MlpParams::zeros(s).parameter_count() == s.parameter_count());
}

TEST_CASE("zero parameters give zero output") {
    const MlpSpec s = standard_spec(4, 3);
    const auto y = mlp_forward(s, MlpParams::zeros(s), std::vector<double>{1, -2, 3, 0.5});
    CHECK(y == std::vector<double>{0, 0, 0});
}

TEST_CASE("single softplus neuron at zero gives ln 2") {
    MlpSpec s{1, {1}, 1};
    auto p = MlpParams::zeros(s);
    p.layers[0].weights = {1.0};
    p.layers[1].weights = {1.0};
    CHECK(mlp_forward(s, p, std::vector<double>{0.0})[0] == doctest::Approx(0.6931471805599453).epsilon(1e-15));
}

TEST_CASE("mlp_forward agrees with a straight-line re-evaluation") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const MlpSpec s = random_spec(rng);
        const auto params = MlpParams::glorot_uniform(s, rng);
        auto flat = params.flatten();
        for (auto& v : flat) v += rng.uniform(-0.3, 0.3);
        const auto x = random_vector(rng, s.input_dim, -2, 2);
        const auto y = mlp_forward(s, MlpParams::unflatten(s, flat), x);
        const auto ref = oracle::mlp(s.widths(), flat, x);
        REQUIRE(y.size() == s.output_dim);
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-13));
    }
}

TEST_CASE("shape errors name the offending layer") {
    const MlpSpec s{3, {4, 5}, 2};
    auto p = MlpParams::zeros(s);
    p.layers[1].bias.pop_back();
    try {
        p.check_shape(s);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(e.layer() == 1);
    }
    CHECK_THROWS_AS(mlp_forward(s, MlpParams::zeros(s), std::vector<double>{1.0, 2.0}), ShapeError);
}

TEST_CASE("flatten and unflatten are inverse") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const MlpSpec s = random_spec(rng);
        const auto p = MlpParams::glorot_uniform(s, rng);
        CHECK(MlpParams::unflatten(s, p.flatten()) == p);
        CHECK(p.flatten().size() == s.parameter_count());
    }
}

TEST_CASE("glorot initialization respects its bound and zero biases") {
    Rng rng(5);
    const MlpSpec s = standard_spec(10, 3);
    const auto p = MlpParams::glorot_uniform(s, rng);
    for (const auto& layer : p.layers) {
        const double bound = std::sqrt(6.0 / static_cast<double>(layer.fan_in + layer.fan_out));
        for (double w : layer.weights) CHECK(std::abs(w) <= bound);
        for (double b : layer.bias) CHECK(b == 0.0);
    }
    Rng again(5);
    CHECK(MlpParams::glorot_uniform(s, again) == p);
}

TEST_CASE("checkpoint round trip is exact") {
    Rng rng(9);
    const MlpSpec s{3, {7, 4}, 2};
    const auto p = MlpParams::glorot_uniform(s, rng);
    std::stringstream buf;
    write_checkpoint(buf, s, p);
    std::string header;
    std::getline(std::istringstream(buf.str()), header);
    CHECK(header == "mlp-checkpoint v1 widths=3,7,4,2 activations=softplus,linear count=" +
                        std::to_string(s.parameter_count()));
    const auto ck = read_checkpoint(buf);
    CHECK(ck.spec == s);
    CHECK(ck.params == p);
}

TEST_CASE("truncated checkpoint is rejected") {
    const MlpSpec s{2, {2}, 1};
    std::stringstream buf;
    write_checkpoint(buf, s, MlpParams::zeros(s));
    std::string text = buf.str();
    text.resize(text.size() - 4);
    std::istringstream in(text);
    CHECK_THROWS(read_checkpoint(in));
}

TEST_CASE("loss gradient of p squared and softplus") {
    Tape tape;
    Var p = tape.parameter(std::vector<double>{3.0}, 0);
    Var loss = tape.mul(p, p);
    CHECK(loss_gradient(tape, loss, 1)[0] == doctest::Approx(6.0));

    tape.clear();
    p = tape.parameter(std::vector<double>{0.0}, 0);
    CHECK(loss_gradient(tape, tape.softplus(p), 1)[0] == doctest::Approx(0.5));
}

TEST_CASE("non-scalar loss is a contract error") {
    Tape tape;
    Var p = tape.parameter(std::vector<double>{1.0, 2.0}, 0);
    CHECK_THROWS_AS(tape.backward(tape.mul(p, p)), ContractError);
}

TEST_CASE("parameters off the loss path get zero gradient") {
    Tape tape;
    Var a = tape.parameter(std::vector<double>{2.0}, 0);
    tape.parameter(std::vector<double>{5.0}, 1);
    const auto g = loss_gradient(tape, tape.exp(a), 2);
    CHECK(g[0] == doctest::Approx(std::exp(2.0)));
    CHECK(g[1] == 0.0);
}

TEST_CASE("every primitive matches finite differences") {
    // f(p) built from all primitives; p has 6 entries
    auto record = [](Tape& t, std::span<const double> pv) {
        Var p = t.parameter(pv, 0);
        Var a = t.slice(p, 0, 3);
        Var b = t.slice(p, 3, 3);
        Var w = t.constant(std::vector<double>{0.5, -0.2, 0.1, 0.3, 0.7, -0.4});
        Var bias = t.constant(std::vector<double>{0.1, -0.1});
        Var h = t.affine(w, bias, a, 2, 3);
        Var s = t.softplus(h);
        Var e = t.exp(t.scalar_mul(b, 0.5));
        Var q = t.div(t.add(e, t.constant(1.0)), t.shift(t.mul(b, b), std::vector<double>{1.0, 2.0, 3.0}));
        Var hill = t.hill_ratio(t.exp(b), 2.3, 0.4);
        Var all = t.concat(std::vector<Var>{s, q, hill, t.sub(a, b)});
        Var weighted = t.scale(all, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
        return t.sum(t.mul(weighted, weighted));
    };
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p0 = random_vector(rng, 6);
        Tape tape;
        const auto g = loss_gradient(tape, record(tape, p0), 6);
        const auto fd = oracle::fd_gradient(
            [&](const std::vector<double>& p) {
                Tape t;
                return t.scalar(record(t, p));
            },
            p0);
        CHECK(oracle::max_relative_error(g, fd) < 1e-7);
    }
}

TEST_CASE("hill ratio clamps negative arguments") {
    Tape tape;
    Var x = tape.variable(std::vector<double>{-0.5, 0.0, 1.0});
    Var h = tape.hill_ratio(x, 2.0, 1.0);
    const auto v = tape.value(h);
    CHECK(v[0] == 0.0);
    CHECK(v[1] == 0.0);
    CHECK(v[2] == doctest::Approx(0.5));
}

TEST_CASE("broadcasting a length-1 operand") {
    Tape tape;
    Var a = tape.variable(std::vector<double>{1.0, 2.0, 3.0});
    Var k = tape.variable(2.0);
    Var y = tape.sum(tape.mul(a, k));
    CHECK(tape.scalar(y) == doctest::Approx(12.0));
    tape.backward(y);
    CHECK(tape.adjoint(k)[0] == doctest::Approx(6.0));
    CHECK(tape.adjoint(a)[1] == doctest::Approx(2.0));
}

TEST_CASE("replay reproduces recorded values bit for bit") {
    Rng rng(4);
    const MlpSpec s{4, {6, 5}, 2};
    const auto flat = MlpParams::glorot_uniform(s, rng).flatten();
    Tape tape;
    const auto net = bind_mlp(tape, s, flat, 0);
    Var y = record_mlp(tape, net, tape.constant(random_vector(rng, 4)));
    const std::vector<double> before(tape.value(y).begin(), tape.value(y).end());
    tape.replay();
    const std::vector<double> after(tape.value(y).begin(), tape.value(y).end());
    CHECK(before == after);
}

TEST_CASE("mlp squared-error gradients match finite differences") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const MlpSpec s = random_spec(rng);
        const auto flat = MlpParams::glorot_uniform(s, rng).flatten();
        const auto x = random_vector(rng, s.input_dim);
        const auto target = random_vector(rng, s.output_dim);
        auto loss_of = [&](Tape& t, std::span<const double> p) {
            const auto net = bind_mlp(t, s, p, 0);
            Var d = t.sub(record_mlp(t, net, t.constant(x)), t.constant(target));
            return t.sum(t.mul(d, d));
        };
        Tape tape;
        const auto g = loss_gradient(tape, loss_of(tape, flat), flat.size());
        const auto fd = oracle::fd_gradient(
            [&](const std::vector<double>& p) {
                const auto y = oracle::mlp(s.widths(), p, x);
                double l = 0;
                for (std::size_t i = 0; i < y.size(); ++i) l += (y[i] - target[i]) * (y[i] - target[i]);
                return l;
            },
            flat);
        CHECK(oracle::max_relative_error(g, fd) < 1e-5);
    }
}

TEST_CASE("adjoints are linear in the loss") {
    Rng rng(12);
    const MlpSpec s{3, {5}, 1};
    const auto flat = MlpParams::glorot_uniform(s, rng).flatten();
    const double a = rng.uniform(-3, 3);
    Tape t1, t2;
    Var y1 = t1.sum(record_mlp(t1, bind_mlp(t1, s, flat, 0), t1.constant(std::vector<double>{0.1, 0.2, 0.3})));
    Var y2 = t2.scalar_mul(
        t2.sum(record_mlp(t2, bind_mlp(t2, s, flat, 0), t2.constant(std::vector<double>{0.1, 0.2, 0.3}))), a);
    const auto g1 = loss_gradient(t1, y1, flat.size());
    const auto g2 = loss_gradient(t2, y2, flat.size());
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(a * g1[i]).epsilon(1e-12));
}

TEST_CASE("adam: zero gradient leaves parameters and counts the step") {
    std::vector<double> p{1.0, -2.0};
    AdamState st(2);
    adam_step(p, std::vector<double>{0.0, 0.0}, st);
    CHECK(p == std::vector<double>{1.0, -2.0});
    CHECK(st.t == 1);
}

TEST_CASE("adam: first step has magnitude step_size regardless of gradient scale") {
    for (double g : {1e-4, 1.0, 250.0, -3.0}) {
        std::vector<double> p{0.0};
        AdamState st(1);
        adam_step(p, std::vector<double>{g}, st);
        CHECK(std::abs(p[0]) == doctest::Approx(1e-3).epsilon(1e-4));
        CHECK((p[0] < 0) == (g > 0));
    }
}

TEST_CASE("adam: three steps on p^2 follow the scalar recurrence") {
    const AdamConfig c;
    std::vector<double> p{1.0};
    AdamState st(1, c);
    double q = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 3; ++t) {
        adam_step(p, std::vector<double>{2.0 * p[0]}, st);
        const double g = 2.0 * q;
        m = c.beta1 * m + (1 - c.beta1) * g;
        v = c.beta2 * v + (1 - c.beta2) * g * g;
        const double mh = m / (1 - std::pow(c.beta1, t));
        const double vh = v / (1 - std::pow(c.beta2, t));
        q -= c.step_size * mh / (std::sqrt(vh) + c.epsilon);
        CHECK(std::abs(p[0] - q) < 1e-12);
    }
    CHECK(st.t == 3);
    CHECK(st.v[0] >= 0.0);
}

TEST_CASE("adam: value form equals in-place form; length mismatch throws") {
    AdamState st(2);
    auto [p2, st2] = adam_step(std::vector<double>{1.0, 2.0}, std::vector<double>{0.3, -0.1}, st);
    std::vector<double> p{1.0, 2.0};
    adam_step(p, std::vector<double>{0.3, -0.1}, st);
    CHECK(p == p2);
    CHECK(st2.t == st.t);
    CHECK_THROWS_AS(adam_step(p, std::vector<double>{1.0}, st), ContractError);
}
