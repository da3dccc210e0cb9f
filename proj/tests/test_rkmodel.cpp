#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "greybox/errors.hpp"
#include "greybox/train.hpp"
#include "oracles.hpp"

using namespace greybox;

namespace {

std::unique_ptr<StepPredictor> small_bio(Variant v, const Normalizer& norm, std::uint64_t seed) {
    auto r = ModelRecipe::preset(SystemId::Bioreactor);
    r.tau = 2.0;
    r.dimension = 3;
    r.hidden = {6, 5};
    return make_model(v, r, norm, seed);
}

TimeSeries bio_like(std::size_t n, std::uint64_t seed) {
    auto s = fixture::random_series(n, 4, seed);
    for (std::size_t k = 0; k < n; ++k) {
        auto row = s.row(k);
        row[0] = 0.5 + 0.4 * row[0];
        for (int i = 1; i < 5; ++i) row[i] = 2.0 + 1.5 * row[i];
    }
    return s;
}

}  // namespace

TEST_CASE("zero slope gives persistence") {
    const auto e = fixture::embedding(2.0, 3, 1);
    auto m = fixture::pass_model(e, [](Tape& t, const StageContext&) { return t.constant(0.0); });
    const auto s = fixture::random_series(30, 1, 4);
    const auto buf = HistoryBuffer::from_series(s, 0, 30);
    for (std::int64_t k = 5; k < 29; ++k) CHECK(m.predict(buf, k)[0] == s.states(k)[0]);
}

TEST_CASE("linear decay matches one classical RK4 step") {
    const auto e = fixture::embedding(0.1, 1, 1, 0.1);
    auto m = fixture::pass_model(e, [](Tape& t, const StageContext& c) { return t.scalar_mul(c.x_norm, -1.0); });
    TimeSeries head;
    head.ts = 0.1;
    head.input_names = {"u"};
    head.state_names = {"x"};
    head.append(std::vector<double>{0.0, 1.0});
    const auto buf = HistoryBuffer::from_series(head, 0, 1);
    CHECK(std::abs(m.predict(buf, 0)[0] - 0.9048375) < 1e-7);

    const std::vector<double> inputs(100, 0.0);
    const auto run = free_run(m, head, inputs, 100);
    REQUIRE(run.length() == 100);
    const auto ref = oracle::rk4([](const std::vector<double>& x, std::vector<double>& dx) { dx[0] = -x[0]; },
                                 std::vector<double>{1.0}, 0.1, 100);
    CHECK(run.states(99)[0] == doctest::Approx(ref[0]).epsilon(1e-13));
    CHECK(std::abs(run.states(99)[0] - std::exp(-10.0)) < 1e-8);
    CHECK(run.time(0) == doctest::Approx(0.1));
}

TEST_CASE("true substrate law reproduces the simulated trajectory") {
    auto cfg = ExperimentConfig::defaults(SystemId::MM);
    const auto full = simulate_dataset(cfg, true);
    const auto data = Dataset::build(full.without_hidden(), cfg.recipe.embedding());
    auto model = make_model(Variant::GB1, cfg.recipe, data.normalizer, 3);
    auto& gb = dynamic_cast<GreyBoxModel&>(*model);
    gb.set_override(fixture::mm_oracle(cfg.truth.mm, full, data.normalizer));

    const auto buf = data.train_history();
    double worst = 0.0;
    for (auto k : data.train_pairs()) worst = std::max(worst, std::abs(gb.predict(buf, k)[0] - data.normalized.states(k + 1)[0]));
    CHECK(worst < 1e-4);

    const auto region = data.normalized.segment(0, 141);
    const auto run = free_run(gb, region);
    REQUIRE(run.length() == 100);
    for (std::size_t s = 0; s < run.length(); ++s)
        CHECK(std::abs(run.states(s)[0] - region.states(41 + s)[0]) < 1e-3);
}

TEST_CASE("free run edge cases") {
    const auto e = fixture::embedding(2.0, 3, 1);
    auto m = fixture::pass_model(e, [](Tape& t, const StageContext& c) { return t.scalar_mul(c.x_norm, 50.0); });
    const auto s = fixture::random_series(10, 1, 8);
    const std::vector<double> inputs(40, 0.0);
    CHECK(free_run(m, s, inputs, 0).length() == 0);
    CHECK_THROWS_AS(free_run(m, s.segment(0, 3), inputs, 5), ColdStartError);
    CHECK_THROWS_AS(free_run(m, s, inputs, 40), DivergenceError);
    CHECK_THROWS_AS(free_run(m, s, inputs, 41), ContractError);
}

TEST_CASE("loss vanishes when targets equal the predictions") {
    auto s = bio_like(30, 9);
    const auto norm = Normalizer::fit(s);
    const auto z = norm.normalize(s.segment(0, 20));
    auto model = small_bio(Variant::GB2, norm, 5);
    auto ext = z;
    const auto pred = model->predict(HistoryBuffer::from_series(z, 0, 20), 19);
    std::vector<double> row{0.1};
    row.insert(row.end(), pred.begin(), pred.end());
    ext.append(row);
    const std::int64_t k[] = {19};
    CHECK(step_loss_and_grad(*model, k, HistoryBuffer::from_series(ext, 0, 21)).loss == 0.0);
}

TEST_CASE("step loss gradient matches finite differences") {
    const auto s = bio_like(40, 11);
    const auto norm = Normalizer::fit(s);
    const auto buf = HistoryBuffer::from_series(norm.normalize(s), 0, 40);
    const std::vector<std::int64_t> batch{10, 17, 25, 38};
    for (Variant v : {Variant::GB1, Variant::GB2, Variant::BB}) {
        CAPTURE(to_string(v));
        auto model = small_bio(v, norm, 21);
        const auto lg = step_loss_and_grad(*model, batch, buf);
        std::vector<double> p(model->parameters().begin(), model->parameters().end());
        const auto fd = oracle::fd_gradient(
            [&](const std::vector<double>& q) {
                std::copy(q.begin(), q.end(), model->mutable_parameters().begin());
                return step_loss_and_grad(*model, batch, buf).loss;
            },
            p);
        CHECK(oracle::max_relative_error(lg.gradient, fd) < 1e-5);
        if (v != Variant::BB) {
            const std::size_t n = dynamic_cast<GreyBoxModel&>(*model).mlp_spec().parameter_count();
            REQUIRE(lg.gradient.size() == n + 3);
            for (std::size_t i = n; i < n + 3; ++i) CHECK(lg.gradient[i] != 0.0);
        }
    }
}

TEST_CASE("predictions ignore samples older than the embedding") {
    auto s = bio_like(30, 13);
    const auto norm = Normalizer::fit(s);
    auto z = norm.normalize(s);
    auto model = small_bio(Variant::GB2, norm, 2);
    const std::int64_t k = 20;
    const auto a = model->predict(HistoryBuffer::from_series(z, 0, 30), k);
    CHECK(model->predict(HistoryBuffer::from_series(z, 0, 30), k) == a);
    for (std::size_t j = 0; j < 16; ++j)
        for (auto& v : z.row(j)) v = 7.0;
    CHECK(model->predict(HistoryBuffer::from_series(z, 0, 30), k) == a);
    z.row(16)[2] += 0.5;
    CHECK(model->predict(HistoryBuffer::from_series(z, 0, 30), k) != a);
}

TEST_CASE("model files round trip") {
    const auto s = bio_like(30, 15);
    const auto norm = Normalizer::fit(s);
    const auto buf = HistoryBuffer::from_series(norm.normalize(s), 0, 30);
    for (Variant v : {Variant::GB1, Variant::GB2, Variant::BB}) {
        CAPTURE(to_string(v));
        auto model = small_bio(v, norm, 4);
        if (v != Variant::BB) model->mutable_parameters().back() = std::log(0.3);
        std::ostringstream first;
        save_model(first, *model);
        std::istringstream in(first.str());
        const auto back = load_model(in);
        std::ostringstream second;
        save_model(second, *back);
        CHECK(first.str() == second.str());
        CHECK(back->predict(buf, 25) == model->predict(buf, 25));
        CHECK((first.str().find("physics") == std::string::npos) == (v == Variant::BB));
    }
    std::istringstream bad("greybox-model v1\ntype grey-box\n");
    CHECK_THROWS_AS(load_model(bad), ContractError);
}

TEST_CASE("models reject mismatched shapes") {
    const auto e = fixture::embedding(2.0, 3, 1);
    CHECK_THROWS_AS(GreyBoxModel(nn::MlpSpec{5, {4}, 1}, PhysicsModel(std::make_shared<fixture::PassLaw>()), e,
                                 Normalizer::identity(2)),
                    ContractError);
    CHECK_THROWS_AS(BlackBoxModel(nn::MlpSpec{6, {4}, 2}, e, Normalizer::identity(2)), ContractError);
    CHECK_THROWS_AS(BlackBoxModel(nn::MlpSpec{6, {4}, 1}, e, Normalizer::identity(3)), ContractError);
}
