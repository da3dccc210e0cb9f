#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "greybox/errors.hpp"
#include "greybox/train.hpp"

using namespace greybox;

namespace {

const TimeSeries& mm_series() {
    static const TimeSeries s = simulate_dataset(ExperimentConfig::defaults(SystemId::MM));
    return s;
}

Dataset mm_data() { return Dataset::build(mm_series(), ModelRecipe::preset(SystemId::MM).embedding()); }

}  // namespace

TEST_CASE("normalizer statistics use the population deviation") {
    TimeSeries s;
    s.input_names = {"u"};
    s.state_names = {"x"};
    for (double v : {1.0, 2.0, 3.0}) s.append(std::vector<double>{v, 2 * v});
    const auto n = Normalizer::fit(s);
    CHECK(n.mean == std::vector<double>{2.0, 4.0});
    CHECK(n.stddev[0] == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK(n.normalize(0, 1.0) == doctest::Approx(-std::sqrt(1.5)));
    const auto back = n.denormalize(n.normalize(s));
    for (std::size_t i = 0; i < s.data.size(); ++i) CHECK(back.data[i] == doctest::Approx(s.data[i]));
    const auto id = Normalizer::identity(2);
    CHECK(id.normalize(s).data == s.data);

    TimeSeries flat = s;
    for (std::size_t k = 0; k < 3; ++k) flat.row(k)[1] = 5.0;
    CHECK_THROWS_AS(Normalizer::fit(flat), ContractError);
    CHECK_THROWS_AS(Normalizer::fit(s.segment(0, 1)), ContractError);
}

TEST_CASE("dataset split and pair ranges") {
    const auto d = mm_data();
    REQUIRE(d.raw.length() == 1800);
    CHECK(d.split == 1200);
    const auto tr = d.train_pairs(), va = d.validation_pairs();
    CHECK(tr.size() == 1159);
    CHECK(tr.front() == 40);
    CHECK(tr.back() == 1198);
    CHECK(va.size() == 559);
    CHECK(va.front() == 1240);
    CHECK(va.back() == 1798);
    CHECK(d.train_region().length() == 1200);
    CHECK(d.validation_region().time(0) == 1200.0);
}

TEST_CASE("normalization ignores the validation region") {
    const auto d = mm_data();
    auto other = mm_series();
    for (std::size_t k = 1200; k < other.length(); ++k) other.row(k)[1] *= 3.0;
    const auto e = Dataset::build(other, d.embedding);
    CHECK(e.normalizer == d.normalizer);
    CHECK_THROWS_AS(Dataset::build(mm_series().segment(0, 60), d.embedding), ContractError);
}

TEST_CASE("persistence scores the mean squared increment") {
    const auto d = mm_data();
    PersistenceModel p(d.embedding);
    const auto va = d.validation_pairs();
    double ref = 0.0;
    for (auto k : va) {
        const double inc = d.normalized.states(k + 1)[0] - d.normalized.states(k)[0];
        ref += inc * inc;
    }
    ref /= static_cast<double>(va.size());
    CHECK(evaluate_offline(p, d.validation_history(), va) == doctest::Approx(ref).epsilon(1e-14));
    auto shuffled = va;
    std::reverse(shuffled.begin(), shuffled.end());
    std::rotate(shuffled.begin(), shuffled.begin() + 77, shuffled.end());
    CHECK(evaluate_offline(p, d.validation_history(), shuffled) == doctest::Approx(ref).epsilon(1e-15));

    const auto online = evaluate_online(p, d.validation_region());
    CHECK_FALSE(online.diverged);
    double held = 0.0;
    const double last = d.normalized.states(1240)[0];
    for (std::size_t k = 1241; k < 1800; ++k) held += std::pow(d.normalized.states(k)[0] - last, 2);
    CHECK(online.mse == doctest::Approx(held / 559.0));
}

TEST_CASE("zero epochs leaves the model untouched") {
    const auto d = mm_data();
    auto m = make_model(Variant::GB1, ModelRecipe::preset(SystemId::MM), d.normalizer, 7);
    const std::vector<double> before(m->parameters().begin(), m->parameters().end());
    TrainOptions o;
    o.epochs = 0;
    CHECK(train_model(*m, d, 100, o).empty());
    CHECK(std::equal(before.begin(), before.end(), m->parameters().begin()));
    CHECK_THROWS_AS(train_model(*m, d, 5000, o), ContractError);
}

TEST_CASE("training is deterministic and reduces the training error") {
    const auto d = mm_data();
    const auto recipe = ModelRecipe::preset(SystemId::MM);
    TrainOptions o;
    o.epochs = 4;
    o.adam.step_size = 1e-2;
    o.seed = 3;
    auto a = make_model(Variant::GB1, recipe, d.normalizer, 3);
    auto b = make_model(Variant::GB1, recipe, d.normalizer, 3);
    auto first = d.train_pairs();
    first.resize(100);
    const double start = evaluate_offline(*a, d.train_history(), first);
    const auto ha = train_model(*a, d, 100, o);
    const auto hb = train_model(*b, d, 100, o);
    REQUIRE(ha.size() == 4);
    CHECK(ha.back().train_mse < start);
    CHECK(ha.back().train_mse == hb.back().train_mse);
    CHECK(std::equal(a->parameters().begin(), a->parameters().end(), b->parameters().begin()));
}

TEST_CASE("grey-box variants share their initial network") {
    const auto recipe = ModelRecipe::preset(SystemId::Bioreactor);
    const auto norm = Normalizer::identity(5);
    auto g1 = make_model(Variant::GB1, recipe, norm, 11);
    auto g2 = make_model(Variant::GB2, recipe, norm, 11);
    CHECK(dynamic_cast<GreyBoxModel&>(*g1).mlp_params() == dynamic_cast<GreyBoxModel&>(*g2).mlp_params());
    auto g3 = make_model(Variant::GB1, recipe, norm, 12);
    CHECK_FALSE(dynamic_cast<GreyBoxModel&>(*g1).mlp_params() == dynamic_cast<GreyBoxModel&>(*g3).mlp_params());
    CHECK_THROWS_AS(make_model(Variant::GB2, ModelRecipe::preset(SystemId::MM), Normalizer::identity(2), 1),
                    ContractError);
}

TEST_CASE("median keeps infinities and skips NaN") {
    CHECK(median({3, 1, 2}) == 2);
    CHECK(median({1, 2, 3, 4}) == 2.5);
    CHECK(std::isinf(median({1, INFINITY})));
    CHECK(median({1, NAN, 5, INFINITY}) == 5);
    CHECK(std::isnan(median({})));
}

TEST_CASE("variant names") {
    CHECK(parse_variant("GB2") == Variant::GB2);
    CHECK(to_string(Variant::BB) == "BB");
    CHECK_THROWS(parse_variant("GB3"));
}

TEST_CASE("a small experiment writes one row per run") {
    auto c = ExperimentConfig::defaults(SystemId::MM);
    c.sizes = {50};
    c.replications = 2;
    c.epochs = 2;
    const auto d = Dataset::build(simulate_dataset(c), c.recipe.embedding());
    const auto r1 = run_experiment(c, d);
    REQUIRE(r1.runs.size() == 4);
    CHECK(r1.runs[1].seed == (c.seed ^ 1));
    CHECK(r1.cell(Variant::BB, 50).runs == 2);
    CHECK_FALSE(r1.runs[0].failed);
    c.threads = 2;
    const auto r2 = run_experiment(c, d);
    std::ostringstream a, b;
    write_results_csv(a, c, r1);
    write_results_csv(b, c, r2);
    const std::string text = a.str();
    CHECK(text == b.str());
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
    CHECK(text.find(",\n") != std::string::npos);
    c.sizes = {5000};
    CHECK_THROWS_AS(run_experiment(c, d), ConfigError);
}
