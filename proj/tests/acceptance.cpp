// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include "fixtures.hpp"
#include "greybox/train.hpp"
#include "oracles.hpp"

using namespace greybox;

namespace {

constexpr double kGradTol = 1e-5;
constexpr int kGradConfigs = 50;
constexpr double kOrderLo = 12.0, kOrderHi = 20.0;
constexpr std::size_t kOracleSteps = 200;
constexpr double kOracleTol = 1e-3;
constexpr double kMmRatioAt100 = 0.5;
constexpr double kPhiTol = 0.15;
constexpr double kYieldTol = 0.25;
constexpr double kBridgeTol = 1e-3;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

int pick(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

std::size_t threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------

Outcome gradients() {
    Rng rng(2024);
    double worst_mlp = 0, worst_g = 0, worst_step = 0;

    for (int c = 0; c < kGradConfigs; ++c) {
        nn::MlpSpec s{static_cast<std::size_t>(pick(rng, 1, 6)), {}, static_cast<std::size_t>(pick(rng, 1, 4))};
        for (int l = pick(rng, 1, 3); l > 0; --l) s.hidden_layers.push_back(pick(rng, 1, 8));
        const auto flat = nn::MlpParams::glorot_uniform(s, rng).flatten();
        std::vector<double> x(s.input_dim), w(s.output_dim);
        for (auto& v : x) v = rng.uniform(-2, 2);
        for (auto& v : w) v = rng.uniform(-1, 1);
        Tape tape;
        const auto net = nn::bind_mlp(tape, s, flat, 0);
        Var y = nn::record_mlp(tape, net, tape.constant(x));
        const auto g = nn::loss_gradient(tape, tape.sum(tape.scale(y, w)), flat.size());
        const auto fd = oracle::fd_gradient(
            [&](const std::vector<double>& p) {
                const auto out = oracle::mlp(s.widths(), p, x);
                double l = 0;
                for (std::size_t i = 0; i < out.size(); ++i) l += w[i] * out[i];
                return l;
            },
            flat);
        worst_mlp = std::max(worst_mlp, oracle::max_relative_error(g, fd));
    }

    PhysicsModel bio(std::make_shared<BioreactorLaw>());
    PhysicsModel mm(std::make_shared<MichaelisMentenLaw>());
    for (int c = 0; c < kGradConfigs; ++c) {
        const PhysicsModel& m = c % 2 ? bio : mm;
        const std::size_t ns = m.n_states(), nt = m.n_constitutive(), nb = m.beta_raw.size();
        std::vector<double> p;
        for (std::size_t i = 0; i < ns; ++i) p.push_back(rng.uniform(0.1, 10));
        for (std::size_t i = 0; i < nt; ++i) p.push_back(rng.uniform(-0.2, 0.2));
        for (std::size_t i = 0; i < nb; ++i) p.push_back(rng.uniform(-2, 0));
        std::vector<double> w(ns);
        for (auto& v : w) v = rng.uniform(-1, 1);
        const double u = rng.uniform(0, 1);
        Tape tape;
        Var leaf = tape.parameter(p, 0);
        Var beta = nb ? record_beta(tape, m, tape.slice(leaf, ns + nt, nb)) : Var{};
        Var g = m.law->record(tape, tape.slice(leaf, 0, ns), tape.constant(u), tape.slice(leaf, ns, nt), beta);
        const auto grad = nn::loss_gradient(tape, tape.sum(tape.scale(g, w)), p.size());
        const auto fd = oracle::fd_gradient(
            [&](const std::vector<double>& q) {
                PhysicsModel mq = m;
                mq.beta_raw.assign(q.begin() + static_cast<std::ptrdiff_t>(ns + nt), q.end());
                const auto r = evaluate_g(mq, std::span<const double>(q).first(ns), std::vector<double>{u},
                                          std::span<const double>(q).subspan(ns, nt));
                double l = 0;
                for (std::size_t i = 0; i < ns; ++i) l += w[i] * r[i];
                return l;
            },
            p);
        worst_g = std::max(worst_g, oracle::max_relative_error(grad, fd));
    }

    const Variant variants[] = {Variant::GB1, Variant::GB2, Variant::BB};
    for (int c = 0; c < kGradConfigs; ++c) {
        const bool is_bio = c % 3 != 0;
        const Variant v = is_bio ? variants[c % 3] : (c % 2 ? Variant::GB1 : Variant::BB);
        auto recipe = ModelRecipe::preset(is_bio ? SystemId::Bioreactor : SystemId::MM);
        recipe.tau = static_cast<double>(pick(rng, 1, 3));
        recipe.dimension = static_cast<std::size_t>(pick(rng, 1, 4));
        recipe.hidden = {static_cast<std::size_t>(pick(rng, 2, 6)), static_cast<std::size_t>(pick(rng, 2, 6))};
        const std::size_t ns = is_bio ? 4 : 1;
        auto series = fixture::random_series(30, ns, rng.next());
        const auto norm = Normalizer::fit(series);
        for (std::size_t k = 0; k < series.length(); ++k) {
            auto row = series.row(k);
            row[0] = norm.mean[0] + 0.5 * norm.stddev[0] * row[0];
        }
        auto model = make_model(v, recipe, norm, rng.next());
        for (auto& p : model->mutable_parameters()) p += rng.uniform(-0.1, 0.1);
        const auto history = HistoryBuffer::from_series(series, 0, series.length());
        const std::vector<std::int64_t> batch{20, 24, 28};
        const auto lg = step_loss_and_grad(*model, batch, history);
        std::vector<double> p0(model->parameters().begin(), model->parameters().end());
        const auto fd = oracle::fd_gradient(
            [&](const std::vector<double>& q) {
                std::copy(q.begin(), q.end(), model->mutable_parameters().begin());
                return step_loss_and_grad(*model, batch, history).loss;
            },
            p0);
        worst_step = std::max(worst_step, oracle::max_relative_error(lg.gradient, fd));
    }

    Outcome o;
    o.pass = worst_mlp < kGradTol && worst_g < kGradTol && worst_step < kGradTol;
    o.detail = fmt("max rel err mlp %.2e, g %.2e, step loss %.2e (tol %.0e)", worst_mlp, worst_g, worst_step, kGradTol);
    return o;
}

// ---------------------------------------------------------------------------

double decay_error(double h, double horizon) {
    const auto e = fixture::embedding(h, 1, 1, h);
    auto m = fixture::pass_model(e, [](Tape& t, const StageContext& c) { return t.scalar_mul(c.x_norm, -1.0); });
    TimeSeries head;
    head.ts = h;
    head.input_names = {"u"};
    head.state_names = {"x"};
    head.append(std::vector<double>{0.0, 1.0});
    const auto n = static_cast<std::size_t>(std::llround(horizon / h));
    const auto run = free_run(m, head, std::vector<double>(n, 0.0), n);
    return std::abs(run.states(n - 1)[0] - std::exp(-horizon));
}

double bio_error(double h, double horizon, const std::vector<double>& reference) {
    TruthModel m;
    m.system = SystemId::Bioreactor;
    auto x = default_initial_state(m);
    const auto n = static_cast<std::size_t>(std::llround(horizon / h));
    for (std::size_t s = 0; s < n; ++s) truth_rk4_step(m, x, 0.9, h);
    double err = 0;
    for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(x[i] - reference[i]));
    return err;
}

Outcome rk4_order() {
    const double r_decay = decay_error(0.1, 4.0) / decay_error(0.05, 4.0);

    TruthModel m;
    m.system = SystemId::Bioreactor;
    auto ref = default_initial_state(m);
    const double horizon = 8.0, fine = 1.0 / 4096;
    for (int s = 0; s < 8 * 4096; ++s) truth_rk4_step(m, ref, 0.9, fine);
    const double r_bio = bio_error(0.25, horizon, ref) / bio_error(0.125, horizon, ref);

    Outcome o;
    o.pass = r_decay >= kOrderLo && r_decay <= kOrderHi && r_bio >= kOrderLo && r_bio <= kOrderHi;
    o.detail = fmt("error ratio under h/2: decay %.2f, bioreactor %.2f (band [%.0f, %.0f])", r_decay, r_bio, kOrderLo,
                   kOrderHi);
    return o;
}

// ---------------------------------------------------------------------------

Outcome oracle_free_run() {
    auto cfg = ExperimentConfig::defaults(SystemId::MM);
    const auto full = simulate_dataset(cfg, true);
    const auto data = Dataset::build(full.without_hidden(), cfg.recipe.embedding(), cfg.train_fraction);
    auto model = make_model(Variant::GB1, cfg.recipe, data.normalizer, cfg.seed);
    auto& gb = dynamic_cast<GreyBoxModel&>(*model);
    gb.set_override(fixture::mm_oracle(cfg.truth.mm, full, data.normalizer));

    const std::size_t warm = data.embedding.warmup_samples();
    const std::size_t begin = data.split;
    const auto region = data.normalized.segment(begin, begin + warm + kOracleSteps);
    const auto run = free_run(gb, region);
    double worst = 0;
    for (std::size_t s = 0; s < run.length(); ++s)
        worst = std::max(worst, std::abs(run.states(s)[0] - region.states(warm + s)[0]));

    Outcome o;
    o.pass = run.length() == kOracleSteps && worst < kOracleTol;
    o.detail = fmt("%.0f-step oracle free run, max normalized error %.2e (tol %.0e)", double(run.length()), worst,
                   kOracleTol);
    return o;
}

// ---------------------------------------------------------------------------

struct MmSweep {
    ExperimentConfig config;
    Dataset data;
    TimeSeries full;
    ExperimentResult result;
    std::string csv;
};

MmSweep mm_sweep() {
    MmSweep s;
    s.config = ExperimentConfig::defaults(SystemId::MM);
    s.config.threads = threads();
    s.full = simulate_dataset(s.config, true);
    s.data = Dataset::build(s.full.without_hidden(), s.config.recipe.embedding(), s.config.train_fraction);
    s.result = run_experiment(s.config, s.data);
    std::ostringstream out;
    write_results_csv(out, s.config, s.result);
    s.csv = out.str();
    return s;
}

Outcome mm_study(const MmSweep& s) {
    Outcome o;
    o.pass = true;
    std::string d;
    for (std::size_t n : s.config.sizes) {
        const auto& gb = s.result.cell(Variant::GB1, n);
        const auto& bb = s.result.cell(Variant::BB, n);
        o.pass = o.pass && gb.median_offline < bb.median_offline;
        if (n == 100) o.pass = o.pass && gb.median_offline <= kMmRatioAt100 * bb.median_offline;
        d += fmt("n=%.0f off GB1 %.3e BB %.3e; ", double(n), gb.median_offline, bb.median_offline);
    }
    const auto& gb = s.result.cell(Variant::GB1, 500);
    const auto& bb = s.result.cell(Variant::BB, 500);
    o.pass = o.pass && gb.median_online <= bb.median_online;
    for (const auto& r : s.result.runs) o.pass = o.pass && !r.failed;
    o.detail = d + fmt("n=500 on GB1 %.3e BB %.3e", gb.median_online, bb.median_online);
    return o;
}

Outcome phi_recovery(const MmSweep& s) {
    const auto& c = s.config;
    const auto pairs = s.data.validation_pairs();
    const auto history = s.data.validation_history();
    std::vector<double> truth;
    for (auto k : pairs) {
        const auto row = static_cast<std::size_t>(k);
        truth.push_back(-mm_rate(c.truth.mm, s.full.hidden(row)[0], s.full.states(row)[0]));
    }
    double mean = 0;
    for (double v : truth) mean += v;
    mean /= static_cast<double>(truth.size());
    double var = 0;
    for (double v : truth) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(truth.size()));

    std::vector<double> nrmse;
    bool same_runs = true;
    for (std::size_t rep = 0; rep < c.replications; ++rep) {
        const std::uint64_t seed = c.seed ^ rep;
        auto model = make_model(Variant::GB1, c.recipe, s.data.normalizer, seed);
        TrainOptions opts;
        opts.epochs = c.epochs;
        opts.batch_size = c.batch_size;
        opts.adam = c.adam;
        opts.seed = seed;
        train_model(*model, s.data, 500, opts);
        for (const auto& r : s.result.runs)
            if (r.variant == Variant::GB1 && r.n_train == 500 && r.replication == rep)
                same_runs = same_runs && evaluate_offline(*model, history, pairs) == r.offline_mse;
        const auto& gb = dynamic_cast<const GreyBoxModel&>(*model);
        double se = 0;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const double d = gb.constitutive_law(history, pairs[i])[0] - truth[i];
            se += d * d;
        }
        nrmse.push_back(std::sqrt(se / static_cast<double>(pairs.size())) / sd);
    }
    const double med = median(nrmse);
    Outcome o;
    o.pass = same_runs && med < kPhiTol;
    o.detail = fmt("median NRMSE of phi over %.0f validation samples %.4f (tol %.2f)", double(pairs.size()), med, kPhiTol);
    if (!same_runs) o.detail += "; retrained models differ from the sweep";
    return o;
}

Outcome determinism(const MmSweep& s) {
    auto config = s.config;
    config.threads = 1;
    const auto again = run_experiment(config, Dataset::build(simulate_dataset(config), config.recipe.embedding(),
                                                             config.train_fraction));
    std::ostringstream out;
    write_results_csv(out, config, again);
    Outcome o;
    o.pass = out.str() == s.csv;
    o.detail = std::string("rerun results CSV ") + (o.pass ? "byte-identical" : "differs") +
               fmt(" (%.0f bytes)", double(s.csv.size()));
    return o;
}

// ---------------------------------------------------------------------------

Outcome bioreactor_study() {
    auto config = ExperimentConfig::defaults(SystemId::Bioreactor);
    config.threads = threads();
    config.write_loss_histories = false;
    const auto result = run_experiment(config);
    const auto& g1 = result.cell(Variant::GB1, 500);
    const auto& g2 = result.cell(Variant::GB2, 500);
    const auto& bb = result.cell(Variant::BB, 500);

    // the GB2 run at size 500 whose on-line error is the median
    std::vector<const RunResult*> runs;
    for (const auto& r : result.runs)
        if (r.variant == Variant::GB2 && r.n_train == 500) runs.push_back(&r);
    std::sort(runs.begin(), runs.end(),
              [](const RunResult* a, const RunResult* b) { return a->online_mse < b->online_mse; });
    const RunResult& mid = *runs[runs.size() / 2];
    const double truth[] = {config.truth.bio.yield_x, config.truth.bio.yield_a, config.truth.bio.yield_b};
    bool yields_ok = !mid.failed && mid.beta_values.size() == 3;
    double worst = 0;
    for (std::size_t i = 0; yields_ok && i < 3; ++i) worst = std::max(worst, std::abs(mid.beta_values[i] / truth[i] - 1));
    yields_ok = yields_ok && worst <= kYieldTol;

    Outcome o;
    o.pass = g1.median_online < bb.median_online && g2.median_online < bb.median_online && yields_ok;
    o.detail = fmt("n=500 on GB1 %.3e GB2 %.3e BB %.3e; ", g1.median_online, g2.median_online, bb.median_online);
    if (mid.beta_values.size() == 3)
        o.detail += fmt("median GB2 run yields %.3f %.3f %.3f, ", mid.beta_values[0], mid.beta_values[1],
                        mid.beta_values[2]) +
                    fmt("max rel dev %.3f (tol %.2f)", worst, kYieldTol);
    return o;
}

// ---------------------------------------------------------------------------

Outcome bridge_consistency() {
    auto cfg = ExperimentConfig::defaults(SystemId::MM);
    cfg.signal.ts = 0.1;
    cfg.substeps = 10;
    const auto full = simulate_dataset(cfg, true);
    const auto norm = Normalizer::fit(full.without_hidden());
    const auto z = norm.normalize(full.without_hidden());
    const auto bridge = NormalizationBridge::from(norm, 1);
    PhysicsModel phys(std::make_shared<MichaelisMentenLaw>(cfg.recipe.mm));
    const auto& p = cfg.truth.mm;

    double worst = 0;
    for (std::size_t k = 1; k + 1 < z.length(); ++k) {
        const double phi = -mm_rate(p, full.hidden(k)[0], full.states(k)[0]);
        Tape tape;
        Var r = record_normalized_rhs(tape, phys, bridge, tape.constant(z.states(k)[0]), tape.constant(z.inputs(k)[0]),
                                      tape.constant(phi), Var{}, true);
        const double fd = (z.states(k + 1)[0] - z.states(k - 1)[0]) / (2 * z.ts);
        worst = std::max(worst, std::abs(tape.value(r)[0] - fd));
    }
    Outcome o;
    o.pass = worst < kBridgeTol;
    o.detail = fmt("max |normalized rhs - central difference| %.2e (tol %.0e)", worst, kBridgeTol);
    return o;
}

}  // namespace

int main() {
    int failures = 0;
    const auto report = [&](int id, const std::function<Outcome()>& f) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("criterion %d: %s  %s  [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    };

    report(1, gradients);
    report(2, rk4_order);
    report(3, oracle_free_run);
    std::optional<MmSweep> sweep;
    report(4, [&] {
        sweep = mm_sweep();
        return mm_study(*sweep);
    });
    report(5, [&] { return sweep ? phi_recovery(*sweep) : Outcome{false, "sweep unavailable"}; });
    report(6, bioreactor_study);
    report(7, [&] { return sweep ? determinism(*sweep) : Outcome{false, "sweep unavailable"}; });
    report(8, bridge_consistency);
    return failures == 0 ? 0 : 1;
}
