#include "greybox/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "greybox/errors.hpp"
#include "greybox/random.hpp"

namespace greybox {

Variant parse_variant(const std::string& name) {
    if (name == "GB1") return Variant::GB1;
    if (name == "GB2") return Variant::GB2;
    if (name == "BB") return Variant::BB;
    throw ConfigError("unknown model variant '" + name + "' (expected GB1, GB2 or BB)");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::GB1: return "GB1";
        case Variant::GB2: return "GB2";
        case Variant::BB: return "BB";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Dataset

Dataset Dataset::build(TimeSeries raw, const EmbeddingSpec& embedding, double train_fraction) {
    embedding.validate();
    if (raw.n_inputs() != embedding.n_inputs || raw.n_states() != embedding.n_states)
        throw ContractError("dataset: series channels do not match the embedding");
    if (std::abs(raw.ts - embedding.ts) > 1e-12 * embedding.ts)
        throw ContractError("dataset: series sampling interval differs from the model step");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ContractError("dataset: train fraction must be in (0, 1)");
    Dataset d;
    d.embedding = embedding;
    d.split = static_cast<std::size_t>(std::floor(static_cast<double>(raw.length()) * train_fraction));
    const std::size_t need = embedding.warmup_samples() + 1;
    if (d.split < need || raw.length() - d.split < need)
        throw ContractError("dataset: series too short for the embedding warm-up in both regions");
    d.normalizer = Normalizer::fit(raw.segment(0, d.split));
    d.normalized = d.normalizer.normalize(raw);
    d.raw = std::move(raw);
    return d;
}

HistoryBuffer Dataset::train_history() const { return HistoryBuffer::from_series(normalized, 0, split); }

HistoryBuffer Dataset::validation_history() const {
    return HistoryBuffer::from_series(normalized, split, normalized.length());
}

namespace {

std::vector<std::int64_t> pairs_in(std::size_t begin, std::size_t end, std::size_t warm) {
    std::vector<std::int64_t> out;
    for (std::size_t k = begin + warm - 1; k + 1 < end; ++k) out.push_back(static_cast<std::int64_t>(k));
    return out;
}

}  // namespace

std::vector<std::int64_t> Dataset::train_pairs() const { return pairs_in(0, split, embedding.warmup_samples()); }

std::vector<std::int64_t> Dataset::validation_pairs() const {
    return pairs_in(split, normalized.length(), embedding.warmup_samples());
}

// ---------------------------------------------------------------------------
// Models

ModelRecipe ModelRecipe::preset(SystemId system) {
    ModelRecipe r;
    r.system = system;
    if (system == SystemId::MM) {
        r.tau = 10.0;
        r.dimension = 5;
        r.ts = 1.0;
        r.gb1_phi_scale = {r.mm.inlet_substrate / r.mm.residence_time};
    } else {
        r.tau = 5.0;
        r.dimension = 10;
        r.ts = 1.0;
        r.gb1_phi_scale = {r.bio.dilution, r.bio.dilution, r.bio.dilution};
    }
    return r;
}

EmbeddingSpec ModelRecipe::embedding() const {
    EmbeddingSpec e;
    e.tau = tau;
    e.dimension = dimension;
    e.ts = ts;
    e.n_inputs = 1;
    e.n_states = system == SystemId::MM ? 1 : 4;
    return e;
}

PhysicsModel ModelRecipe::physics(Variant variant) const {
    if (variant == Variant::BB) throw ContractError("recipe: the black-box model has no physics layer");
    std::shared_ptr<const ConservationLaw> law;
    if (system == SystemId::MM) {
        if (variant == Variant::GB2) throw ContractError("recipe: no phenomenological prior is defined for mm");
        law = std::make_shared<MichaelisMentenLaw>(mm);
    } else {
        law = std::make_shared<BioreactorLaw>(bio);
    }
    PhysicsModel p(law, variant == Variant::GB2 ? PriorKind::Phenomenological : PriorKind::Unit);
    p.priors = priors;
    p.composition = composition;
    p.phi_mean = variant == Variant::GB2 ? gb2_phi_offset : gb1_phi_offset;
    p.phi_std = variant == Variant::GB2 ? gb2_phi_scale : gb1_phi_scale;
    return p;
}

std::unique_ptr<StepPredictor> make_model(Variant variant, const ModelRecipe& recipe, const Normalizer& normalizer,
                                          std::uint64_t seed) {
    const EmbeddingSpec e = recipe.embedding();
    Rng init(derive_seed(seed, 1));
    if (variant == Variant::BB) {
        auto m = std::make_unique<BlackBoxModel>(nn::MlpSpec{e.width(), recipe.hidden, e.n_states}, e, normalizer);
        m->initialize(init);
        return m;
    }
    PhysicsModel phys = recipe.physics(variant);
    nn::MlpSpec spec{e.width(), recipe.hidden, phys.n_constitutive()};
    auto m = std::make_unique<GreyBoxModel>(spec, std::move(phys), e, normalizer);
    m->initialize(init);
    return m;
}

// ---------------------------------------------------------------------------
// Training and evaluation

namespace {

struct Neumaier {
    double sum = 0.0;
    double c = 0.0;
    void add(double x) {
        const double t = sum + x;
        c += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
        sum = t;
    }
    double value() const { return sum + c; }
};

}  // namespace

std::vector<EpochRecord> train_model(StepPredictor& model, const Dataset& data, std::size_t n_train,
                                     const TrainOptions& options) {
    std::vector<std::int64_t> pairs = data.train_pairs();
    if (n_train > pairs.size())
        throw ContractError("train: requested " + std::to_string(n_train) + " pairs, only " +
                            std::to_string(pairs.size()) + " available");
    if (n_train == 0) throw ContractError("train: n_train must be positive");
    if (options.batch_size == 0) throw ContractError("train: batch size must be positive");
    pairs.resize(n_train);

    const HistoryBuffer history = data.train_history();
    Rng shuffle(derive_seed(options.seed, 2));
    nn::AdamState state(model.parameter_count(), options.adam);
    nn::Tape tape;
    std::vector<EpochRecord> records;
    std::vector<std::int64_t> order;

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        order = pairs;
        shuffle.shuffle(std::span<std::int64_t>(order));
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t count = std::min(options.batch_size, order.size() - start);
            LossAndGradient lg;
            try {
                lg = step_loss_and_grad(model, std::span<const std::int64_t>(order).subspan(start, count), history,
                                        tape);
            } catch (const DivergenceError& err) {
                throw TrainingFailure(std::string("train: diverged in epoch ") + std::to_string(epoch) + ": " +
                                          err.what(),
                                      epoch);
            }
            if (!std::isfinite(lg.loss))
                throw TrainingFailure("train: non-finite loss in epoch " + std::to_string(epoch), epoch);
            for (double g : lg.gradient)
                if (!std::isfinite(g))
                    throw TrainingFailure("train: non-finite gradient in epoch " + std::to_string(epoch), epoch);
            nn::adam_step(model.mutable_parameters(), lg.gradient, state);
            loss_sum += lg.loss;
            ++batches;
        }
        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.batch_loss = loss_sum / static_cast<double>(batches);
        try {
            rec.train_mse = evaluate_offline(model, history, pairs);
        } catch (const DivergenceError& err) {
            throw TrainingFailure(std::string("train: diverged evaluating epoch ") + std::to_string(epoch) + ": " +
                                      err.what(),
                                  epoch);
        }
        if (!std::isfinite(rec.train_mse))
            throw TrainingFailure("train: non-finite training error after epoch " + std::to_string(epoch), epoch);
        records.push_back(rec);
    }
    return records;
}

double evaluate_offline(const StepPredictor& model, const HistoryBuffer& history,
                        std::span<const std::int64_t> pairs) {
    if (pairs.empty()) throw ContractError("evaluate_offline: no pairs");
    const auto& e = model.embedding();
    constexpr std::size_t kChunk = 64;
    nn::Tape tape;
    Neumaier acc;
    for (std::size_t start = 0; start < pairs.size(); start += kChunk) {
        tape.clear();
        const Binding b = model.bind(tape);
        const std::size_t end = std::min(pairs.size(), start + kChunk);
        for (std::size_t i = start; i < end; ++i) {
            const std::int64_t k = pairs[i];
            auto pred = tape.value(model.record_step(tape, b, history, k));
            auto target = history.sample(k + 1).subspan(e.n_inputs, e.n_states);
            for (std::size_t c = 0; c < e.n_states; ++c) {
                const double d = pred[c] - target[c];
                acc.add(d * d);
            }
        }
    }
    return acc.value() / static_cast<double>(pairs.size() * e.n_states);
}

OnlineResult evaluate_online(const StepPredictor& model, const TimeSeries& region) {
    OnlineResult out;
    const auto& e = model.embedding();
    const std::size_t warm = e.warmup_samples();
    if (region.length() <= warm) throw ContractError("evaluate_online: region shorter than the warm-up");
    try {
        out.prediction = free_run(model, region);
    } catch (const DivergenceError&) {
        out.diverged = true;
        return out;
    }
    Neumaier acc;
    for (std::size_t s = 0; s < out.prediction.length(); ++s) {
        auto pred = out.prediction.states(s);
        auto truth = region.states(warm + s);
        for (std::size_t c = 0; c < e.n_states; ++c) {
            const double d = pred[c] - truth[c];
            acc.add(d * d);
        }
    }
    out.mse = acc.value() / static_cast<double>(out.prediction.length() * e.n_states);
    if (!std::isfinite(out.mse)) {
        out.mse = std::numeric_limits<double>::infinity();
        out.diverged = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Experiments

ExperimentConfig ExperimentConfig::defaults(SystemId system) {
    ExperimentConfig c;
    c.system = system;
    c.recipe = ModelRecipe::preset(system);
    c.truth.system = system;
    if (system == SystemId::MM) {
        c.variants = {Variant::GB1, Variant::BB};
        c.sizes = {100, 250, 500};
        c.replications = 5;
        c.epochs = 100;
        c.adam.step_size = 1e-2;
        c.signal = StepSignal::mm_defaults(0);
    } else {
        c.variants = {Variant::GB1, Variant::GB2, Variant::BB};
        c.sizes = {250, 500};
        c.replications = 3;
        c.epochs = 1000;
        c.signal = StepSignal::bioreactor_defaults(0);
    }
    return c;
}

TimeSeries simulate_dataset(const ExperimentConfig& config, bool full_state) {
    TruthModel truth = config.truth;
    truth.system = config.system;
    StepSignal sig = config.signal;
    if (sig.seed == 0) sig.seed = config.data_seed();
    const auto u = make_step_signal(sig);
    const auto x0 = default_initial_state(truth);
    TimeSeries series = integrate_truth(truth, x0, u, sig.ts, config.substeps);
    return full_state ? series : series.without_hidden();
}

double median(std::vector<double> values) {
    std::erase_if(values, [](double v) { return std::isnan(v); });
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    const double a = values[n / 2 - 1], b = values[n / 2];
    if (std::isinf(a) || std::isinf(b)) return std::isinf(a) ? a : b;
    return 0.5 * (a + b);
}

const CellSummary& ExperimentResult::cell(Variant v, std::size_t n_train) const {
    for (const auto& c : cells)
        if (c.variant == v && c.n_train == n_train) return c;
    throw ContractError("experiment: no cell for " + to_string(v) + " at " + std::to_string(n_train));
}

namespace {

RunResult execute_run(const ExperimentConfig& config, const Dataset& data, Variant variant, std::size_t n_train,
                      std::size_t replication) {
    RunResult r;
    r.system = config.system;
    r.variant = variant;
    r.n_train = n_train;
    r.replication = replication;
    r.seed = config.seed ^ static_cast<std::uint64_t>(replication);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        auto model = make_model(variant, config.recipe, data.normalizer, r.seed);
        TrainOptions opts;
        opts.epochs = config.epochs;
        opts.batch_size = config.batch_size;
        opts.adam = config.adam;
        opts.seed = r.seed;
        r.history = train_model(*model, data, n_train, opts);
        const auto val_pairs = data.validation_pairs();
        try {
            r.offline_mse = evaluate_offline(*model, data.validation_history(), val_pairs);
        } catch (const DivergenceError&) {
            r.offline_mse = std::numeric_limits<double>::infinity();
        }
        const OnlineResult online = evaluate_online(*model, data.validation_region());
        r.online_mse = online.mse;
        r.diverged = online.diverged;
        if (const auto* gb = dynamic_cast<const GreyBoxModel*>(model.get())) {
            const PhysicsModel phys = gb->physics();
            r.beta_names = phys.beta_names();
            r.beta_values = phys.beta_values();
        }
    } catch (const std::exception& err) {
        r.failed = true;
        r.error = err.what();
        r.offline_mse = std::numeric_limits<double>::infinity();
        r.online_mse = std::numeric_limits<double>::infinity();
    }
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const Dataset& data) {
    if (config.replications == 0) throw ConfigError("experiment: replications must be >= 1");
    const std::size_t available = data.train_pairs().size();
    for (std::size_t n : config.sizes)
        if (n == 0 || n > available)
            throw ConfigError("experiment: training size " + std::to_string(n) + " exceeds the " +
                              std::to_string(available) + " available pairs");

    struct Task {
        Variant variant;
        std::size_t n_train;
        std::size_t replication;
    };
    std::vector<Task> tasks;
    for (Variant v : config.variants)
        for (std::size_t n : config.sizes)
            for (std::size_t rep = 0; rep < config.replications; ++rep) tasks.push_back({v, n, rep});

    ExperimentResult result;
    result.runs.resize(tasks.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++)
            result.runs[i] = execute_run(config, data, tasks[i].variant, tasks[i].n_train, tasks[i].replication);
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(config.threads, tasks.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (Variant v : config.variants) {
        for (std::size_t n : config.sizes) {
            CellSummary cell;
            cell.variant = v;
            cell.n_train = n;
            std::vector<double> off, on;
            std::vector<std::vector<double>> betas;
            for (const auto& r : result.runs) {
                if (r.variant != v || r.n_train != n) continue;
                ++cell.runs;
                off.push_back(r.offline_mse);
                on.push_back(r.online_mse);
                if (!r.failed && !r.beta_values.empty()) {
                    cell.beta_names = r.beta_names;
                    betas.push_back(r.beta_values);
                }
            }
            cell.median_offline = median(off);
            cell.median_online = median(on);
            for (std::size_t i = 0; i < cell.beta_names.size(); ++i) {
                std::vector<double> col;
                for (const auto& b : betas) col.push_back(b[i]);
                cell.median_beta.push_back(median(col));
            }
            result.cells.push_back(std::move(cell));
        }
    }
    return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    const Dataset data = Dataset::build(simulate_dataset(config), config.recipe.embedding(), config.train_fraction);
    return run_experiment(config, data);
}

namespace {

std::string num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename T, typename F>
std::string joined(const std::vector<T>& v, F f) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ';';
        s += f(v[i]);
    }
    return s;
}

std::string run_id(const RunResult& r) {
    return to_string(r.variant) + "_n" + std::to_string(r.n_train) + "_r" + std::to_string(r.replication);
}

}  // namespace

void write_results_csv(std::ostream& out, const ExperimentConfig& config, const ExperimentResult& result) {
    out << "system,variant,n_train,replication,seed,offline_mse,online_mse,diverged,beta_names,beta_values,"
           "wall_time_s\n";
    for (const auto& r : result.runs) {
        out << to_string(r.system) << ',' << to_string(r.variant) << ',' << r.n_train << ',' << r.replication << ','
            << r.seed << ',' << num(r.offline_mse) << ',' << num(r.online_mse) << ',' << (r.diverged ? 1 : 0) << ','
            << joined(r.beta_names, [](const std::string& s) { return s; }) << ','
            << joined(r.beta_values, [](double v) { return num(v); }) << ',';
        if (config.record_timing) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3f", r.wall_time_s);
            out << buf;
        }
        out << '\n';
    }
}

void write_summary_csv(std::ostream& out, const ExperimentConfig& config, const ExperimentResult& result) {
    out << "system,variant,n_train,runs,median_offline_mse,median_online_mse,beta_names,median_beta_values\n";
    for (const auto& c : result.cells) {
        out << to_string(config.system) << ',' << to_string(c.variant) << ',' << c.n_train << ',' << c.runs << ','
            << num(c.median_offline) << ',' << num(c.median_online) << ','
            << joined(c.beta_names, [](const std::string& s) { return s; }) << ','
            << joined(c.median_beta, [](double v) { return num(v); }) << '\n';
    }
}

void write_loss_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
    out << "epoch,batch_loss,train_mse\n";
    for (const auto& e : history) out << e.epoch << ',' << num(e.batch_loss) << ',' << num(e.train_mse) << '\n';
}

void write_results(const ExperimentConfig& config, const ExperimentResult& result) {
    std::filesystem::create_directories(config.output_dir);
    const auto open = [](const std::filesystem::path& p) {
        std::ofstream f(p);
        if (!f) throw std::runtime_error("cannot write " + p.string());
        return f;
    };
    {
        auto f = open(config.output_dir / "results.csv");
        write_results_csv(f, config, result);
    }
    {
        auto f = open(config.output_dir / "summary.csv");
        write_summary_csv(f, config, result);
    }
    if (config.write_loss_histories) {
        for (const auto& r : result.runs) {
            auto f = open(config.output_dir / ("loss_" + run_id(r) + ".csv"));
            write_loss_csv(f, r.history);
        }
    }
    bool any_failed = false;
    for (const auto& r : result.runs) any_failed = any_failed || r.failed;
    if (any_failed) {
        auto f = open(config.output_dir / "failures.csv");
        f << "run,error\n";
        for (const auto& r : result.runs)
            if (r.failed) f << run_id(r) << ",\"" << r.error << "\"\n";
    }
}

}  // namespace greybox
