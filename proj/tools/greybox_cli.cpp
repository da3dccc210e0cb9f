#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "greybox/config.hpp"
#include "greybox/errors.hpp"

using namespace greybox;

namespace {

struct Options {
    std::string config;
    std::string out;
    std::string system;
    std::optional<std::uint64_t> seed;
    bool full_state = false;
    bool quiet = false;
};

enum Exit { kOk = 0, kConfigError = 1, kRuntimeError = 2 };

AppConfig resolve(const Options& opt) {
    AppConfig cfg;
    if (!opt.config.empty()) {
        cfg = load_config(opt.config);
        if (!opt.system.empty() && parse_system(opt.system) != cfg.experiment.system)
            throw ConfigError("--system " + opt.system + " contradicts the config file");
    } else {
        cfg = default_config(opt.system.empty() ? SystemId::MM : parse_system(opt.system));
    }
    if (opt.seed) cfg.experiment.seed = *opt.seed;
    if (!opt.out.empty()) cfg.experiment.output_dir = opt.out;
    if (opt.full_state) cfg.full_state = true;
    return cfg;
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
}

void write_sidecar(const AppConfig& cfg, const std::string& command) {
    auto f = open_out(cfg.experiment.output_dir / (command + "_config.toml"));
    f << "# resolved configuration of `" << command << "`\n";
    write_config(f, cfg);
}

void prepare_output(const AppConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.experiment.output_dir, ec);
    if (ec) throw std::runtime_error("cannot create " + cfg.experiment.output_dir.string() + ": " + ec.message());
}

TimeSeries load_series(const AppConfig& cfg) {
    if (cfg.dataset.empty()) return cfg.simulate(false);
    std::ifstream in(cfg.dataset);
    if (!in) throw std::runtime_error("cannot open dataset " + cfg.dataset.string());
    return read_csv(in, system_layout(cfg.experiment.system));
}

int cmd_simulate(const AppConfig& cfg, bool quiet) {
    prepare_output(cfg);
    const TimeSeries full = cfg.simulate(true);
    {
        auto f = open_out(cfg.experiment.output_dir / "dataset.csv");
        write_csv(f, full, false);
    }
    if (cfg.full_state) {
        auto f = open_out(cfg.experiment.output_dir / "dataset_full.csv");
        write_csv(f, full, true);
    }
    write_sidecar(cfg, "simulate");
    if (!quiet)
        std::printf("simulated %zu samples of %s (signal seed %llu) into %s\n", full.length(),
                    to_string(cfg.experiment.system).c_str(), static_cast<unsigned long long>(cfg.signal_seed()),
                    cfg.experiment.output_dir.string().c_str());
    return kOk;
}

int cmd_train(const AppConfig& cfg, bool quiet) {
    prepare_output(cfg);
    const auto& ex = cfg.experiment;
    const Dataset data = Dataset::build(load_series(cfg), ex.recipe.embedding(), ex.train_fraction);
    auto model = make_model(cfg.variant, ex.recipe, data.normalizer, ex.seed);
    TrainOptions opts;
    opts.epochs = ex.epochs;
    opts.batch_size = ex.batch_size;
    opts.adam = ex.adam;
    opts.seed = ex.seed;
    const auto history = train_model(*model, data, cfg.n_train, opts);
    {
        auto f = open_out(ex.output_dir / "model.txt");
        save_model(f, *model);
    }
    {
        auto f = open_out(ex.output_dir / "loss.csv");
        write_loss_csv(f, history);
    }
    write_sidecar(cfg, "train");
    if (!quiet) {
        std::printf("trained %s on %zu pairs for %zu epochs", to_string(cfg.variant).c_str(), cfg.n_train, ex.epochs);
        if (!history.empty()) std::printf(", final training MSE %.6g", history.back().train_mse);
        std::printf("\n");
        if (const auto* gb = dynamic_cast<const GreyBoxModel*>(model.get())) {
            const auto phys = gb->physics();
            const auto names = phys.beta_names();
            const auto values = phys.beta_values();
            for (std::size_t i = 0; i < names.size(); ++i) std::printf("  %s = %.6g\n", names[i].c_str(), values[i]);
        }
    }
    return kOk;
}

int cmd_evaluate(const AppConfig& cfg, bool quiet) {
    prepare_output(cfg);
    const auto& ex = cfg.experiment;
    const auto model_path = cfg.model_file.empty() ? ex.output_dir / "model.txt" : cfg.model_file;
    std::ifstream in(model_path);
    if (!in) throw std::runtime_error("cannot open model file " + model_path.string());
    const auto model = load_model(in);

    Dataset data = Dataset::build(load_series(cfg), model->embedding(), ex.train_fraction);
    if (const auto* gb = dynamic_cast<const GreyBoxModel*>(model.get())) data.normalizer = gb->normalizer();
    if (const auto* bb = dynamic_cast<const BlackBoxModel*>(model.get())) data.normalizer = bb->normalizer();
    data.normalized = data.normalizer.normalize(data.raw);

    std::vector<std::int64_t> pairs;
    OnlineResult online;
    double offline = 0.0;
    if (cfg.region == "train") {
        pairs = data.train_pairs();
        if (cfg.n_train > pairs.size()) throw ConfigError("train.n_train exceeds the available training pairs");
        pairs.resize(cfg.n_train);
        offline = evaluate_offline(*model, data.train_history(), pairs);
        online = evaluate_online(*model, data.train_region());
    } else if (cfg.region == "all") {
        const auto& e = model->embedding();
        for (std::size_t k = e.warmup_samples() - 1; k + 1 < data.normalized.length(); ++k)
            pairs.push_back(static_cast<std::int64_t>(k));
        offline = evaluate_offline(*model, HistoryBuffer::from_series(data.normalized, 0, data.normalized.length()),
                                   pairs);
        online = evaluate_online(*model, data.normalized);
    } else {
        pairs = data.validation_pairs();
        offline = evaluate_offline(*model, data.validation_history(), pairs);
        online = evaluate_online(*model, data.validation_region());
    }
    {
        auto f = open_out(ex.output_dir / "metrics.csv");
        char a[32], b[32];
        std::snprintf(a, sizeof a, "%.17g", offline);
        std::snprintf(b, sizeof b, "%.17g", online.mse);
        f << "region,n_pairs,offline_mse,online_mse,diverged\n"
          << cfg.region << ',' << pairs.size() << ',' << a << ',' << (online.diverged ? "inf" : b) << ','
          << (online.diverged ? 1 : 0) << '\n';
    }
    write_sidecar(cfg, "evaluate");
    if (!quiet)
        std::printf("%s region: off-line MSE %.6g, on-line MSE %.6g%s\n", cfg.region.c_str(), offline, online.mse,
                    online.diverged ? " (diverged)" : "");
    return kOk;
}

int cmd_experiment(const AppConfig& cfg, bool quiet) {
    prepare_output(cfg);
    const auto& ex = cfg.experiment;
    const Dataset data = Dataset::build(load_series(cfg), ex.recipe.embedding(), ex.train_fraction);
    const ExperimentResult result = run_experiment(ex, data);
    write_results(ex, result);
    write_sidecar(cfg, "experiment");
    std::size_t failed = 0;
    for (const auto& r : result.runs) {
        if (!r.failed) continue;
        ++failed;
        std::fprintf(stderr, "run %s n=%zu rep=%zu failed: %s\n", to_string(r.variant).c_str(), r.n_train,
                     r.replication, r.error.c_str());
    }
    if (!quiet) {
        for (const auto& c : result.cells)
            std::printf("%-4s n=%-5zu median off-line %.4g  on-line %.4g\n", to_string(c.variant).c_str(), c.n_train,
                        c.median_offline, c.median_online);
        std::printf("%zu runs, %zu failed; results in %s\n", result.runs.size(), failed,
                    ex.output_dir.string().c_str());
    }
    return failed == 0 ? kOk : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Grey-box system identification: simulate, train, evaluate and sweep RK4 grey-box models"};
    app.footer(config_reference());
    app.require_subcommand(1);
    app.fallthrough();

    Options opt;
    std::uint64_t seed = 0;
    app.add_option("--config", opt.config, "config file")->check(CLI::ExistingFile);
    app.add_option("--out", opt.out, "output directory (overrides experiment.output_dir)");
    app.add_option("--system", opt.system, "mm or bioreactor when no config file is given");
    auto* seed_opt = app.add_option("--seed", seed, "top-level seed (overrides experiment.seed)");
    app.add_flag("--full-state", opt.full_state, "simulate: also write hidden states");
    app.add_flag("--quiet", opt.quiet, "no progress output");

    auto* sim = app.add_subcommand("simulate", "write dataset.csv from the truth model");
    auto* train = app.add_subcommand("train", "train one model, write model.txt and loss.csv");
    auto* eval = app.add_subcommand("evaluate", "off-line and on-line error of a model file, write metrics.csv");
    auto* exp = app.add_subcommand("experiment", "sweep variants x sizes x replications, write results.csv");
    for (auto* sub : {sim, train, eval, exp}) sub->footer(config_reference());

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }
    if (seed_opt->count() > 0) opt.seed = seed;

    AppConfig cfg;
    try {
        cfg = resolve(opt);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    }

    try {
        if (sim->parsed()) return cmd_simulate(cfg, opt.quiet);
        if (train->parsed()) return cmd_train(cfg, opt.quiet);
        if (eval->parsed()) return cmd_evaluate(cfg, opt.quiet);
        return cmd_experiment(cfg, opt.quiet);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kRuntimeError;
    }
}
