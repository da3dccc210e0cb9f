#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "greybox/embedding.hpp"
#include "greybox/nncore/adam.hpp"
#include "greybox/normalizer.hpp"
#include "greybox/physics.hpp"
#include "greybox/rkmodel.hpp"
#include "greybox/simulators.hpp"

namespace greybox {

enum class Variant { GB1, GB2, BB };
Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

/// A physical series split into one training and one validation region,
/// normalized with statistics of the training region only.
struct Dataset {
    TimeSeries raw;
    TimeSeries normalized;
    Normalizer normalizer;
    EmbeddingSpec embedding;
    std::size_t split = 0;  // first validation sample

    static Dataset build(TimeSeries raw, const EmbeddingSpec& embedding, double train_fraction = 2.0 / 3.0);

    /// (d-1)*m: samples of history that precede the first usable pair.
    std::size_t warmup() const { return embedding.warmup_samples() - 1; }
    HistoryBuffer train_history() const;
    HistoryBuffer validation_history() const;
    TimeSeries train_region() const { return normalized.segment(0, split); }
    TimeSeries validation_region() const { return normalized.segment(split, normalized.length()); }
    /// Sample indices k of supervised pairs (k -> k+1) inside a region.
    std::vector<std::int64_t> train_pairs() const;
    std::vector<std::int64_t> validation_pairs() const;
};

/// Model recipe for one system; the case-study defaults come from presets().
struct ModelRecipe {
    SystemId system = SystemId::MM;
    double tau = 10.0;
    std::size_t dimension = 5;
    double ts = 1.0;
    std::vector<std::size_t> hidden = {20, 20, 20};
    MMGreyParams mm;
    BioGreyParams bio;
    PhenomPriors priors;
    PriorComposition composition = PriorComposition::Multiplicative;
    /// Output scaling of the constitutive network per variant; empty = identity.
    std::vector<double> gb1_phi_offset, gb1_phi_scale;
    std::vector<double> gb2_phi_offset, gb2_phi_scale;

    static ModelRecipe preset(SystemId system);
    EmbeddingSpec embedding() const;
    PhysicsModel physics(Variant variant) const;
};

/// Build an initialized model. GB1/GB2/BB draw their network weights from
/// the same stream, so a given seed gives all variants identical weights
/// whenever the shapes agree.
std::unique_ptr<StepPredictor> make_model(Variant variant, const ModelRecipe& recipe, const Normalizer& normalizer,
                                          std::uint64_t seed);

struct TrainOptions {
    std::size_t epochs = 100;
    std::size_t batch_size = 50;
    nn::AdamConfig adam;
    std::uint64_t seed = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double batch_loss = 0.0;  // mean of the minibatch losses seen during the epoch
    double train_mse = 0.0;   // full pass over the training pairs after the epoch
};

/// Mini-batch Adam on the first n_train training pairs; pairs are reshuffled
/// every epoch. Throws TrainingFailure on a non-finite loss.
std::vector<EpochRecord> train_model(StepPredictor& model, const Dataset& data, std::size_t n_train,
                                     const TrainOptions& options);

/// Mean over pairs and channels of the squared normalized one-step error.
double evaluate_offline(const StepPredictor& model, const HistoryBuffer& history,
                        std::span<const std::int64_t> pairs);

struct OnlineResult {
    double mse = std::numeric_limits<double>::infinity();
    bool diverged = false;
    TimeSeries prediction;
};

/// Free run over a normalized region (its first warm-up samples seed the
/// history) and MSE against the recorded states. Divergence scores +inf.
OnlineResult evaluate_online(const StepPredictor& model, const TimeSeries& region);

struct ExperimentConfig {
    SystemId system = SystemId::MM;
    std::vector<Variant> variants = {Variant::GB1, Variant::BB};
    std::vector<std::size_t> sizes = {100, 250, 500};
    std::size_t replications = 5;
    std::size_t epochs = 100;
    std::size_t batch_size = 50;
    std::uint64_t seed = 1;
    double train_fraction = 2.0 / 3.0;
    std::size_t threads = 1;
    bool record_timing = false;
    bool write_loss_histories = true;
    std::filesystem::path output_dir = "results";
    nn::AdamConfig adam;
    ModelRecipe recipe = ModelRecipe::preset(SystemId::MM);

    // data generation
    StepSignal signal = StepSignal::mm_defaults(0);
    std::size_t substeps = 100;
    TruthModel truth;

    static ExperimentConfig defaults(SystemId system);
    std::uint64_t data_seed() const { return derive_seed(seed, 0xDA7A); }
};

/// The dataset an experiment trains on, generated from its truth model.
TimeSeries simulate_dataset(const ExperimentConfig& config, bool full_state = false);

struct RunResult {
    SystemId system = SystemId::MM;
    Variant variant = Variant::GB1;
    std::size_t n_train = 0;
    std::size_t replication = 0;
    std::uint64_t seed = 0;
    double offline_mse = std::numeric_limits<double>::quiet_NaN();
    double online_mse = std::numeric_limits<double>::quiet_NaN();
    bool diverged = false;
    bool failed = false;
    std::string error;
    std::vector<std::string> beta_names;
    std::vector<double> beta_values;
    double wall_time_s = 0.0;
    std::vector<EpochRecord> history;
};

struct CellSummary {
    Variant variant = Variant::GB1;
    std::size_t n_train = 0;
    std::size_t runs = 0;
    double median_offline = 0.0;
    double median_online = 0.0;
    std::vector<std::string> beta_names;
    std::vector<double> median_beta;
};

struct ExperimentResult {
    std::vector<RunResult> runs;
    std::vector<CellSummary> cells;

    const CellSummary& cell(Variant v, std::size_t n_train) const;
};

/// Every (variant x size x replication) run; rows come out in that order
/// regardless of threading. Run failures are recorded, never thrown.
ExperimentResult run_experiment(const ExperimentConfig& config, const Dataset& data);
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Write results.csv, summary.csv and loss_<runid>.csv files.
void write_results(const ExperimentConfig& config, const ExperimentResult& result);
void write_results_csv(std::ostream& out, const ExperimentConfig& config, const ExperimentResult& result);
void write_summary_csv(std::ostream& out, const ExperimentConfig& config, const ExperimentResult& result);
void write_loss_csv(std::ostream& out, const std::vector<EpochRecord>& history);

/// Median with +inf entries kept (they sort last); NaN entries are skipped.
double median(std::vector<double> values);

}  // namespace greybox
