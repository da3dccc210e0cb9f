#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "greybox/train.hpp"

namespace greybox {

/// One parsed right-hand side of a `key = value` line.
struct ConfigValue {
    enum class Kind { String, Number, Bool, Array };
    Kind kind = Kind::String;
    std::string text;  // raw token for numbers, contents for strings
    double number = 0.0;
    bool boolean = false;
    std::vector<ConfigValue> items;
    int line = 0;
};

struct ConfigEntry {
    std::string section;
    std::string key;
    ConfigValue value;
};

/// TOML subset: [section] headers (dotted names allowed), key = value with
/// strings, numbers, booleans and (possibly multi-line) arrays, # comments.
std::vector<ConfigEntry> parse_config_entries(std::istream& in, const std::string& origin);

enum class SignalKind { Steps, Chirp };

struct ChirpSpec {
    double base = 0.01;
    double amplitude = 0.008;
    double f0 = 1.0 / 200.0;
    double f1 = 1.0 / 20.0;
    double duration = 600.0;
};

/// Everything one config file can say, resolved against the system presets.
struct AppConfig {
    ExperimentConfig experiment;
    SignalKind signal = SignalKind::Steps;
    ChirpSpec chirp;
    std::optional<std::uint64_t> data_seed;
    std::filesystem::path dataset;  // empty: simulate from the truth model
    bool full_state = false;

    Variant variant = Variant::GB1;
    std::size_t n_train = 500;

    std::filesystem::path model_file;  // empty: <out>/model.txt
    std::string region = "validation";

    /// Seed of the generated input signal.
    std::uint64_t signal_seed() const { return data_seed ? *data_seed : experiment.data_seed(); }
    /// The input sequence and the series it produces.
    std::vector<double> input_signal() const;
    TimeSeries simulate(bool keep_hidden) const;
};

/// Parses and validates a whole file before anything runs. Unknown sections
/// or keys, wrong types and out-of-range values throw ConfigError naming the
/// offending line.
AppConfig parse_config(std::istream& in, const std::string& origin = "<config>");
AppConfig load_config(const std::filesystem::path& path);
AppConfig default_config(SystemId system);

/// The resolved configuration, re-readable by parse_config.
void write_config(std::ostream& out, const AppConfig& config);

/// Human-readable list of every section and key with type and description.
std::string config_reference();

}  // namespace greybox
