#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace greybox {

/// Violated precondition on an API call (length mismatch, bad range, ...).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dimension mismatch inside a network; the message names the layer.
class ShapeError : public ContractError {
public:
    ShapeError(const std::string& what, std::size_t layer)
        : ContractError(what), layer_(layer) {}
    std::size_t layer() const noexcept { return layer_; }

private:
    std::size_t layer_;
};

/// Non-finite value reached where a finite one is required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Not enough history to build a delay embedding at the requested time.
class ColdStartError : public std::runtime_error {
public:
    ColdStartError(const std::string& what, double earliest_time)
        : std::runtime_error(what), earliest_time_(earliest_time) {}
    /// First timestamp at which the embedding becomes available.
    double earliest_time() const noexcept { return earliest_time_; }

private:
    double earliest_time_;
};

/// A predictor produced non-finite or runaway values.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, std::int64_t step, int stage = -1)
        : std::runtime_error(what), step_(step), stage_(stage) {}
    std::int64_t step() const noexcept { return step_; }
    /// RK stage (1..4) where the blow-up was detected, -1 when not stage-specific.
    int stage() const noexcept { return stage_; }

private:
    std::int64_t step_;
    int stage_;
};

class TrainingFailure : public std::runtime_error {
public:
    TrainingFailure(const std::string& what, std::size_t epoch)
        : std::runtime_error(what), epoch_(epoch) {}
    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

/// Malformed or unknown configuration content.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace greybox
