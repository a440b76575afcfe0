#pragma once

#include <stdexcept>
#include <string>

namespace infoprop {

/// Invalid scenario, graph, or model configuration. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (e.g. asked for the rate of a
/// non-existent edge).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed input data (trajectory CSV, region files, series files).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The adaptive integrator could not make progress.
class IntegrationFailure : public std::runtime_error {
public:
    IntegrationFailure(const std::string& what, double t) : std::runtime_error(what), time_(t) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

} // namespace infoprop
