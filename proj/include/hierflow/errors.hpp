#pragma once

#include <stdexcept>
#include <string>

namespace hierflow {

// Shape disagreement between tensors or between a tensor and a config.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violated API contract (non-scalar loss, missing gradient, ...).
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration value. Maps to exit code 2 in the CLI.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data. Maps to exit code 3.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numeric failure during training (NaN loss). Maps to exit code 4.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace hierflow
