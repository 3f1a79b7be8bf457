#pragma once

#include <stdexcept>
#include <string>

namespace opfenv {

// Configuration or input-document problems. The CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : ConfigError {
    using ConfigError::ConfigError;
};

struct ValidationError : ConfigError {
    using ConfigError::ConfigError;
};

// Runtime failures.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotConverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeMismatch : std::logic_error {
    using std::logic_error::logic_error;
};

// Non-finite network parameters during training. The CLI maps this to exit code 3.
struct DivergenceDetected : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace opfenv
