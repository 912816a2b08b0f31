#pragma once

#include <stdexcept>
#include <string>

namespace ipatch {

/// Invalid configuration or arguments. The CLI maps this to exit code 2;
/// every other exception is a runtime failure (exit code 1).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or unusable input data (CSV parse failures, missing files).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ipatch
