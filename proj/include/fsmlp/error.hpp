#pragma once

#include <stdexcept>
#include <string>

namespace fsmlp {

// Error hierarchy. The CLI maps these onto process exit codes:
// ConfigError -> 1, DataError -> 2, NumericError -> 3.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer shape disagreements.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf detection, division guards, training divergence.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Malformed or missing input data (CSV parsing, splits).
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// Bad configuration: unknown keys, invalid values, inconsistent settings.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Checkpoint and report file I/O problems.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace fsmlp
