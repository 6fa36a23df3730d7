#pragma once

#include <stdexcept>
#include <string>

namespace imwa {

// Invalid configuration, shape mismatch, or contract violation detected
// before or while wiring a run together.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced a non-finite quantity; the run cannot continue.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data (CSV rows, label sets, ...).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable or corrupt on-disk artifact (checkpoints, results files).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace imwa
