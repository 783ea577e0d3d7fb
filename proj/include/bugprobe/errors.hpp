#pragma once

#include <stdexcept>
#include <string>

namespace bugprobe {

// Bad user-supplied configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / serialization failure (CLI exit code 3).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller violated an API contract (stepping a done episode, sampling an
// under-filled buffer, reading a gated label, ...).
struct UsageError : std::logic_error {
    explicit UsageError(const std::string& msg) : std::logic_error(msg) {}
};

// Bad input data (out-of-range index, malformed record).
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value escaped a numeric kernel; carries diagnostics.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace bugprobe
