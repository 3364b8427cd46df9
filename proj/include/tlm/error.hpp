#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tlm {

/// Failure categories. The CLI maps each one onto a process exit code.
enum class ErrorKind : std::uint8_t {
    config,      // bad arguments, unmet preconditions, malformed configuration
    divergence,  // non-finite loss during training
    io,          // unreadable / unwritable / malformed files
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& what)
        : Error(ErrorKind::config, "precondition: " + what) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error(ErrorKind::io, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class DivergenceError : public Error {
public:
    DivergenceError(std::int64_t step, const std::string& what)
        : Error(ErrorKind::divergence, "divergence at step " + std::to_string(step) + ": " + what),
          step_(step) {}
    std::int64_t step() const noexcept { return step_; }

private:
    std::int64_t step_;
};

}  // namespace tlm
