#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace polling {

// Malformed input: bad config text, invalid parameters, violated model invariants.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Config parse failure with a 1-based source position.
class ConfigError : public InputError {
public:
    ConfigError(std::string message, std::size_t line, std::size_t column)
        : InputError(format(message, line, column)), line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    static std::string format(const std::string& m, std::size_t line, std::size_t column) {
        return "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + m;
    }

    std::size_t line_;
    std::size_t column_;
};

// Total load rho >= 1 where the caller requires a stable system.
class UnstableError : public std::runtime_error {
public:
    UnstableError(std::string message, double rho) : std::runtime_error(std::move(message)), rho_(rho) {}
    double rho() const noexcept { return rho_; }

private:
    double rho_;
};

// The requested analysis does not cover this model (discipline, routing, order).
class UnsupportedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Iteration cap or singular system inside the exact engine.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace polling
