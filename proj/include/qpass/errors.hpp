#pragma once

#include <stdexcept>
#include <string>

namespace qpass {

/// Bad input data or configuration (CSV/JSON parse failures, violated invariants).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Geometry that cannot produce a valid pass (unreachable peak elevation, bad altitude).
class InvalidGeometry : public std::runtime_error {
public:
    explicit InvalidGeometry(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical routine could not finish (fit divergence, histogram without a peak).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Security-bound inputs that are mutually inconsistent (delta magnitude above 1).
class InvalidParams : public std::runtime_error {
public:
    explicit InvalidParams(const std::string& what) : std::runtime_error(what) {}
};

/// One-time-pad key store has fewer unspent bytes than the message needs.
class KeyExhausted : public std::runtime_error {
public:
    explicit KeyExhausted(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace qpass
