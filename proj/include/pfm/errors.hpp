#pragma once

#include <stdexcept>
#include <string>

namespace pfm {

/// Base class for all library errors.
class error : public std::runtime_error {
public:
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration: bad option values, out-of-range settings.
class config_error : public error {
public:
    using error::error;
};

/// Malformed or inconsistent input data.
class data_error : public error {
public:
    using error::error;
};

/// Numerical failure: factorization breakdown, overflow, divergence.
class numerical_error : public error {
public:
    using error::error;
};

/// Violated call contract (caller bug): empty input, dimension mismatch.
class contract_error : public error {
public:
    using error::error;
};

/// A mixture component lost essentially all responsibility mass.
/// Recoverable: the fit driver restarts from a fresh seed.
class degenerate_component_error : public numerical_error {
public:
    using numerical_error::numerical_error;
};

}  // namespace pfm
