#pragma once

#include <stdexcept>
#include <string>

namespace peftcl {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// dimension / shape mismatches between tensors
struct ShapeError : Error {
    using Error::Error;
};

// NaN/Inf inputs, zero-norm queries, etc.
struct NumericError : Error {
    using Error::Error;
};

// invalid configuration values or constraint violations
struct ConfigError : Error {
    using Error::Error;
};

// API contract violations (non-scalar loss, double backward, masked label, ...)
struct ContractError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace peftcl
