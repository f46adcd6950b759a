#pragma once

#include <stdexcept>
#include <string>

namespace eirl {

/// Root of the library's exception hierarchy. Each subclass maps to one CLI exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mismatched dimensions or otherwise inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation (beta <= 0, empty episode set, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Non-finite quantities or solver breakdown.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Input data that contradicts the model (bad trajectory, malformed file).
class ValidationError : public Error {
public:
    using Error::Error;
};

class ParseError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Every hypothesis assigns zero probability to the observed evidence.
class DegenerateEvidenceError : public NumericError {
public:
    using NumericError::NumericError;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

}  // namespace eirl
