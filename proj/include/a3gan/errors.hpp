#pragma once

#include <stdexcept>
#include <string>

namespace a3gan {

/// Base of every error raised by the library. The CLI maps subclasses onto
/// exit codes, so new error kinds should derive from one of these.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Array shape does not satisfy an operation's contract.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Scalar argument out of its domain (negative level count, zero horizon, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Input data violates a value contract (pixel range, monotone densities, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Two pieces of configuration disagree (filter mismatch, embedder shapes, ...).
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// A pluggable component lacks a capability the caller needs.
class CapabilityError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Dataset cannot serve the request (empty age group, ...).
class DataError : public Error {
public:
    using Error::Error;
};

/// Optimization produced a non-finite loss.
class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace a3gan
