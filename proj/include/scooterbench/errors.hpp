#pragma once

#include <stdexcept>
#include <string>

namespace scooterbench {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Bad configuration value or unknown key.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Inputs that are individually valid but inconsistent with each other.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Least-squares identification could not be performed.
class FitError : public Error {
public:
    using Error::Error;
};

/// Closed-loop simulation or report generation failed.
class SimulationError : public Error {
public:
    using Error::Error;
};

/// Command outside an actuator's admissible range.
class RangeError : public Error {
public:
    using Error::Error;
};

} // namespace scooterbench
