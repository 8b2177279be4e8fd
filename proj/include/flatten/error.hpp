#pragma once

#include <stdexcept>
#include <string>

namespace flatten {

/// Base class for every error raised by the library. The CLI maps any
/// `Error` to exit status 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents (bad magic tag, bad JSON schema).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Unreadable/unwritable path or truncated payload.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Data that parses but violates an invariant (e.g. non-finite flow).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Caller passed arguments outside the operation's precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Coordinates or timesteps outside the domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent configuration, e.g. an injection cache that does not fit.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for its inputs (no valid pixels, zero divisor).
class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace flatten
