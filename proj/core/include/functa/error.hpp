#pragma once

#include <stdexcept>
#include <string>

namespace functa {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition of an operation was violated (bad shapes, out-of-range
/// indices, invalid arguments).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Optimisation produced a non-finite or divergent value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// File contents could not be parsed.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class VersionMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};

class DigestMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedFile : public FormatError {
 public:
  using FormatError::FormatError;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace functa
