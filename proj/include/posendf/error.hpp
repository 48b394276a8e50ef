#pragma once

#include <stdexcept>
#include <string>

namespace posendf {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateQuaternion : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content (bad magic, inconsistent sizes, bad sidecar).
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedFile : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};

/// A checkpoint whose dimensions disagree with what the caller expects.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace posendf
