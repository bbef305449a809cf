#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fsl {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or matrix shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Violated precondition of an API contract.
class ContractError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value observed in strict mode.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public IoError {
 public:
  using IoError::IoError;
};

class FormatVersionError : public IoError {
 public:
  using IoError::IoError;
};

class TruncatedFileError : public IoError {
 public:
  using IoError::IoError;
};

/// Pre-training diverged; carries the epoch at which the loss went non-finite.
class TrainingError : public NumericError {
 public:
  TrainingError(std::size_t epoch, const std::string& what)
      : NumericError(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class AdaptationError : public NumericError {
 public:
  using NumericError::NumericError;
};

class DegenerateFitError : public Error {
 public:
  using Error::Error;
};

}  // namespace fsl
