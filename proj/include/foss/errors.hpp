#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace foss {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API precondition (wrong tape, non-scalar loss, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf detected in a recurrent state or a loss.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Inverse transform produced an imaginary residue above tolerance.
class SpectralConsistencyError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed scenario line; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A parsed scenario violates a data invariant; carries the scenario id.
class DataError : public Error {
 public:
  DataError(std::string id, const std::string& what)
      : Error("scenario '" + id + "': " + what), id_(std::move(id)) {}
  const std::string& scenario_id() const { return id_; }

 private:
  std::string id_;
};

/// Checkpoint container failures. Each kind is its own type so callers can
/// catch them separately.
class CheckpointError : public Error {
 public:
  using Error::Error;
};
class CheckpointMagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointDuplicateError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointMissingError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace foss
