#pragma once

#include <stdexcept>
#include <string>

namespace emograph {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A hyperparameter or configuration value is out of its domain.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// softmax_rows was asked to normalize a row with no unmasked entry.
class DegenerateRowError : public Error {
 public:
  DegenerateRowError(std::size_t row)
      : Error("softmax_rows: row " + std::to_string(row) + " is fully masked"),
        row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Malformed input data (corpus lines, graph JSON, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File-system failures.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, std::size_t step, double loss)
      : Error("training diverged at epoch " + std::to_string(epoch) + ", step " +
              std::to_string(step) + " (loss=" + std::to_string(loss) + ")"),
        epoch_(epoch),
        step_(step) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t epoch_;
  std::size_t step_;
};

}  // namespace emograph
