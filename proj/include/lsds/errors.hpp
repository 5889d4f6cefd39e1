#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lsds {

// Shape mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite value produced or consumed by an operation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A metric that has no defined value for the given inputs (e.g. ROC-AUC with a
// single class present).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Validation failure while reading a data file. Carries the file and the
// 1-based line number (0 when the failure is not tied to a line).
class LoadError : public std::runtime_error {
 public:
  LoadError(std::string file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class IntegrationDiverged : public NumericError {
 public:
  explicit IntegrationDiverged(double time)
      : NumericError("integration diverged: non-finite state at t=" +
                     std::to_string(time)),
        time_(time) {}

  double time() const { return time_; }

 private:
  double time_;
};

}  // namespace lsds
