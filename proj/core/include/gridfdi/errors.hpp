#pragma once

#include <stdexcept>
#include <string>

namespace gridfdi {

/// Violated precondition or dimension mismatch at a module boundary.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Case data file missing or malformed.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Measurement configuration does not determine all free angles.
class ObservabilityError : public std::runtime_error {
 public:
  ObservabilityError(std::string message, int unobservable_dim)
      : std::runtime_error(std::move(message)),
        unobservable_dim_(unobservable_dim) {}
  int unobservable_dim() const noexcept { return unobservable_dim_; }

 private:
  int unobservable_dim_;
};

/// H lost full column rank inside a solver.
class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Threshold calibration cannot proceed (e.g. single-class labels).
class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss/gradient or other failure inside a training loop.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wraps any error from one stage of an experiment pipeline.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error("[" + stage + "] " + what), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace gridfdi
