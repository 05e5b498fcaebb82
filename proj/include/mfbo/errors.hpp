#pragma once

#include <stdexcept>
#include <string>

namespace mfbo {

/// Raised when a caller breaks a documented precondition (dimension
/// mismatch, invalid fidelity level, malformed configuration values).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a covariance matrix cannot be factorized even after the
/// jitter escalation schedule has been exhausted.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double last_jitter)
      : std::runtime_error(what), last_jitter_(last_jitter) {}

  double last_jitter() const noexcept { return last_jitter_; }

 private:
  double last_jitter_;
};

/// Configuration or problem-definition file could not be parsed or
/// validated.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An objective evaluator (built-in or external command) failed.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mfbo
