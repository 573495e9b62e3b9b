#pragma once

#include <stdexcept>
#include <string>

namespace bsn {

/// Matrix is not positive definite even after the jitter escalation ladder.
class NotPositiveDefiniteError : public std::runtime_error {
 public:
  NotPositiveDefiniteError(std::size_t pivot, double value, double jitter)
      : std::runtime_error("matrix not positive definite: pivot " + std::to_string(pivot) +
                           " = " + std::to_string(value) + " at jitter " + std::to_string(jitter)),
        pivot_index(pivot),
        pivot_value(value),
        last_jitter(jitter) {}
  std::size_t pivot_index;
  double pivot_value;
  double last_jitter;
};

class DimensionMismatchError : public std::invalid_argument {
 public:
  explicit DimensionMismatchError(const std::string& what) : std::invalid_argument(what) {}
};

/// A loss or gradient evaluation produced NaN/Inf.
class NonFiniteGradientError : public std::runtime_error {
 public:
  explicit NonFiniteGradientError(const std::string& what) : std::runtime_error(what) {}
};

/// The score function returned NaN/Inf mid-chain; carries the failing step.
class NonFiniteScoreError : public std::runtime_error {
 public:
  NonFiniteScoreError(const std::string& what, long step) : std::runtime_error(what), chain_step(step) {}
  long chain_step;
};

/// Target was constructed without a sampler but i.i.d. draws were requested.
class NoSamplerError : public std::runtime_error {
 public:
  explicit NoSamplerError(const std::string& what) : std::runtime_error(what) {}
};

/// Custom target failed its score-vs-log-density consistency check.
class InvalidTargetError : public std::runtime_error {
 public:
  explicit InvalidTargetError(const std::string& what) : std::runtime_error(what) {}
};

/// Truncation interval carries (numerically) zero probability mass.
class DegenerateIntervalError : public std::runtime_error {
 public:
  explicit DegenerateIntervalError(const std::string& what) : std::runtime_error(what) {}
};

/// Control-functional denominator is numerically zero.
class DegenerateDenominatorError : public std::runtime_error {
 public:
  explicit DegenerateDenominatorError(const std::string& what) : std::runtime_error(what) {}
};

/// Point lies outside the unit cube domain of an integrand.
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Malformed run configuration (file or flags).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bsn
