#pragma once

#include <stdexcept>
#include <string>

namespace latentdr {

/// Shapes of two operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A hyperparameter or construction argument is out of its legal range.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data violates a documented precondition (e.g. a label row that is
/// not a probability vector).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Batch too small for a sample-mixing operator.
class BatchSizeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An internal invariant does not hold (e.g. stepping a parameter with no
/// gradient buffer).
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A metric is undefined for the given input (no same-class pair, N < 2).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// NaN or Inf appeared during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace latentdr
