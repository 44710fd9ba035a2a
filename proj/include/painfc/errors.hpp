#pragma once

#include <stdexcept>
#include <string>

namespace painfc {

/// Bad argument or violated precondition.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Feature names / column layout do not match what a model or table expects.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StratificationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operation not supported by this model kind (e.g. importance of a stacking model).
struct CapabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyCohortError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// SMOTE cannot run (fewer than two minority rows).
struct ResampleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Metric with a degenerate input, e.g. AUC of a single-class label vector.
struct UndefinedMetricError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Chat-completion or embedding endpoint failure. Carries how many attempts were made.
struct TransportError : std::runtime_error {
  TransportError(const std::string& what, int attempts_made = 1)
      : std::runtime_error(what), attempts(attempts_made) {}
  int attempts;
};

}  // namespace painfc
