#pragma once

#include <stdexcept>
#include <string>

namespace gateadapt {

/// 6D rotation input whose columns cannot be orthogonalized.
struct DegenerateInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// FOV-constrained trajectory sampling gave up after too many rejections.
struct TrajectoryInfeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A tape may drive exactly one backward pass.
struct TapeConsumed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigInvalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataEmpty : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Every sampled fine-tuning pair failed to decode; training cannot proceed.
struct AllPairsDegenerate : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Metric component the evaluator refuses to report (roll/pitch).
struct UnsupportedMetric : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gateadapt
