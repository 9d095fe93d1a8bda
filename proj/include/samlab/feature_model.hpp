#pragma once

#include <cstddef>

namespace samlab {

/// Parameters of the synthetic binary-classification distribution: one
/// robust ±1 coordinate that matches the label with probability p, plus n
/// Gaussian coordinates with mean eta*y and unit variance. Total input
/// dimension is n + 1.
struct FeatureModelSpec {
  double p = 0.9;     // robust-feature accuracy, in (0.5, 1)
  double eta = 0.1;   // non-robust feature mean scale, > 0
  std::size_t n = 10; // number of non-robust features, >= 1

  /// Throws std::invalid_argument if any field is out of range.
  void validate() const;
};

}  // namespace samlab
