#pragma once

#include <cstddef>
#include <span>

namespace somnus {

/// Differentiable log density over an unconstrained real vector.
class LogDensity {
 public:
  virtual ~LogDensity() = default;
  virtual std::size_t dim() const = 0;
  /// Returns log p(x) and writes its gradient into `grad`. A non-finite return
  /// value marks `x` as outside the support.
  virtual double log_density_gradient(std::span<const double> x, std::span<double> grad) const = 0;
};

}  // namespace somnus
