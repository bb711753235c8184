#pragma once

#include <functional>
#include <string>
#include <vector>

#include "videograph/autodiff.hpp"

namespace videograph {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  /// Set when f produced a non-finite value; names the first offending op.
  std::string failure;

  bool ok(double tolerance) const { return failure.empty() && max_rel_error <= tolerance; }
};

/// Gradients below kGradCheckFloor * max(1, |f|) are compared absolutely;
/// central differences cannot resolve anything finer at double precision.
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares reverse-mode gradients of a scalar function against central
/// differences for every entry of every parameter. `f` must build its graph
/// on the tape it is given from the current parameter values.
GradCheckReport gradient_check(const std::function<Var(Tape&)>& f, const std::vector<Parameter*>& params,
                               double eps = 1e-5);

}  // namespace videograph
