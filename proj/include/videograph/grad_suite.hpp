#pragma once

#include <string>
#include <vector>

#include "videograph/gradcheck.hpp"

namespace videograph {

struct GradSuiteOptions {
  std::size_t frames = 4;   // full-model input size
  std::size_t objects = 3;
  std::size_t op_seeds = 10;
  double eps = 1e-5;
  double tolerance = 1e-4;
  bool ops = true;
  bool model = true;
  /// Adds an op whose backward is off by 1%; the suite must catch it.
  bool inject_fault = false;
};

struct GradCase {
  std::string name;
  GradCheckReport report;
  bool passed = false;
};

struct GradSuiteResult {
  std::vector<GradCase> cases;
  double seconds = 0.0;
  bool passed() const;
};

/// Every differentiable op on random small inputs, projected to a scalar.
std::vector<GradCase> op_gradient_cases(std::uint64_t seed, double eps, double tolerance, bool inject_fault = false);

/// Whole-model loss for every query mode x loss mode on a random input.
std::vector<GradCase> model_gradient_cases(std::size_t frames, std::size_t objects, double eps, double tolerance);

GradSuiteResult run_gradient_suite(const GradSuiteOptions& options);

}  // namespace videograph
