#pragma once

#include <random>

#include "videograph/tensor.hpp"

namespace vgtest {

inline videograph::Tensor random_tensor(std::mt19937_64& rng, videograph::Shape shape, double lo = -1.0,
                                        double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  videograph::Tensor t(std::move(shape));
  for (double& v : t.storage()) v = dist(rng);
  return t;
}

inline double max_abs_diff(const videograph::Tensor& a, const videograph::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace vgtest
