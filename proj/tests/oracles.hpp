#pragma once

// Slow reference implementations for the evaluation pipeline. Shared by the
// unit tests and the acceptance binary.

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "videograph/tensor.hpp"

namespace vgoracle {

struct KtsResult {
  double objective = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> starts;
  double runner_up = std::numeric_limits<double>::infinity();  // best objective of any other partition
};

// Enumerates every partition with parts >= min_length (or the whole signal
// when it is shorter than that) and at most max_segments parts.
inline KtsResult kts_exhaustive(const videograph::Tensor& x, std::size_t max_segments, double penalty,
                                std::size_t min_length) {
  const std::size_t T = x.rank() == 1 ? x.size() : x.dim(0);
  const std::size_t d = x.rank() == 1 ? 1 : x.dim(1);
  std::vector<double> cost((T + 1) * (T + 1), 0.0);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = i + 1; j <= T; ++j) {
      double c = 0;
      for (std::size_t k = 0; k < d; ++k) {
        double m = 0;
        for (std::size_t t = i; t < j; ++t) m += x[t * d + k];
        m /= static_cast<double>(j - i);
        for (std::size_t t = i; t < j; ++t) c += (x[t * d + k] - m) * (x[t * d + k] - m);
      }
      cost[i * (T + 1) + j] = c;
    }
  }
  KtsResult best;
  if (T < 2 * min_length || max_segments == 1) {
    best.objective = cost[T] + penalty;
    best.starts = {0};
    return best;
  }
  std::vector<std::size_t> cur;
  std::function<void(std::size_t, double)> rec = [&](std::size_t at, double acc) {
    if (cur.size() > max_segments) return;
    if (at == T) {
      const double v = acc + penalty * static_cast<double>(cur.size());
      if (v < best.objective) {
        best.runner_up = best.objective;
        best.objective = v;
        best.starts = cur;
      } else if (v < best.runner_up) {
        best.runner_up = v;
      }
      return;
    }
    for (std::size_t end = at + min_length; end <= T; ++end) {
      if (T - end != 0 && T - end < min_length) continue;
      cur.push_back(at);
      rec(end, acc + cost[at * (T + 1) + end]);
      cur.pop_back();
    }
  };
  rec(0, 0.0);
  return best;
}

struct KnapsackResult {
  double value = -1;
  std::vector<std::size_t> items;
};

// All 2^k subsets; among optimal ones (within tol) keeps the subset that
// includes the lowest differing index.
inline KnapsackResult knapsack_bruteforce(const std::vector<double>& values, const std::vector<std::size_t>& weights,
                                          std::size_t budget, double tol = 1e-9) {
  const std::size_t k = values.size();
  std::vector<std::pair<double, std::uint32_t>> feasible;
  double best = -1;
  for (std::uint32_t mask = 0; mask < (1u << k); ++mask) {
    double v = 0;
    std::size_t w = 0;
    for (std::size_t i = 0; i < k; ++i)
      if (mask >> i & 1u) {
        v += values[i];
        w += weights[i];
      }
    if (w > budget) continue;
    feasible.emplace_back(v, mask);
    best = std::max(best, v);
  }
  // Lowest index first: compare bit-reversed masks.
  auto key = [k](std::uint32_t m) {
    std::uint32_t r = 0;
    for (std::size_t i = 0; i < k; ++i)
      if (m >> i & 1u) r |= 1u << (k - 1 - i);
    return r;
  };
  std::uint32_t chosen = 0;
  bool have = false;
  for (auto [v, m] : feasible) {
    if (v < best - tol) continue;
    if (!have || key(m) > key(chosen)) {
      chosen = m;
      have = true;
    }
  }
  KnapsackResult r;
  r.value = best;
  for (std::size_t i = 0; i < k; ++i)
    if (chosen >> i & 1u) r.items.push_back(i);
  return r;
}

// O(n^2) tau-b from concordant / discordant pair counts.
inline double kendall_pairs(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double c = 0, dis = 0, ta = 0, tb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0) ta += 1;
      if (db == 0) tb += 1;
      if (da * db > 0) c += 1;
      if (da * db < 0) dis += 1;
    }
  }
  const double n0 = static_cast<double>(n) * static_cast<double>(n - 1) / 2;
  return (c - dis) / std::sqrt((n0 - ta) * (n0 - tb));
}

inline std::vector<double> ranks_by_counting(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double v : x) {
      less += v < x[i];
      equal += v == x[i];
    }
    r[i] = less + (equal + 1) / 2;
  }
  return r;
}

inline double spearman_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks_by_counting(a), rb = ranks_by_counting(b);
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sa += ra[i];
    sb += rb[i];
  }
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - sa / n) * (rb[i] - sb / n);
    va += (ra[i] - sa / n) * (ra[i] - sa / n);
    vb += (rb[i] - sb / n) * (rb[i] - sb / n);
  }
  return cov / std::sqrt(va * vb);
}

struct Prf {
  double p = 0, r = 0, f = 0;
};

// Packs the vectors into 64-bit words and counts with popcount.
inline Prf prf_bits(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt) {
  std::vector<std::uint64_t> wp((pred.size() + 63) / 64, 0), wg(wp.size(), 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i]) wp[i / 64] |= std::uint64_t{1} << (i % 64);
    if (gt[i]) wg[i / 64] |= std::uint64_t{1} << (i % 64);
  }
  double np = 0, ng = 0, both = 0;
  for (std::size_t w = 0; w < wp.size(); ++w) {
    np += std::popcount(wp[w]);
    ng += std::popcount(wg[w]);
    both += std::popcount(wp[w] & wg[w]);
  }
  Prf out;
  out.p = np > 0 ? both / np : 0;
  out.r = ng > 0 ? both / ng : 0;
  out.f = out.p + out.r > 0 ? 2 * out.p * out.r / (out.p + out.r) : 0;
  return out;
}

}  // namespace vgoracle
