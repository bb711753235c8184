#include "videograph/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace videograph::kernels {
namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1u << 14;

inline double a_at(const double* a, const GemmShape& s, std::size_t i, std::size_t p) {
  return s.trans_a ? a[p * s.m + i] : a[i * s.k + p];
}
inline double b_at(const double* b, const GemmShape& s, std::size_t p, std::size_t j) {
  return s.trans_b ? b[j * s.k + p] : b[p * s.n + j];
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

void set_max_threads(int threads) {
  if (threads >= 1) omp_set_num_threads(threads);
}

void batched_gemm(std::size_t batch, const GemmShape& s, const double* a, std::size_t stride_a, const double* b,
                  std::size_t stride_b, double* c, std::size_t stride_c, bool accumulate) {
  const std::size_t total_rows = batch * s.m;
  const bool par = batch * s.m * s.n * s.k >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(total_rows); ++r) {
    const std::size_t bi = static_cast<std::size_t>(r) / s.m;
    const std::size_t i = static_cast<std::size_t>(r) % s.m;
    const double* ab = a + bi * stride_a;
    const double* bb = b + bi * stride_b;
    double* crow = c + bi * stride_c + i * s.n;
    if (!accumulate) std::fill(crow, crow + s.n, 0.0);
    if (!s.trans_b) {
      for (std::size_t p = 0; p < s.k; ++p) {
        const double av = a_at(ab, s, i, p);
        if (av == 0.0) continue;
        const double* brow = bb + p * s.n;
        for (std::size_t j = 0; j < s.n; ++j) crow[j] += av * brow[j];
      }
    } else {
      for (std::size_t j = 0; j < s.n; ++j) {
        const double* brow = bb + j * s.k;
        double acc = 0.0;
        for (std::size_t p = 0; p < s.k; ++p) acc += a_at(ab, s, i, p) * brow[p];
        crow[j] += acc;
      }
    }
  }
}

void row_softmax(const double* x, double* y, std::size_t rows, std::size_t cols, double scale,
                 const double* col_mask) {
  const bool par = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r) {
    const double* xr = x + static_cast<std::size_t>(r) * cols;
    double* yr = y + static_cast<std::size_t>(r) * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) {
      if (col_mask && col_mask[j] == 0.0) continue;
      mx = std::max(mx, scale * xr[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (col_mask && col_mask[j] == 0.0) {
        yr[j] = 0.0;
        continue;
      }
      yr[j] = std::exp(scale * xr[j] - mx);
      z += yr[j];
    }
    if (z > 0.0) {
      for (std::size_t j = 0; j < cols; ++j) yr[j] /= z;
    }
  }
}

void sym_normalize(const double* adj, double* out, double* degree, std::size_t batch, std::size_t n) {
  const bool par = batch * n * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t bb = 0; bb < static_cast<std::ptrdiff_t>(batch); ++bb) {
    const std::size_t off = static_cast<std::size_t>(bb) * n * n;
    double* deg = degree + static_cast<std::size_t>(bb) * n;
    for (std::size_t i = 0; i < n; ++i) {
      double d = 1.0;
      for (std::size_t j = 0; j < n; ++j) d += adj[off + i * n + j];
      deg[i] = d;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double di = 1.0 / std::sqrt(deg[i]);
      for (std::size_t j = 0; j < n; ++j) {
        const double hat = adj[off + i * n + j] + (i == j ? 1.0 : 0.0);
        out[off + i * n + j] = hat * di / std::sqrt(deg[j]);
      }
    }
  }
}

void elu(const double* x, double* y, std::size_t count, double alpha) {
  const bool par = count >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
    const double v = x[i];
    y[i] = v > 0.0 ? v : alpha * std::expm1(v);
  }
}

namespace serial {

void batched_gemm(std::size_t batch, const GemmShape& s, const double* a, std::size_t stride_a, const double* b,
                  std::size_t stride_b, double* c, std::size_t stride_c, bool accumulate) {
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t i = 0; i < s.m; ++i) {
      for (std::size_t j = 0; j < s.n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < s.k; ++p) {
          acc += a_at(a + bi * stride_a, s, i, p) * b_at(b + bi * stride_b, s, p, j);
        }
        double& dst = c[bi * stride_c + i * s.n + j];
        dst = accumulate ? dst + acc : acc;
      }
    }
  }
}

void row_softmax(const double* x, double* y, std::size_t rows, std::size_t cols, double scale,
                 const double* col_mask) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) {
      if (!col_mask || col_mask[j] != 0.0) mx = std::max(mx, scale * x[r * cols + j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (!col_mask || col_mask[j] != 0.0) z += std::exp(scale * x[r * cols + j] - mx);
    }
    for (std::size_t j = 0; j < cols; ++j) {
      const bool live = !col_mask || col_mask[j] != 0.0;
      y[r * cols + j] = live && z > 0.0 ? std::exp(scale * x[r * cols + j] - mx) / z : 0.0;
    }
  }
}

void sym_normalize(const double* adj, double* out, double* degree, std::size_t batch, std::size_t n) {
  for (std::size_t bb = 0; bb < batch; ++bb) {
    const double* a = adj + bb * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      double d = 0.0;
      for (std::size_t j = 0; j < n; ++j) d += a[i * n + j] + (i == j ? 1.0 : 0.0);
      degree[bb * n + i] = d;
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double hat = a[i * n + j] + (i == j ? 1.0 : 0.0);
        out[bb * n * n + i * n + j] = hat / std::sqrt(degree[bb * n + i] * degree[bb * n + j]);
      }
    }
  }
}

void elu(const double* x, double* y, std::size_t count, double alpha) {
  for (std::size_t i = 0; i < count; ++i) y[i] = x[i] > 0.0 ? x[i] : alpha * (std::exp(x[i]) - 1.0);
}

}  // namespace serial
}  // namespace videograph::kernels
