#pragma once

#include <cstddef>

// Dense compute kernels behind the differentiable ops. The top-level
// namespace holds the OpenMP versions; `serial` holds straightforward
// single-threaded references used by tests and the benchmark.
//
// Parallel kernels split work over independent output rows only, so results
// do not depend on the thread count.

namespace videograph::kernels {

struct GemmShape {
  std::size_t m = 0;  // rows of op(A) and C
  std::size_t n = 0;  // cols of op(B) and C
  std::size_t k = 0;  // inner extent
  bool trans_a = false;
  bool trans_b = false;
};

/// C[b] = op(A[b]) * op(B[b]) (or += when accumulate). A stride of 0 shares
/// that operand across the batch.
void batched_gemm(std::size_t batch, const GemmShape& s, const double* a, std::size_t stride_a, const double* b,
                  std::size_t stride_b, double* c, std::size_t stride_c, bool accumulate);

inline void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate) {
  batched_gemm(1, s, a, 0, b, 0, c, 0, accumulate);
}

/// Softmax over each row of scale*x. `col_mask` (length cols, nullable)
/// zeroes masked columns and excludes them from the normalizer.
void row_softmax(const double* x, double* y, std::size_t rows, std::size_t cols, double scale,
                 const double* col_mask);

/// D^{-1/2} (A + I) D^{-1/2} for `batch` square n x n blocks; writes the
/// per-row degrees of A + I into `degree` (batch * n).
void sym_normalize(const double* adj, double* out, double* degree, std::size_t batch, std::size_t n);

void elu(const double* x, double* y, std::size_t count, double alpha);

/// Number of threads the parallel kernels will use.
int max_threads();
/// Caps parallelism; values < 1 are ignored.
void set_max_threads(int threads);

namespace serial {

void batched_gemm(std::size_t batch, const GemmShape& s, const double* a, std::size_t stride_a, const double* b,
                  std::size_t stride_b, double* c, std::size_t stride_c, bool accumulate);
void row_softmax(const double* x, double* y, std::size_t rows, std::size_t cols, double scale,
                 const double* col_mask);
void sym_normalize(const double* adj, double* out, double* degree, std::size_t batch, std::size_t n);
void elu(const double* x, double* y, std::size_t count, double alpha);

}  // namespace serial
}  // namespace videograph::kernels
