#include "videograph/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "videograph/kernels.hpp"

namespace videograph::ops {
namespace {

using kernels::GemmShape;

std::vector<double> copy_mask(Mask m) { return {m.begin(), m.end()}; }

bool live(const std::vector<double>& mask, std::size_t i) { return mask.empty() || mask[i] != 0.0; }

void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

struct BatchView {
  std::size_t batch, rows, cols;
};

BatchView batch_view(const Tensor& t, const char* what) {
  if (t.rank() == 2) return {1, t.dim(0), t.dim(1)};
  if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
  throw DimensionError(std::string(what) + ": expected rank 2 or 3, got " + shape_str(t.shape()));
}

template <typename Fn>
Var unary(const char* name, Var a, Fn&& forward_derivative) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  Tensor dydx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto [v, d] = forward_derivative(x[i]);
    y[i] = v;
    dydx[i] = d;
  }
  return a.tape->record(name, std::move(y), {a}, [a, dydx = std::move(dydx)](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dydx[i];
  });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (bv.rank() != 2 || av.cols() != bv.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree: " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.dim(1);
  Shape out_shape = av.shape();
  out_shape.back() = n;
  Tensor c(out_shape);
  kernels::gemm({m, n, k, false, false}, av.data().data(), bv.data().data(), c.data().data(), false);
  return a.tape->record("matmul", std::move(c), {a, b}, [a, b, m, n, k](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a)) {
      kernels::gemm({m, k, n, false, true}, g.data().data(), t.value(b).data().data(), t.grad(a).data().data(),
                    true);
    }
    if (t.needs_grad(b)) {
      kernels::gemm({k, n, m, true, false}, t.value(a).data().data(), g.data().data(), t.grad(b).data().data(),
                    true);
    }
  });
}

Var bmm(Var a, Var b, bool trans_b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != bv.rank()) {
    throw DimensionError("bmm: rank mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  }
  const BatchView va = batch_view(av, "bmm");
  const BatchView vb = batch_view(bv, "bmm");
  const std::size_t inner_b = trans_b ? vb.cols : vb.rows;
  if (va.batch != vb.batch || va.cols != inner_b) {
    throw DimensionError("bmm: incompatible operands " + shape_str(av.shape()) + (trans_b ? " x T" : " x ") +
                         shape_str(bv.shape()));
  }
  const std::size_t batch = va.batch, m = va.rows, k = va.cols, n = trans_b ? vb.rows : vb.cols;
  Tensor c(av.rank() == 2 ? Shape{m, n} : Shape{batch, m, n});
  kernels::batched_gemm(batch, {m, n, k, false, trans_b}, av.data().data(), m * k, bv.data().data(), k * n,
                        c.data().data(), m * n, false);
  return a.tape->record("bmm", std::move(c), {a, b},
                        [a, b, batch, m, n, k, trans_b](Tape& t, std::uint32_t self) {
                          const double* g = t.grad(self).data().data();
                          const double* A = t.value(a).data().data();
                          const double* B = t.value(b).data().data();
                          if (t.needs_grad(a)) {
                            // dA = G op(B)^T
                            kernels::batched_gemm(batch, {m, k, n, false, !trans_b}, g, m * n, B, k * n,
                                                  t.grad(a).data().data(), m * k, true);
                          }
                          if (t.needs_grad(b)) {
                            if (trans_b) {  // dB = G^T A  -> [n x k]
                              kernels::batched_gemm(batch, {n, k, m, true, false}, g, m * n, A, m * k,
                                                    t.grad(b).data().data(), n * k, true);
                            } else {  // dB = A^T G -> [k x n]
                              kernels::batched_gemm(batch, {k, n, m, true, false}, A, m * k, g, m * n,
                                                    t.grad(b).data().data(), k * n, true);
                            }
                          }
                        });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  require_rank(x, 2, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor y({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y(j, i) = x(i, j);
  return a.tape->record("transpose", std::move(y), {a}, [a, m, n](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga(i, j) += g(j, i);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  add_into(y, b.value());
  return a.tape->record("add", std::move(y), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a)) add_into(t.grad(a), g);
    if (t.needs_grad(b)) add_into(t.grad(b), g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return a.tape->record("sub", std::move(y), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a)) add_into(t.grad(a), g);
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return a.tape->record("mul", std::move(y), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad(a);
      const Tensor& bv = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad(b);
      const Tensor& av = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double c) {
  Tensor y = a.value();
  for (double& v : y.storage()) v *= c;
  return a.tape->record("scale", std::move(y), {a}, [a, c](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var mul_const(Var a, const Tensor& c) {
  require_same_shape(a.value(), c, "mul_const");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= c[i];
  return a.tape->record("mul_const", std::move(y), {a}, [a, c](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c[i];
  });
}

Var add_bias(Var a, Var bias) {
  const Tensor& x = a.value();
  const Tensor& bv = bias.value();
  const std::size_t d = x.cols();
  if (bv.size() != d) {
    throw DimensionError("add_bias: bias " + shape_str(bv.shape()) + " does not match " + shape_str(x.shape()));
  }
  Tensor y = x;
  const std::size_t rows = x.rows();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) y[r * d + j] += bv[j];
  return a.tape->record("add_bias", std::move(y), {a, bias}, [a, bias, rows, d](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a)) add_into(t.grad(a), g);
    if (t.needs_grad(bias)) {
      Tensor& gb = t.grad(bias);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
    }
  });
}

Var add_rows(Var a, Var rows) {
  const Tensor& x = a.value();
  const Tensor& r = rows.value();
  require_rank(x, 3, "add_rows");
  const std::size_t B = x.dim(0), n = x.dim(1), d = x.dim(2);
  require_shape(r, {B, d}, "add_rows");
  Tensor y = x;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) y(b, i, j) += r(b, j);
  return a.tape->record("add_rows", std::move(y), {a, rows}, [a, rows, B, n, d](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a)) add_into(t.grad(a), g);
    if (t.needs_grad(rows)) {
      Tensor& gr = t.grad(rows);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gr(b, j) += g(b, i, j);
    }
  });
}

Var elu(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  kernels::elu(x.data().data(), y.data().data(), x.size(), kEluAlpha);
  return a.tape->record("elu", std::move(y), {a}, [a](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (x[i] > 0.0 ? 1.0 : y[i] + kEluAlpha);
  });
}

Var relu(Var a) {
  return unary("relu", a, [](double v) { return std::pair{v > 0.0 ? v : 0.0, v > 0.0 ? 1.0 : 0.0}; });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, [](double v) {
    const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return std::pair{s, s * (1.0 - s)};
  });
}

Var row_softmax(Var a, double scale, Mask col_mask) {
  if (!(scale > 0.0)) throw DomainError("row_softmax: scale must be positive, got " + std::to_string(scale));
  const Tensor& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  if (!col_mask.empty() && col_mask.size() != cols) {
    throw DimensionError("row_softmax: mask length " + std::to_string(col_mask.size()) + " vs " +
                         std::to_string(cols) + " columns");
  }
  Tensor y(x.shape());
  kernels::row_softmax(x.data().data(), y.data().data(), rows, cols, scale,
                       col_mask.empty() ? nullptr : col_mask.data());
  return a.tape->record("row_softmax", std::move(y), {a}, [a, rows, cols, scale](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(a);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[r * cols + j] * y[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        ga[r * cols + j] += scale * y[r * cols + j] * (g[r * cols + j] - dot);
      }
    }
  });
}

Var activate(Var a, Activation act) {
  switch (act) {
    case Activation::identity:
      return a;
    case Activation::elu:
      return elu(a);
    case Activation::relu:
      return relu(a);
    case Activation::sigmoid:
      return sigmoid(a);
    case Activation::softmax_rows:
      return row_softmax(a, 1.0);
  }
  return a;
}

Var mean_rows(Var a) {
  const Tensor& x = a.value();
  const BatchView v = batch_view(x, "mean_rows");
  Tensor y(x.rank() == 2 ? Shape{1, v.cols} : Shape{v.batch, v.cols});
  const double inv = 1.0 / static_cast<double>(v.rows);
  for (std::size_t b = 0; b < v.batch; ++b)
    for (std::size_t i = 0; i < v.rows; ++i)
      for (std::size_t j = 0; j < v.cols; ++j) y[b * v.cols + j] += x[(b * v.rows + i) * v.cols + j] * inv;
  return a.tape->record("mean_rows", std::move(y), {a}, [a, v, inv](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t b = 0; b < v.batch; ++b)
      for (std::size_t i = 0; i < v.rows; ++i)
        for (std::size_t j = 0; j < v.cols; ++j) ga[(b * v.rows + i) * v.cols + j] += g[b * v.cols + j] * inv;
  });
}

Var sum(Var a) {
  return a.tape->record("sum", Tensor::scalar(a.value().sum()), {a}, [a](Tape& t, std::uint32_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(a).storage()) v += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var dot_const(Var a, const Tensor& w) {
  require_same_shape(a.value(), w, "dot_const");
  double s = 0.0;
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w[i];
  return a.tape->record("dot_const", Tensor::scalar(s), {a}, [a, w](Tape& t, std::uint32_t self) {
    const double g = t.grad(self)[0];
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * w[i];
  });
}

Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return a.tape->record("reshape", std::move(y), {a}, [a](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var concat(std::span<const Var> xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  if (axis > 1) throw DimensionError("concat: axis must be 0 or 1");
  Tape* tape = xs.front().tape;
  const std::size_t off_axis = 1 - axis;
  const std::size_t fixed = xs.front().value().dim(off_axis);
  std::size_t total = 0;
  for (const Var& v : xs) {
    require_rank(v.value(), 2, "concat");
    if (v.value().dim(off_axis) != fixed) {
      throw DimensionError("concat: inconsistent off-axis shapes " + shape_str(xs.front().shape()) + " vs " +
                           shape_str(v.shape()));
    }
    total += v.value().dim(axis);
  }
  Tensor y(axis == 0 ? Shape{total, fixed} : Shape{fixed, total});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& v : xs) {
    const Tensor& x = v.value();
    offsets.push_back(off);
    for (std::size_t i = 0; i < x.dim(0); ++i)
      for (std::size_t j = 0; j < x.dim(1); ++j) {
        if (axis == 0)
          y(off + i, j) = x(i, j);
        else
          y(i, off + j) = x(i, j);
      }
    off += x.dim(axis);
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return tape->record("concat", std::move(y), xs, [inputs, offsets, axis](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (!t.needs_grad(inputs[k])) continue;
      Tensor& gx = t.grad(inputs[k]);
      const std::size_t off = offsets[k];
      for (std::size_t i = 0; i < gx.dim(0); ++i)
        for (std::size_t j = 0; j < gx.dim(1); ++j) gx(i, j) += axis == 0 ? g(off + i, j) : g(i, off + j);
    }
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& x = a.value();
  require_rank(x, 2, "gather_rows");
  const std::size_t d = x.dim(1);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Tensor y({idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= x.dim(0)) throw DimensionError("gather_rows: index out of range");
    for (std::size_t j = 0; j < d; ++j) y(r, j) = x(idx[r], j);
  }
  return a.tape->record("gather_rows", std::move(y), {a}, [a, idx, d](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) ga(idx[r], j) += g(r, j);
  });
}

Var l2_normalize_rows(Var a, double eps) {
  const Tensor& x = a.value();
  const std::size_t rows = x.rows(), d = x.cols();
  Tensor y(x.shape());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x[r * d + j] * x[r * d + j];
    norms[r] = std::sqrt(s);
    const double den = std::max(norms[r], eps);
    for (std::size_t j = 0; j < d; ++j) y[r * d + j] = x[r * d + j] / den;
  }
  return a.tape->record("l2_normalize_rows", std::move(y), {a},
                        [a, norms = std::move(norms), rows, d, eps](Tape& t, std::uint32_t self) {
                          const Tensor& g = t.grad(self);
                          const Tensor& y = t.value(self);
                          Tensor& ga = t.grad(a);
                          for (std::size_t r = 0; r < rows; ++r) {
                            if (norms[r] <= eps) {
                              for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += g[r * d + j] / eps;
                              continue;
                            }
                            double dot = 0.0;
                            for (std::size_t j = 0; j < d; ++j) dot += g[r * d + j] * y[r * d + j];
                            for (std::size_t j = 0; j < d; ++j) {
                              ga[r * d + j] += (g[r * d + j] - y[r * d + j] * dot) / norms[r];
                            }
                          }
                        });
}

Var node_norm(Var a, Var gamma, Var beta, Mask row_mask, double eps) {
  const Tensor& x = a.value();
  const std::size_t rows = x.rows(), d = x.cols();
  if (gamma.value().size() != d || beta.value().size() != d) {
    throw DimensionError("node_norm: scale/shift width does not match " + shape_str(x.shape()));
  }
  if (!row_mask.empty() && row_mask.size() != rows) {
    throw DimensionError("node_norm: mask length " + std::to_string(row_mask.size()) + " vs " +
                         std::to_string(rows) + " rows");
  }
  std::vector<double> mask = copy_mask(row_mask);
  double count = 0.0;
  for (std::size_t r = 0; r < rows; ++r) count += live(mask, r) ? 1.0 : 0.0;
  if (count == 0.0) throw DomainError("node_norm: no valid rows");
  std::vector<double> mu(d, 0.0), inv_std(d, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!live(mask, r)) continue;
    for (std::size_t j = 0; j < d; ++j) mu[j] += x[r * d + j];
  }
  for (double& m : mu) m /= count;
  for (std::size_t j = 0; j < d; ++j) {
    double var = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      if (!live(mask, r)) continue;
      const double c = x[r * d + j] - mu[j];
      var += c * c;
    }
    inv_std[j] = 1.0 / std::sqrt(var / count + eps);
  }
  Tensor xhat(x.shape());
  Tensor y(x.shape());
  const Tensor& gm = gamma.value();
  const Tensor& bt = beta.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (x[r * d + j] - mu[j]) * inv_std[j];
      y[r * d + j] = gm[j] * xhat[r * d + j] + bt[j];
    }
  return a.tape->record(
      "node_norm", std::move(y), {a, gamma, beta},
      [a, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), mask = std::move(mask), rows, d,
       count](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad(self);
        if (t.needs_grad(gamma) || t.needs_grad(beta)) {
          Tensor& gg = t.grad(gamma);
          Tensor& gb = t.grad(beta);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) {
              gg[j] += g[r * d + j] * xhat[r * d + j];
              gb[j] += g[r * d + j];
            }
        }
        if (!t.needs_grad(a)) return;
        const Tensor& gm = t.value(gamma);
        Tensor& ga = t.grad(a);
        for (std::size_t j = 0; j < d; ++j) {
          double sg = 0.0, sgx = 0.0;
          for (std::size_t r = 0; r < rows; ++r) {
            const double gh = g[r * d + j] * gm[j];
            sg += gh;
            sgx += gh * xhat[r * d + j];
          }
          for (std::size_t r = 0; r < rows; ++r) {
            const double gh = g[r * d + j] * gm[j];
            double v = gh;
            if (live(mask, r)) v -= (sg + xhat[r * d + j] * sgx) / count;
            ga[r * d + j] += v * inv_std[j];
          }
        }
      });
}

Var sym_normalize(Var adj) {
  const Tensor& x = adj.value();
  const BatchView v = batch_view(x, "sym_normalize");
  if (v.rows != v.cols) throw DimensionError("sym_normalize: adjacency must be square, got " + shape_str(x.shape()));
  for (double e : x.storage()) {
    if (e < 0.0) throw DomainError("graph adjacency has a negative entry (" + std::to_string(e) + ")");
  }
  const std::size_t B = v.batch, n = v.rows;
  Tensor y(x.shape());
  std::vector<double> degree(B * n);
  kernels::sym_normalize(x.data().data(), y.data().data(), degree.data(), B, n);
  return adj.tape->record("sym_normalize", std::move(y), {adj},
                          [adj, degree = std::move(degree), B, n](Tape& t, std::uint32_t self) {
                            const Tensor& g = t.grad(self);
                            const Tensor& y = t.value(self);
                            Tensor& ga = t.grad(adj);
                            std::vector<double> gd(n);
                            for (std::size_t b = 0; b < B; ++b) {
                              const std::size_t off = b * n * n;
                              const double* deg = degree.data() + b * n;
                              std::fill(gd.begin(), gd.end(), 0.0);
                              for (std::size_t i = 0; i < n; ++i)
                                for (std::size_t j = 0; j < n; ++j) {
                                  const double gy = g[off + i * n + j] * y[off + i * n + j];
                                  gd[i] += gy;
                                  gd[j] += gy;
                                }
                              for (std::size_t i = 0; i < n; ++i) gd[i] *= -0.5 / deg[i];
                              for (std::size_t i = 0; i < n; ++i)
                                for (std::size_t j = 0; j < n; ++j) {
                                  ga[off + i * n + j] +=
                                      g[off + i * n + j] / std::sqrt(deg[i] * deg[j]) + gd[i];
                                }
                            }
                          });
}

Var graph_conv(Var x, Var adj, Var weight, Activation act, bool normalize) {
  const Tensor& xv = x.value();
  const Tensor& av = adj.value();
  const BatchView vx = batch_view(xv, "graph_conv");
  const BatchView va = batch_view(av, "graph_conv");
  if (xv.rank() != av.rank() || va.batch != vx.batch || va.rows != va.cols || va.rows != vx.rows) {
    throw DimensionError("graph_conv: adjacency " + shape_str(av.shape()) + " does not match features " +
                         shape_str(xv.shape()));
  }
  Var h = matmul(x, weight);
  Var out;
  if (normalize) {
    out = bmm(sym_normalize(adj), h);
  } else {
    for (double e : av.storage()) {
      if (e < 0.0) throw DomainError("graph adjacency has a negative entry (" + std::to_string(e) + ")");
    }
    out = add(bmm(adj, h), h);
  }
  return activate(out, act);
}

Var cosine_affinity(Var x, Var wa, Var wb) {
  Var p = l2_normalize_rows(matmul(x, wa));
  Var q = l2_normalize_rows(matmul(x, wb));
  return bmm(p, q, true);
}

Var clamp_row_normalize(Var a, double floor, Mask col_mask) {
  const Tensor& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  if (!col_mask.empty() && col_mask.size() != cols) throw DimensionError("clamp_row_normalize: mask length");
  std::vector<double> mask = copy_mask(col_mask);
  Tensor y(x.shape());
  std::vector<double> sums(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double c = live(mask, j) ? std::max(x[r * cols + j], floor) : 0.0;
      y[r * cols + j] = c;
      sums[r] += c;
    }
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] /= sums[r];
  }
  return a.tape->record("clamp_row_normalize", std::move(y), {a},
                        [a, mask = std::move(mask), sums = std::move(sums), rows, cols, floor](Tape& t,
                                                                                              std::uint32_t self) {
                          const Tensor& g = t.grad(self);
                          const Tensor& y = t.value(self);
                          const Tensor& x = t.value(a);
                          Tensor& ga = t.grad(a);
                          for (std::size_t r = 0; r < rows; ++r) {
                            double dot = 0.0;
                            for (std::size_t j = 0; j < cols; ++j) dot += g[r * cols + j] * y[r * cols + j];
                            for (std::size_t j = 0; j < cols; ++j) {
                              if (!live(mask, j) || x[r * cols + j] <= floor) continue;
                              ga[r * cols + j] += (g[r * cols + j] - dot) / sums[r];
                            }
                          }
                        });
}

Var entropy_offdiag(Var adj, Mask valid) {
  const Tensor& x = adj.value();
  const BatchView v = batch_view(x, "entropy_offdiag");
  if (v.rows != v.cols) throw DimensionError("entropy_offdiag: adjacency must be square");
  std::vector<double> mask = copy_mask(valid);
  const bool batched = x.rank() == 3;
  if (!mask.empty() && mask.size() != (batched ? v.batch : v.rows)) {
    throw DimensionError("entropy_offdiag: mask length does not match " + shape_str(x.shape()));
  }
  const std::size_t n = v.rows;
  auto included = [mask, batched](std::size_t b, std::size_t i, std::size_t j) {
    if (i == j) return false;
    if (batched) return live(mask, b);
    return live(mask, i) && live(mask, j);
  };
  double h = 0.0;
  for (std::size_t b = 0; b < v.batch; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (!included(b, i, j)) continue;
        const double e = x[(b * n + i) * n + j];
        if (!(e > 0.0)) throw DomainError("entropy_offdiag: nonpositive adjacency entry " + std::to_string(e));
        h -= e * std::log(e);
      }
  return adj.tape->record("entropy_offdiag", Tensor::scalar(h), {adj},
                          [adj, v, n, included](Tape& t, std::uint32_t self) {
                            const double g = t.grad(self)[0];
                            const Tensor& x = t.value(adj);
                            Tensor& ga = t.grad(adj);
                            for (std::size_t b = 0; b < v.batch; ++b)
                              for (std::size_t i = 0; i < n; ++i)
                                for (std::size_t j = 0; j < n; ++j) {
                                  if (!included(b, i, j)) continue;
                                  const std::size_t k = (b * n + i) * n + j;
                                  ga[k] -= g * (std::log(x[k]) + 1.0);
                                }
                          });
}

}  // namespace videograph::ops
