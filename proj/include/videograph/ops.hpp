#pragma once

#include <span>
#include <vector>

#include "videograph/autodiff.hpp"

// Differentiable operations. Every op records its forward value and a
// backward closure on the tape of its operands.
//
// Rank conventions: "matrix" ops take [n x d]; their batched forms take
// [B x n x d] and act on each of the B leading blocks independently.
// Masks are 0/1 vectors; an empty span means "everything valid".

namespace videograph::ops {

enum class Activation { identity, elu, relu, sigmoid, softmax_rows };

inline constexpr double kEluAlpha = 1.0;
inline constexpr double kNormEps = 1e-5;
inline constexpr double kCosineEps = 1e-8;
inline constexpr double kLogFloor = 1e-12;

using Mask = std::span<const double>;

/// [.. x k] * [k x n]; leading axes of `a` are folded into rows.
Var matmul(Var a, Var b);
/// Batched product; rank-2 operands are treated as a batch of one.
/// With trans_b, `b` is [B x n x k] and the product is a * b^T.
Var bmm(Var a, Var b, bool trans_b = false);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var mul_const(Var a, const Tensor& c);
/// Adds a [1 x d] (or [d]) row to every row of a.
Var add_bias(Var a, Var bias);
/// a: [B x n x d], rows: [B x d]; adds rows[b] to each row of block b.
Var add_rows(Var a, Var rows);

Var elu(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var activate(Var a, Activation act);

/// Softmax along the last axis of scale * a with max-subtraction.
Var row_softmax(Var a, double scale, Mask col_mask = {});

/// [n x d] -> [1 x d]; [B x n x d] -> [B x d].
Var mean_rows(Var a);
Var sum(Var a);
Var mean(Var a);
/// Sum of a * w for a constant weight tensor of the same shape.
Var dot_const(Var a, const Tensor& w);

Var reshape(Var a, Shape shape);
/// Concatenation of rank-2 tensors along axis 0 or 1.
Var concat(std::span<const Var> xs, std::size_t axis);
Var gather_rows(Var a, std::span<const std::size_t> rows);

/// Each row divided by max(||row||, eps).
Var l2_normalize_rows(Var a, double eps = kCosineEps);

/// Per-channel standardization over all rows (leading axes folded), then
/// gamma * xhat + beta. Statistics use only rows with row_mask == 1.
Var node_norm(Var a, Var gamma, Var beta, Mask row_mask = {}, double eps = kNormEps);

/// D^{-1/2} (A + I) D^{-1/2} with D the row sums of A + I.
Var sym_normalize(Var adj);

/// act(D^{-1/2} (A + I) D^{-1/2} X W); with normalize=false uses (A + I) X W.
Var graph_conv(Var x, Var adj, Var weight, Activation act, bool normalize = true);

/// Cosine of the angle between rows of x*wa and rows of x*wb.
Var cosine_affinity(Var x, Var wa, Var wb);

/// max(a, floor) on live columns (masked columns become 0), then each row
/// divided by its sum.
Var clamp_row_normalize(Var a, double floor, Mask col_mask = {});

/// -sum_{i != j} a_ij log a_ij. For rank 3 `valid` masks the batch axis; for
/// rank 2 it masks both row and column indices.
Var entropy_offdiag(Var adj, Mask valid = {});

}  // namespace videograph::ops
