#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "videograph/grad_suite.hpp"
#include "videograph/gradcheck.hpp"
#include "videograph/kernels.hpp"
#include "videograph/ops.hpp"

using namespace videograph;
using vgtest::max_abs_diff;
using vgtest::random_tensor;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j)
      for (std::size_t k = 0; k < a.dim(1); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

}  // namespace

TEST(Tensor, ShapeAndErrors) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rows(), 6u);
  EXPECT_EQ(t.cols(), 4u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor({1, 1, 1, 1}), DimensionError);
  EXPECT_THROW(t.reshaped({5, 5}), DimensionError);
  Tensor bad({2}, std::vector<double>{1.0, std::nan("")});
  EXPECT_FALSE(bad.all_finite());
}

TEST(Kernels, ParallelMatchesSerial) {
  std::mt19937_64 rng(3);
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      kernels::GemmShape s{37, 29, 41, ta, tb};
      Tensor a = random_tensor(rng, {3, 37 * 41});
      Tensor b = random_tensor(rng, {3, 41 * 29});
      Tensor c1({3, 37 * 29}), c2({3, 37 * 29});
      kernels::batched_gemm(3, s, a.data().data(), 37 * 41, b.data().data(), 41 * 29, c1.data().data(), 37 * 29,
                            false);
      kernels::serial::batched_gemm(3, s, a.data().data(), 37 * 41, b.data().data(), 41 * 29, c2.data().data(),
                                    37 * 29, false);
      EXPECT_EQ(c1, c2);
    }
  }
  Tensor x = random_tensor(rng, {64, 64}, 0.0, 1.0);
  Tensor y1({64, 64}), y2({64, 64}), d1({64}), d2({64});
  kernels::row_softmax(x.data().data(), y1.data().data(), 64, 64, 3.0, nullptr);
  kernels::serial::row_softmax(x.data().data(), y2.data().data(), 64, 64, 3.0, nullptr);
  EXPECT_EQ(y1, y2);
  kernels::sym_normalize(x.data().data(), y1.data().data(), d1.data().data(), 1, 64);
  kernels::serial::sym_normalize(x.data().data(), y2.data().data(), d2.data().data(), 1, 64);
  EXPECT_LE(max_abs_diff(y1, y2), 1e-14);  // reference uses a different but equivalent formula
  kernels::elu(x.data().data(), y1.data().data(), x.size(), 1.0);
  kernels::serial::elu(x.data().data(), y2.data().data(), x.size(), 1.0);
  EXPECT_EQ(y1, y2);
}

TEST(Matmul, Examples) {
  Tape tape;
  Var a = tape.constant(Tensor::identity(2));
  Var b = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  EXPECT_EQ(ops::matmul(a, b).value(), Tensor::from_rows({{1, 2}, {3, 4}}));
  Var r = ops::matmul(tape.constant(Tensor::from_rows({{1, 0}})), tape.constant(Tensor::from_rows({{2}, {5}})));
  EXPECT_EQ(r.value(), Tensor::from_rows({{2}}));

  std::mt19937_64 rng(11);
  Tensor x = random_tensor(rng, {3, 4}), y = random_tensor(rng, {4, 2});
  EXPECT_LE(max_abs_diff(ops::matmul(tape.constant(x), tape.constant(y)).value(), naive_matmul(x, y)), 1e-12);

  try {
    ops::matmul(tape.constant(x), tape.constant(x));
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[3x4]"), std::string::npos) << e.what();
  }
}

TEST(RowSoftmax, Examples) {
  Tape tape;
  Var eq = ops::row_softmax(tape.constant(Tensor::row({2, 2, 2, 2})), 7.0);
  for (double v : eq.value().storage()) EXPECT_NEAR(v, 0.25, 1e-15);
  Var s = ops::row_softmax(tape.constant(Tensor::row({0.0, std::log(3.0)})), 1.0);
  EXPECT_NEAR(s.value()[0], 0.25, 1e-12);
  EXPECT_NEAR(s.value()[1], 0.75, 1e-12);
  Var big = ops::row_softmax(tape.constant(Tensor::row({1, 2})), 1000.0);
  EXPECT_LT(big.value()[0], 1e-300 + 1e-12);
  EXPECT_NEAR(big.value()[1], 1.0, 1e-12);
  EXPECT_THROW(ops::row_softmax(tape.constant(Tensor::row({1, 2})), 0.0), DomainError);

  std::mt19937_64 rng(5);
  Tensor x = random_tensor(rng, {6, 9}, -3, 3);
  for (double scale : {0.01, 1.0, 30.0}) {
    Tensor y = ops::row_softmax(tape.constant(x), scale).value();
    for (std::size_t i = 0; i < 6; ++i) {
      double sum = 0.0;
      std::size_t am_x = 0, am_y = 0;
      for (std::size_t j = 0; j < 9; ++j) {
        sum += y(i, j);
        if (x(i, j) > x(i, am_x)) am_x = j;
        if (y(i, j) > y(i, am_y)) am_y = j;
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
      EXPECT_EQ(am_x, am_y);
    }
  }
}

TEST(GraphConv, Examples) {
  std::mt19937_64 rng(2);
  Tape tape;
  Tensor x = random_tensor(rng, {3, 4});
  Parameter w("w", random_tensor(rng, {4, 2}));
  Var out = ops::graph_conv(tape.constant(x), tape.constant(Tensor({3, 3})), tape.param(w),
                            ops::Activation::identity);
  EXPECT_LE(max_abs_diff(out.value(), naive_matmul(x, w.value)), 1e-12);

  // n = 2, A = [[0,1],[1,0]]: A + I = ones, D = 2I, so every row is (x1 + x2) / 2.
  Tensor x2 = Tensor::from_rows({{1, 2}, {5, -4}});
  Var two = ops::graph_conv(tape.constant(x2), tape.constant(Tensor::from_rows({{0, 1}, {1, 0}})),
                            tape.constant(Tensor::identity(2)), ops::Activation::identity);
  EXPECT_LE(max_abs_diff(two.value(), Tensor::from_rows({{3, -1}, {3, -1}})), 1e-12);

  // Permutation equivariance.
  Tensor adj = random_tensor(rng, {3, 3}, 0, 1);
  const std::size_t perm[] = {2, 0, 1};
  Tensor xp({3, 4}), ap({3, 3});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) xp(i, j) = x(perm[i], j);
    for (std::size_t j = 0; j < 3; ++j) ap(i, j) = adj(perm[i], perm[j]);
  }
  Tensor y = ops::graph_conv(tape.constant(x), tape.constant(adj), tape.param(w), ops::Activation::elu).value();
  Tensor yp = ops::graph_conv(tape.constant(xp), tape.constant(ap), tape.param(w), ops::Activation::elu).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(yp(i, j), y(perm[i], j), 1e-12);

  Tensor neg = adj;
  neg(0, 1) = -0.1;
  EXPECT_THROW(ops::graph_conv(tape.constant(x), tape.constant(neg), tape.param(w), ops::Activation::identity),
               DomainError);
}

TEST(CosineAffinity, Examples) {
  Tape tape;
  Var id = tape.constant(Tensor::identity(3));
  Var same = ops::cosine_affinity(tape.constant(Tensor::from_rows({{0.6, 0.8, 0}, {0.6, 0.8, 0}})), id, id);
  for (double v : same.value().storage()) EXPECT_NEAR(v, 1.0, 1e-12);
  Var orth = ops::cosine_affinity(tape.constant(Tensor::identity(3)), id, id);
  EXPECT_LE(max_abs_diff(orth.value(), Tensor::identity(3)), 1e-12);
  Var zero = ops::cosine_affinity(tape.constant(Tensor({2, 3})), id, id);
  EXPECT_TRUE(zero.value().all_finite());

  std::mt19937_64 rng(8);
  Tensor x = random_tensor(rng, {4, 3});
  Tensor wa = random_tensor(rng, {3, 5}), wb = random_tensor(rng, {3, 5});
  Tensor pa = naive_matmul(x, wa), pb = naive_matmul(x, wb);
  Tensor c = ops::cosine_affinity(tape.constant(x), tape.constant(wa), tape.constant(wb)).value();
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t k = 0; k < 5; ++k) {
        dot += pa(i, k) * pb(j, k);
        na += pa(i, k) * pa(i, k);
        nb += pb(j, k) * pb(j, k);
      }
      EXPECT_NEAR(c(i, j), dot / std::sqrt(na * nb), 1e-12);
      EXPECT_LE(std::abs(c(i, j)), 1.0 + 1e-9);
    }
  }
  Tensor sym = ops::cosine_affinity(tape.constant(x), tape.constant(wa), tape.constant(wa)).value();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(sym(i, j), sym(j, i), 1e-15);
}

TEST(Activations, Examples) {
  Tape tape;
  Var e = ops::elu(tape.constant(Tensor::row({0.0, -1e6, 2.0})));
  EXPECT_EQ(e.value()[0], 0.0);
  EXPECT_NEAR(e.value()[1], -1.0, 1e-12);
  EXPECT_EQ(e.value()[2], 2.0);
  EXPECT_EQ(ops::relu(tape.constant(Tensor::row({-5.0}))).value()[0], 0.0);

  Tensor rows = Tensor::from_rows({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
  EXPECT_EQ(ops::mean_rows(tape.constant(rows)).value(), Tensor::from_rows({{1, 2, 3}}));

  const Var parts[] = {tape.constant(Tensor({2, 3})), tape.constant(Tensor({3, 3}))};
  EXPECT_THROW(ops::concat(parts, 1), DimensionError);
  EXPECT_EQ(ops::concat(parts, 0).value().shape(), (Shape{5, 3}));

  std::mt19937_64 rng(4);
  Tensor x = random_tensor(rng, {7, 5}, -2, 3);
  Parameter g("g", Tensor({1, 5}, 1.0)), b("b", Tensor({1, 5}, 0.0));
  Tensor y = ops::node_norm(tape.constant(x), tape.param(g), tape.param(b)).value();
  for (std::size_t j = 0; j < 5; ++j) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 7; ++i) m += y(i, j) / 7;
    for (std::size_t i = 0; i < 7; ++i) v += (y(i, j) - m) * (y(i, j) - m) / 7;
    EXPECT_NEAR(m, 0.0, 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-4);  // eps in the denominator shifts the variance slightly
  }
}

TEST(GradCheck, Examples) {
  std::mt19937_64 rng(1);
  Tensor x = random_tensor(rng, {3, 4});
  Parameter w("w", random_tensor(rng, {4, 2}));
  auto rep = gradient_check([&](Tape& t) { return ops::sum(ops::matmul(t.constant(x), t.param(w))); }, {&w});
  EXPECT_LE(rep.max_rel_error, 1e-8);
  Tape tape;
  tape.backward(ops::sum(ops::matmul(tape.constant(x), tape.param(w))));
  w.zero_grad();
  tape.flush_param_grads();
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(w.grad(k, j), x(0, k) + x(1, k) + x(2, k), 1e-12);

  auto constant = gradient_check([&](Tape& t) { return t.constant(Tensor::scalar(3.0)); }, {&w});
  EXPECT_EQ(constant.max_rel_error, 0.0);

  EXPECT_THROW(gradient_check([&](Tape& t) { return t.param(w); }, {&w}, 1e-2), DomainError);

  auto nan = gradient_check(
      [&](Tape& t) { return ops::sum(ops::scale(t.param(w), std::nan(""))); }, {&w});
  EXPECT_FALSE(nan.ok(1e-4));
  EXPECT_NE(nan.failure.find("scale"), std::string::npos) << nan.failure;
}

// ---- finite-difference checks for every differentiable op ----

class OpGradients : public ::testing::TestWithParam<int> {};

TEST_P(OpGradients, AllOps) {
  for (const auto& c : op_gradient_cases(static_cast<std::uint64_t>(GetParam()), 1e-5, 1e-4)) {
    EXPECT_TRUE(c.passed) << c.name << ": rel " << c.report.max_rel_error << " at " << c.report.worst_param << "["
                          << c.report.worst_index << "] " << c.report.failure;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradients, ::testing::Range(0, 10));

TEST(OpGradients, InjectedFaultIsCaught) {
  GradSuiteOptions o;
  o.op_seeds = 1;
  o.model = false;
  o.inject_fault = true;
  const auto r = run_gradient_suite(o);
  EXPECT_FALSE(r.passed());
  std::size_t failed = 0;
  for (const auto& c : r.cases) {
    if (c.passed) continue;
    ++failed;
    EXPECT_EQ(c.name.rfind("faulty_double", 0), 0u) << c.name;
    EXPECT_NEAR(c.report.max_rel_error, 0.01, 2e-3);
  }
  EXPECT_EQ(failed, 1u);
  o.inject_fault = false;
  EXPECT_TRUE(run_gradient_suite(o).passed());
}
