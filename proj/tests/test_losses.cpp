#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "videograph/losses.hpp"

using namespace videograph;
using vgtest::random_tensor;

namespace {

Tensor probs_from(std::initializer_list<double> key) {
  Tensor p({key.size(), 2});
  std::size_t t = 0;
  for (double k : key) {
    p(t, 0) = 1.0 - k;
    p(t, 1) = k;
    ++t;
  }
  return p;
}

double value_of(Var v) { return v.value()[0]; }

}  // namespace

TEST(WeightedBce, HandCase) {
  Tape tape;
  const std::vector<int> labels{0, 1, 0, 0};
  Var l = weighted_bce(tape.constant(probs_from({0.5, 0.5, 0.5, 0.5})), labels);
  // (1/4)[2 ln2 + 3 (2/3) ln2]
  EXPECT_NEAR(value_of(l), std::log(2.0), 1e-12);
  EXPECT_NEAR(value_of(l), 0.6931, 1e-4);
}

TEST(WeightedBce, LimitsSymmetryAndFallback) {
  Tape tape;
  const std::vector<int> labels{0, 1, 0, 1};
  EXPECT_LE(value_of(weighted_bce(tape.constant(probs_from({0, 1, 0, 1})), labels)), 1e-6);

  std::mt19937_64 rng(2);
  Tensor k = random_tensor(rng, {4, 1}, 0.05, 0.95);
  Tensor p({4, 2}), swapped({4, 2});
  for (std::size_t t = 0; t < 4; ++t) {
    p(t, 1) = k[t];
    p(t, 0) = 1 - k[t];
    swapped(t, 0) = k[t];
    swapped(t, 1) = 1 - k[t];
  }
  const std::vector<int> flipped{1, 0, 1, 0};
  EXPECT_NEAR(value_of(weighted_bce(tape.constant(p), labels)),
              value_of(weighted_bce(tape.constant(swapped), flipped)), 1e-12);

  std::vector<std::string> warnings;
  const std::vector<int> ones{1, 1, 1, 1};
  Var all = weighted_bce(tape.constant(probs_from({0.5, 0.5, 0.5, 0.5})), ones, {}, &warnings);
  EXPECT_NEAR(value_of(all), std::log(2.0), 1e-12);
  EXPECT_EQ(warnings.size(), 1u);

  EXPECT_THROW(weighted_bce(tape.constant(p), std::vector<int>{1, 0}), DimensionError);
}

TEST(WeightedBce, MinimizedAtLabels) {
  // Gradient points back toward the labels when probabilities are perturbed off them.
  const std::vector<int> labels{1, 0, 0, 1, 0};
  Parameter logits("z", Tensor({5, 2}));
  for (std::size_t t = 0; t < 5; ++t) logits.value(t, 1) = labels[t] ? 0.2 : -0.2;
  Tape tape;
  Var probs = ops::row_softmax(tape.param(logits), 1.0);
  tape.backward(weighted_bce(probs, labels));
  logits.zero_grad();
  tape.flush_param_grads();
  for (std::size_t t = 0; t < 5; ++t) {
    if (labels[t])
      EXPECT_LT(logits.grad(t, 1), 0.0);
    else
      EXPECT_GT(logits.grad(t, 1), 0.0);
  }
}

TEST(ScoreMse, Examples) {
  const std::vector<double> gt{0.1, 0.5, 0.9};
  EXPECT_EQ(score_mse(gt, gt), 0.0);
  const std::vector<double> shifted{1.1, 1.5, 1.9};
  EXPECT_NEAR(score_mse(shifted, gt), 1.0, 1e-12);
  EXPECT_THROW(score_mse(std::vector<double>{1.0}, gt), DimensionError);

  std::mt19937_64 rng(9);
  Tensor a = random_tensor(rng, {7}), b = random_tensor(rng, {7});
  double naive = 0;
  for (std::size_t i = 0; i < 7; ++i) naive += (a[i] - b[i]) * (a[i] - b[i]) / 7;
  EXPECT_NEAR(score_mse(a.data(), b.data()), naive, 1e-12);

  Tape tape;
  Tensor p = probs_from({0.2, 0.4, 0.6});
  EXPECT_NEAR(value_of(score_mse(tape.constant(p), gt)), (0.01 + 0.01 + 0.09) / 3, 1e-12);
}

TEST(SparsityEntropy, ClosedForms) {
  Tape tape;
  Var uniform = tape.constant(Tensor({4, 4}, 0.25));
  EXPECT_NEAR(value_of(ops::entropy_offdiag(uniform)), 3.0 * std::log(4.0), 1e-9);

  // Spatial stack of T=2 uniform 3x3 graphs plus rho times the temporal term.
  Var spatial = tape.constant(Tensor({2, 3, 3}, 1.0 / 3));
  const double s = 2 * 3 * 2 * (1.0 / 3) * std::log(3.0);
  EXPECT_NEAR(value_of(sparsity_entropy(spatial, uniform, 5.0)), s + 5.0 * 3.0 * std::log(4.0), 1e-9);

  // Concentrated rows have lower entropy; near one-hot rows approach 0.
  Tensor conc({4, 4}, 0.1);
  for (std::size_t i = 0; i < 4; ++i) conc(i, (i + 1) % 4) = 0.7;
  EXPECT_LT(value_of(ops::entropy_offdiag(tape.constant(conc))), 3.0 * std::log(4.0));
  Tensor onehot({4, 4}, 1e-12);
  for (std::size_t i = 0; i < 4; ++i) onehot(i, (i + 1) % 4) = 1.0;
  EXPECT_LT(value_of(ops::entropy_offdiag(tape.constant(onehot))), 1e-9);

  EXPECT_THROW(ops::entropy_offdiag(tape.constant(Tensor({2, 2}, 0.0))), DomainError);

  // The diagonal is excluded, so uniform is the maximum only among
  // row-stochastic matrices whose diagonal is also 1/n.
  std::mt19937_64 rng(12);
  for (int i = 0; i < 100; ++i) {
    Tensor r = random_tensor(rng, {4, 4}, 0.01, 1.0);
    for (std::size_t row = 0; row < 4; ++row) {
      double sum = 0;
      for (std::size_t j = 0; j < 4; ++j) sum += j == row ? 0.0 : r(row, j);
      for (std::size_t j = 0; j < 4; ++j) r(row, j) = j == row ? 0.25 : 0.75 * r(row, j) / sum;
    }
    EXPECT_LE(value_of(ops::entropy_offdiag(tape.constant(r))), 3.0 * std::log(4.0) + 1e-12);
  }
  // Without that constraint, moving mass off the diagonal raises it (to 3/e per row at a_ij = 1/e).
  Tensor offdiag({4, 4}, 1.0 / std::exp(1.0));
  for (std::size_t i = 0; i < 4; ++i) offdiag(i, i) = 1.0 - 3.0 / std::exp(1.0);
  EXPECT_NEAR(value_of(ops::entropy_offdiag(tape.constant(offdiag))), 12.0 / std::exp(1.0), 1e-12);
  EXPECT_GT(12.0 / std::exp(1.0), 3.0 * std::log(4.0));
}

TEST(Diversity, Examples) {
  Tape tape;
  Tensor same = Tensor::from_rows({{0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}});
  EXPECT_NEAR(value_of(diversity(tape.constant(same))), 1.0, 1e-9);
  EXPECT_NEAR(value_of(diversity(tape.constant(Tensor::identity(3)))), 0.0, 1e-9);

  std::mt19937_64 rng(4);
  Tensor x = random_tensor(rng, {3, 5});
  for (auto norm : {DiversityNorm::squared, DiversityNorm::plain}) {
    const double pw = norm == DiversityNorm::squared ? 2.0 : 1.0;
    double naive = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        if (i == j) continue;
        double d = 0, ni = 0, nj = 0;
        for (std::size_t k = 0; k < 5; ++k) {
          d += x(i, k) * x(j, k);
          ni += x(i, k) * x(i, k);
          nj += x(j, k) * x(j, k);
        }
        naive += d / (std::pow(std::sqrt(ni), pw) * std::pow(std::sqrt(nj), pw)) / 6.0;
      }
    }
    EXPECT_NEAR(value_of(diversity(tape.constant(x), norm)), naive, 1e-12);
  }

  std::vector<std::string> warnings;
  EXPECT_EQ(value_of(diversity(tape.constant(Tensor({1, 3}, 1.0)), DiversityNorm::squared, &warnings)), 0.0);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_TRUE(std::isfinite(value_of(diversity(tape.constant(Tensor({3, 2}))))));
}

TEST(Reconstruction, Examples) {
  ModelConfig c;
  c.d_obj = 3;
  c.d_embed = 4;
  c.d_model = 4;
  c.heads = 2;
  c.d_head = 2;
  c.graph_hidden = 3;
  c.summary_hidden = 3;
  c.d_affinity = 3;
  c.query_mode = QueryMode::none;
  ModelParams p = init_params(c, 1);
  std::mt19937_64 rng(6);
  Tensor sel = random_tensor(rng, {2, 4});
  Tensor orig = random_tensor(rng, {2, 3});

  // Decoder that copies the original half of the concatenation.
  Tensor w({6, 3});
  for (std::size_t i = 0; i < 3; ++i) w(3 + i, i) = 1.0;
  p["recon.2.w"].value = w;
  {
    Tape tape;
    Var x = reconstruct_features(tape, p, tape.constant(sel), orig);
    EXPECT_NEAR(value_of(reconstruction_loss(x, orig)), 0.0, 1e-15);
  }
  p["recon.2.w"].value.fill(0.0);
  {
    Tape tape;
    Var x = reconstruct_features(tape, p, tape.constant(sel), orig);
    double sq = 0;
    for (double v : orig.storage()) sq += v * v;
    EXPECT_NEAR(value_of(reconstruction_loss(x, orig)), sq / 2, 1e-12);
  }
  Tape tape;
  EXPECT_THROW(reconstruct_features(tape, p, tape.constant(sel), Tensor({3, 3})), DimensionError);
  EXPECT_EQ(value_of(reconstruction_loss(tape.constant(Tensor({0, 3})), Tensor({0, 3}))), 0.0);
}

TEST(TotalLoss, Weights) {
  Tape tape;
  LossParts parts{tape.constant(Tensor::scalar(1)), tape.constant(Tensor::scalar(1)),
                  tape.constant(Tensor::scalar(1)), tape.constant(Tensor::scalar(1))};
  LossReport rep;
  EXPECT_NEAR(value_of(total_loss(parts, LossWeights::defaults(LossMode::supervised_binary), &rep)), 1.2001,
              1e-12);
  EXPECT_NEAR(rep.total, 1.2001, 1e-12);
  EXPECT_EQ(rep.components.size(), 4u);
  EXPECT_NEAR(value_of(total_loss(parts, LossWeights::defaults(LossMode::unsupervised))), 20.001, 1e-12);

  LossWeights zero = LossWeights::defaults(LossMode::supervised_score);
  zero.alpha = zero.beta = zero.gamma = 0;
  parts.classification = tape.constant(Tensor::scalar(0.37));
  EXPECT_EQ(value_of(total_loss(parts, zero)), 0.37);

  // Report total equals the weighted component sum.
  LossParts mixed{tape.constant(Tensor::scalar(0.3)), tape.constant(Tensor::scalar(7.5)),
                  tape.constant(Tensor::scalar(-0.2)), tape.constant(Tensor::scalar(2.25))};
  LossWeights w = LossWeights::defaults(LossMode::supervised_binary);
  total_loss(mixed, w, &rep);
  const auto& cm = rep.components;
  EXPECT_NEAR(rep.total,
              cm.at("classification") + w.alpha * cm.at("sparsity") + w.beta * cm.at("diversity") +
                  w.gamma * cm.at("reconstruction"),
              1e-9);

  LossParts missing = parts;
  missing.classification = {};
  EXPECT_THROW(total_loss(missing, LossWeights::defaults(LossMode::supervised_binary)), ConfigError);
  EXPECT_NO_THROW(total_loss(missing, LossWeights::defaults(LossMode::unsupervised)));
  LossWeights neg;
  neg.beta = -1;
  EXPECT_THROW(neg.validate(), ConfigError);
  EXPECT_THROW(parse_loss_mode("semi"), ConfigError);
  EXPECT_EQ(parse_loss_mode("sup-score"), LossMode::supervised_score);
}

TEST(TrainingSelection, Rules) {
  Tensor p = probs_from({0.2, 0.6, 0.4, 0.6, 0.1, 0.3, 0.3, 0.3, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2});
  // Predicted keyframes in supervised mode.
  EXPECT_EQ(training_selection(p, LossMode::supervised_binary), (std::vector<std::size_t>{1, 3}));
  // Top ceil(0.15 * 14) = 3 by probability, ties to the earlier frame.
  EXPECT_EQ(training_selection(p, LossMode::unsupervised), (std::vector<std::size_t>{1, 2, 3}));
  Tensor low = probs_from({0.2, 0.3, 0.3, 0.1});
  EXPECT_EQ(training_selection(low, LossMode::supervised_score), (std::vector<std::size_t>{1}));
  const std::vector<double> valid{1, 0, 1, 1};
  EXPECT_EQ(training_selection(low, LossMode::unsupervised, valid), (std::vector<std::size_t>{2}));

  Tensor obj({2, 2, 3});
  for (std::size_t j = 0; j < 3; ++j) {
    obj(1, 0, j) = 1.0;
    obj(1, 1, j) = 3.0;
  }
  Tensor m = frame_means(obj);
  EXPECT_EQ(m(0, 0), 0.0);
  EXPECT_EQ(m(1, 2), 2.0);
}
