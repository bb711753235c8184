#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "test_util.hpp"
#include "videograph/grad_suite.hpp"
#include "videograph/gradcheck.hpp"
#include "videograph/losses.hpp"
#include "videograph/model.hpp"

using namespace videograph;
using vgtest::max_abs_diff;
using vgtest::random_tensor;

namespace {

ModelConfig tiny_config(QueryMode mode, std::size_t K = 2) {
  ModelConfig c;
  c.frames = 4;
  c.objects = 3;
  c.d_obj = 5;
  c.d_embed = 4;
  c.d_model = 4;
  c.heads = 2;
  c.d_head = 2;
  c.graph_layers = 2;
  c.graph_hidden = 3;
  c.summary_hidden = 3;
  c.d_affinity = 3;
  c.iterations = K;
  c.query_mode = mode;
  c.words = 3;
  c.captions = 2;
  c.d_word = 3;
  c.d_caption = 4;
  return c;
}

VideoInput random_input(std::mt19937_64& rng, const ModelConfig& c, QueryMode mode) {
  VideoInput in;
  in.objects = random_tensor(rng, {c.frames, c.objects, c.d_obj});
  in.query.mode = mode;
  if (mode != QueryMode::none) in.query.vectors = random_tensor(rng, {c.query_rows(), c.query_width()});
  return in;
}

// ---- plain-loop oracle of the whole forward pass ----

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t(i, j);
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat plus_bias(Mat a, const Tensor& b) {
  for (auto& r : a)
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
  return a;
}

Mat softmax_rows(Mat a, double scale) {
  for (auto& r : a) {
    double mx = -1e300, s = 0;
    for (double v : r) mx = std::max(mx, scale * v);
    for (double& v : r) s += (v = std::exp(scale * v - mx));
    for (double& v : r) v /= s;
  }
  return a;
}

Mat gram(const Mat& a) {
  Mat g(a.size(), std::vector<double>(a.size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      for (std::size_t k = 0; k < a[0].size(); ++k) g[i][j] += a[i][k] * a[j][k];
  return g;
}

Mat norm_rows(Mat x, const Tensor& gamma, const Tensor& beta) {
  const double n = static_cast<double>(x.size());
  for (std::size_t j = 0; j < x[0].size(); ++j) {
    double m = 0, v = 0;
    for (auto& r : x) m += r[j] / n;
    for (auto& r : x) v += (r[j] - m) * (r[j] - m) / n;
    for (auto& r : x) r[j] = gamma[j] * (r[j] - m) / std::sqrt(v + ops::kNormEps) + beta[j];
  }
  return x;
}

Mat elu(Mat x) {
  for (auto& r : x)
    for (double& v : r) v = v > 0 ? v : std::expm1(v);
  return x;
}

Mat clamp_norm(Mat a) {
  for (auto& r : a) {
    double s = 0;
    for (double& v : r) s += (v = std::max(v, kAdjacencyFloor));
    for (double& v : r) v /= s;
  }
  return a;
}

Mat gconv(const Mat& x, const Mat& adj, const Tensor& w) {
  const std::size_t n = adj.size();
  Mat h(n, std::vector<double>(n));
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += adj[i][j] + (i == j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) h[i][j] = (adj[i][j] + (i == j)) / std::sqrt(deg[i] * deg[j]);
  return mm(mm(h, x), to_mat(w));
}

Mat mean_of(const std::vector<Mat>& blocks) {
  Mat out;
  for (const Mat& b : blocks) {
    std::vector<double> r(b[0].size(), 0.0);
    for (const auto& row : b)
      for (std::size_t j = 0; j < r.size(); ++j) r[j] += row[j] / static_cast<double>(b.size());
    out.push_back(r);
  }
  return out;
}

// Stack of blocks <-> one big matrix, for statistics over every node.
Mat stack(const std::vector<Mat>& blocks) {
  Mat out;
  for (const Mat& b : blocks) out.insert(out.end(), b.begin(), b.end());
  return out;
}
std::vector<Mat> unstack(const Mat& m, std::size_t per) {
  std::vector<Mat> out;
  for (std::size_t i = 0; i < m.size(); i += per) out.emplace_back(m.begin() + i, m.begin() + i + per);
  return out;
}

std::vector<double> mhca_context(ModelParams& p, const std::string& prefix, const Mat& q, const Mat& nodes) {
  const ModelConfig& c = p.config;
  std::vector<double> cat;
  for (std::size_t h = 0; h < c.heads; ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    Mat qh = mm(q, to_mat(p[hp + ".q"].value));
    Mat k = mm(nodes, to_mat(p[hp + ".k"].value));
    Mat v = mm(nodes, to_mat(p[hp + ".v"].value));
    std::vector<double> logits(nodes.size(), 0.0);
    for (std::size_t n = 0; n < nodes.size(); ++n)
      for (std::size_t j = 0; j < c.d_head; ++j) logits[n] += k[n][j] * qh[0][j];
    Mat att = softmax_rows({logits}, 1.0 / std::sqrt(static_cast<double>(c.d_head)));
    for (std::size_t j = 0; j < c.d_head; ++j) {
      double s = 0;
      for (std::size_t n = 0; n < nodes.size(); ++n) s += att[0][n] * v[n][j];
      cat.push_back(s);
    }
  }
  return mm({cat}, to_mat(p[prefix + ".out"].value))[0];
}

Mat cosine(const Mat& x, const Tensor& wa, const Tensor& wb) {
  Mat a = mm(x, to_mat(wa)), b = mm(x, to_mat(wb));
  Mat out(x.size(), std::vector<double>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      double d = 0, na = 0, nb = 0;
      for (std::size_t k = 0; k < a[0].size(); ++k) {
        d += a[i][k] * b[j][k];
        na += a[i][k] * a[i][k];
        nb += b[j][k] * b[j][k];
      }
      out[i][j] = d / (std::max(std::sqrt(na), 1e-8) * std::max(std::sqrt(nb), 1e-8));
    }
  }
  return out;
}

Mat sigmoid_add(Mat raw, const Mat& d) {
  for (std::size_t i = 0; i < raw.size(); ++i)
    for (std::size_t j = 0; j < raw[0].size(); ++j) raw[i][j] += 1.0 / (1.0 + std::exp(-d[i][j]));
  return raw;
}

Mat oracle_forward(ModelParams& p, const Tensor& objects) {
  const ModelConfig& c = p.config;
  const std::size_t T = objects.dim(0), N = objects.dim(1);
  Mat q = to_mat(p["query.null"].value);

  std::vector<Mat> emb;
  for (std::size_t t = 0; t < T; ++t) {
    Mat o(N, std::vector<double>(c.d_obj));
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t j = 0; j < c.d_obj; ++j) o[n][j] = objects(t, n, j);
    Mat e = plus_bias(mm(o, to_mat(p["obj_emb.w"].value)), p["obj_emb.b"].value);
    e = plus_bias(mm(e, to_mat(p["mhca_emb.w"].value)), p["mhca_emb.b"].value);
    emb.push_back(e);
  }
  std::vector<Mat> normed =
      unstack(norm_rows(stack(emb), p["mhca_s.norm.gamma"].value, p["mhca_s.norm.beta"].value), N);
  for (std::size_t t = 0; t < T; ++t) {
    const auto ctx = mhca_context(p, "mhca_s", q, emb[t]);
    for (auto& r : normed[t])
      for (std::size_t j = 0; j < r.size(); ++j) r[j] += ctx[j];
  }
  emb = normed;

  std::vector<Mat> s_raw, s_op;
  for (const Mat& e : emb) {
    s_raw.push_back(softmax_rows(gram(e), c.lambda_o));
    s_op.push_back(clamp_norm(s_raw.back()));
  }

  auto srr = [&](std::vector<Mat> x) {
    for (std::size_t l = 0; l < c.graph_layers; ++l) {
      const std::string lp = "srr." + std::to_string(l);
      for (std::size_t t = 0; t < T; ++t) x[t] = gconv(x[t], s_op[t], p[lp + ".w"].value);
      x = unstack(elu(norm_rows(stack(x), p[lp + ".norm.gamma"].value, p[lp + ".norm.beta"].value)), N);
    }
    return x;
  };
  auto temporal = [&](const Mat& frames) {
    Mat keys = frames;
    const Tensor pe = positional_encoding(T, frames[0].size());
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < keys[0].size(); ++j) keys[t][j] += pe(t, j);
    const auto ctx = mhca_context(p, "mhca_t", q, keys);
    Mat out = norm_rows(keys, p["mhca_t.norm.gamma"].value, p["mhca_t.norm.beta"].value);
    for (auto& r : out)
      for (std::size_t j = 0; j < r.size(); ++j) r[j] += ctx[j];
    return out;
  };
  auto trr = [&](std::vector<Mat> x, const Mat& a_op, const Mat& fhat) {
    for (std::size_t l = 0; l < c.graph_layers; ++l) {
      const std::string lp = "trr." + std::to_string(l);
      Mat msg = mm(a_op, l == 0 ? fhat : mean_of(x));
      for (std::size_t t = 0; t < T; ++t) {
        for (auto& r : x[t])
          for (std::size_t j = 0; j < r.size(); ++j) r[j] += msg[t][j];
        x[t] = plus_bias(mm(x[t], to_mat(p[lp + ".w"].value)), p[lp + ".b"].value);
      }
      x = unstack(elu(norm_rows(stack(x), p[lp + ".norm.gamma"].value, p[lp + ".norm.beta"].value)), N);
    }
    return x;
  };

  std::vector<Mat> z = srr(emb);
  Mat fhat = temporal(mean_of(z));
  Mat a_raw = softmax_rows(gram(fhat), c.lambda_f);
  Mat a_op = clamp_norm(a_raw);
  std::vector<Mat> zhat = trr(z, a_op, fhat);
  for (std::size_t k = 1; k <= c.iterations; ++k) {
    z = srr(zhat);
    Mat frames = mean_of(z);
    fhat = temporal(frames);
    a_raw = sigmoid_add(a_raw, cosine(frames, p["refine.theta_s"].value, p["refine.phi_s"].value));
    for (std::size_t t = 0; t < T; ++t) {
      s_raw[t] = sigmoid_add(s_raw[t], cosine(zhat[t], p["refine.theta_t"].value, p["refine.phi_t"].value));
      s_op[t] = clamp_norm(s_raw[t]);
    }
    a_op = clamp_norm(a_raw);
    zhat = trr(z, a_op, fhat);
  }
  Mat h = gconv(mean_of(zhat), a_op, p["sum.1.w"].value);
  h = norm_rows(h, p["sum.1.norm.gamma"].value, p["sum.1.norm.beta"].value);
  for (auto& r : h)
    for (double& v : r) v = std::max(v, 0.0);
  return softmax_rows(gconv(h, a_op, p["sum.2.w"].value), 1.0);
}

bool row_stochastic(const Tensor& a, double tol) {
  const std::size_t cols = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (a[r * cols + j] < 0) return false;
      s += a[r * cols + j];
    }
    if (std::abs(s - 1.0) > tol) return false;
  }
  return true;
}

}  // namespace

TEST(Model, ScriptedOracleT2N2) {
  for (std::size_t K : {0u, 1u, 2u}) {
    ModelConfig c = tiny_config(QueryMode::none, K);
    c.frames = 2;
    c.objects = 2;
    ModelParams p = init_params(c, 21);
    std::mt19937_64 rng(5);
    VideoInput in = random_input(rng, c, QueryMode::none);
    Tape tape;
    ForwardResult r = forward(tape, p, in);
    EXPECT_LE(max_abs_diff(r.summary.probs.value(), Tensor(Shape{2, 2}, [&] {
                             Mat m = oracle_forward(p, in.objects);
                             return std::vector<double>{m[0][0], m[0][1], m[1][0], m[1][1]};
                           }())),
              1e-12)
        << "K=" << K;
  }
}

TEST(Model, FullGradientCheckAllModes) {
  const auto start = std::chrono::steady_clock::now();
  for (const auto& c : model_gradient_cases(4, 3, 1e-5, 1e-4)) {
    EXPECT_TRUE(c.passed) << c.name << ": " << c.report.max_rel_error << " at " << c.report.worst_param << "["
                          << c.report.worst_index << "] analytic " << c.report.worst_analytic << " numeric "
                          << c.report.worst_numeric << " " << c.report.failure;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 60.0);
}

TEST(Model, AdjacencyInvariants) {
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig c = tiny_config(trial % 2 ? QueryMode::word : QueryMode::sentence, 3);
    c.frames = 6;
    c.lambda_f = 30.0;
    ModelParams p = init_params(c, 100 + trial);
    std::mt19937_64 rng(trial);
    VideoInput in = random_input(rng, c, c.query_mode);
    if (trial % 4 == 3) in.valid = {1, 1, 1, 1, 0, 0};
    Tape tape;
    ForwardResult r = forward(tape, p, in);
    ASSERT_EQ(r.diagnostics.spatial_ops.size(), c.iterations + 1);
    for (const Tensor& s : r.diagnostics.spatial_ops) EXPECT_TRUE(row_stochastic(s, 1e-6));
    for (const Tensor& a : r.diagnostics.temporal_ops) EXPECT_TRUE(row_stochastic(a, 1e-6));

    Tensor a_sum = r.state.temporal_init.value(), s_sum = r.state.spatial_init.value();
    for (const Var& d : r.state.temporal_residuals)
      for (std::size_t i = 0; i < a_sum.size(); ++i) a_sum[i] += d.value()[i];
    for (const Var& d : r.state.spatial_residuals)
      for (std::size_t i = 0; i < s_sum.size(); ++i) s_sum[i] += d.value()[i];
    EXPECT_LE(max_abs_diff(a_sum, r.state.temporal_raw.value()), 1e-6);
    EXPECT_LE(max_abs_diff(s_sum, r.state.spatial_raw.value()), 1e-6);
    for (std::size_t t = 0; t < c.frames; ++t)
      EXPECT_NEAR(r.summary.probs.value()(t, 0) + r.summary.probs.value()(t, 1), 1.0, 1e-9);
  }
}

TEST(Model, RefineStepOracleAndErrors) {
  // Three frames, two objects, two hand-stepped refinement iterations.
  ModelConfig c = tiny_config(QueryMode::none, 2);
  c.frames = 3;
  c.objects = 2;
  ModelParams p = init_params(c, 9);
  std::mt19937_64 rng(31);
  Tape tape;
  Tensor a0 = random_tensor(rng, {3, 3}, 0.1, 1.0), s0 = random_tensor(rng, {3, 2, 2}, 0.1, 1.0);
  RefinementState st = init_refinement(tape.constant(s0), tape.constant(a0), 2);
  Mat a_raw = to_mat(a0);
  Mat s_raw = to_mat(s0.reshaped({3, 4}));
  for (int k = 0; k < 2; ++k) {
    Tensor frames = random_tensor(rng, {3, c.graph_hidden});
    Tensor objs = random_tensor(rng, {3, 2, c.d_model});
    refine_step(tape, p, st, tape.constant(frames), tape.constant(objs));
    a_raw = sigmoid_add(a_raw, cosine(to_mat(frames), p["refine.theta_s"].value, p["refine.phi_s"].value));
    for (std::size_t t = 0; t < 3; ++t) {
      Mat o = to_mat(objs.reshaped({6, c.d_model}));
      Mat ot(o.begin() + 2 * t, o.begin() + 2 * t + 2);
      Mat ds = cosine(ot, p["refine.theta_t"].value, p["refine.phi_t"].value);
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) s_raw[t][2 * i + j] += 1.0 / (1.0 + std::exp(-ds[i][j]));
    }
  }
  EXPECT_EQ(st.iteration, 2u);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(st.temporal_raw.value()(i, j), a_raw[i][j], 1e-12);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t e = 0; e < 4; ++e) EXPECT_NEAR(st.spatial_raw.value()[4 * t + e], s_raw[t][e], 1e-12);
  EXPECT_THROW(refine_step(tape, p, st, tape.constant(Tensor({3, c.graph_hidden})),
                           tape.constant(Tensor({3, 2, c.d_model}))),
               StateError);

  // Zero projections: every residual entry is sigmoid(0) = 0.5.
  for (const char* n : {"refine.theta_s", "refine.phi_s", "refine.theta_t", "refine.phi_t"}) p[n].value.fill(0.0);
  Tape fresh;  // parameters are captured by value once per tape
  RefinementState z = init_refinement(fresh.constant(Tensor({3, 2, 2})), fresh.constant(Tensor({3, 3})), 1);
  refine_step(fresh, p, z, fresh.constant(random_tensor(rng, {3, c.graph_hidden})),
              fresh.constant(random_tensor(rng, {3, 2, c.d_model})));
  for (double v : z.temporal_residuals[0].value().storage()) EXPECT_EQ(v, 0.5);
  for (double v : z.spatial_residuals[0].value().storage()) EXPECT_EQ(v, 0.5);
}

TEST(Model, DeterminismAndEquivariance) {
  ModelConfig c = tiny_config(QueryMode::none, 2);
  c.frames = 5;
  ModelParams p = init_params(c, 4);
  ModelParams p2 = init_params(c, 4);
  std::mt19937_64 rng(8);
  VideoInput in = random_input(rng, c, QueryMode::none);
  Tape t1, t2;
  EXPECT_EQ(forward(t1, p, in).summary.probs.value(), forward(t2, p2, in).summary.probs.value());

  // Frame permutation with positional encoding off.
  p.config.positional_encoding = false;
  const std::size_t perm[] = {3, 0, 4, 1, 2};
  VideoInput pin = in;
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t n = 0; n < c.objects; ++n)
      for (std::size_t j = 0; j < c.d_obj; ++j) pin.objects(t, n, j) = in.objects(perm[t], n, j);
  Tape t3, t4;
  Tensor y = forward(t3, p, in).summary.probs.value();
  Tensor yp = forward(t4, p, pin).summary.probs.value();
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(yp(t, k), y(perm[t], k), 1e-10);

  // Object order within a frame does not change pooled frames.
  Tape t5;
  Tensor z = random_tensor(rng, {2, 3, 4});
  Tensor zs = z;
  for (std::size_t j = 0; j < 4; ++j) std::swap(zs(1, 0, j), zs(1, 2, j));
  EXPECT_LE(max_abs_diff(frame_pool(t5.constant(z)).value(), frame_pool(t5.constant(zs)).value()), 1e-15);
  Tensor vv = Tensor::from_rows({{1, -2}, {-1, 2}});
  for (double v : frame_pool(t5.constant(vv)).value().storage()) EXPECT_EQ(v, 0.0);
}

TEST(Model, QueryChangesValuesNotStructure) {
  ModelConfig cn = tiny_config(QueryMode::word, 2);
  ModelParams p = init_params(cn, 6);
  std::mt19937_64 rng(10);
  VideoInput word = random_input(rng, cn, QueryMode::word);
  VideoInput none = word;
  none.query = {};
  Tape t1, t2;
  ForwardResult rw = forward(t1, p, word), rn = forward(t2, p, none);
  ASSERT_EQ(rw.diagnostics.spatial_ops.size(), rn.diagnostics.spatial_ops.size());
  for (std::size_t k = 0; k < rw.diagnostics.spatial_ops.size(); ++k) {
    EXPECT_EQ(rw.diagnostics.spatial_ops[k].shape(), rn.diagnostics.spatial_ops[k].shape());
    EXPECT_EQ(rw.diagnostics.temporal_ops[k].shape(), rn.diagnostics.temporal_ops[k].shape());
    EXPECT_TRUE(row_stochastic(rn.diagnostics.temporal_ops[k], 1e-6));
  }
  EXPECT_NE(rw.summary.probs.value(), rn.summary.probs.value());

  VideoInput wrong = word;
  wrong.query.mode = QueryMode::sentence;
  Tape t3;
  EXPECT_THROW(forward(t3, p, wrong), ConfigError);
}

TEST(Model, StageExamples) {
  ModelConfig c = tiny_config(QueryMode::sentence, 0);
  ModelParams p = init_params(c, 12);
  Tape tape;
  // Zero features leave only the biases.
  p["obj_emb.b"].value = Tensor({1, c.d_embed}, 0.25);
  Tensor e = embed_objects(tape, p, tape.constant(Tensor({2, c.d_obj}))).value();
  Mat expect = plus_bias(mm(Mat(1, std::vector<double>(c.d_embed, 0.25)), to_mat(p["mhca_emb.w"].value)),
                         p["mhca_emb.b"].value);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < c.d_model; ++j) EXPECT_NEAR(e(r, j), expect[0][j], 1e-12);
  EXPECT_THROW(embed_objects(tape, p, tape.constant(Tensor({2, c.d_obj + 1}))), DimensionError);

  // Fewer captions than slots are zero-padded.
  std::mt19937_64 rng(3);
  QueryEmbedding q{QueryMode::sentence, random_tensor(rng, {1, c.d_caption})};
  QueryEmbedding padded{QueryMode::sentence, Tensor({c.captions, c.d_caption})};
  for (std::size_t j = 0; j < c.d_caption; ++j) padded.vectors(0, j) = q.vectors(0, j);
  EXPECT_EQ(fuse_query(tape, p, q).value(), fuse_query(tape, p, padded).value());
  QueryEmbedding bad{QueryMode::sentence, Tensor({1, c.d_caption + 1})};
  EXPECT_THROW(fuse_query(tape, p, bad), ConfigError);

  // Single node: the attention weight is 1, so the context is v projected.
  Tensor node = random_tensor(rng, {1, c.d_model});
  Var fused = mhca_fuse(tape, p, "mhca_s", tape.constant(Tensor({1, c.d_embed}, 0.3)), tape.constant(node));
  EXPECT_EQ(fused.value().shape(), (Shape{1, c.d_model}));

  // Identical nodes give a uniform spatial graph.
  Tensor same({3, c.d_model}, 0.7);
  for (double v : build_spatial_graph(tape.constant(same), 1.6).value().storage()) EXPECT_NEAR(v, 1.0 / 3, 1e-15);

  // Background wins ties.
  Tensor probs = Tensor::from_rows({{0.5, 0.5}, {0.1, 0.9}, {0.7, 0.3}, {0.1, 0.9}});
  EXPECT_EQ(keyframes_from_probs(probs), (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(keyframes_from_probs(probs, std::vector<double>{1, 1, 1, 0}), (std::vector<std::size_t>{1}));
}

TEST(Model, PaddingInvariance) {
  ModelConfig c = tiny_config(QueryMode::sentence, 2);
  ModelParams p = init_params(c, 5);
  std::mt19937_64 rng(44);
  VideoInput in = random_input(rng, c, QueryMode::sentence);
  VideoTargets tg{{1, 0, 0, 1}, {0.9, 0.1, 0.3, 0.7}};

  VideoInput padded = in;
  padded.objects = Tensor({6, c.objects, c.d_obj});
  std::copy(in.objects.storage().begin(), in.objects.storage().end(), padded.objects.storage().begin());
  padded.valid = {1, 1, 1, 1, 0, 0};
  VideoTargets ptg{{1, 0, 0, 1, 0, 0}, {0.9, 0.1, 0.3, 0.7, 0, 0}};

  for (LossMode lm : {LossMode::supervised_binary, LossMode::supervised_score, LossMode::unsupervised}) {
    LossWeights w = LossWeights::defaults(lm);
    Tape t1, t2;
    VideoLoss a = video_loss(t1, p, in, tg, w);
    VideoLoss b = video_loss(t2, p, padded, ptg, w);
    // Positional encoding depends only on the frame index, so the live frames see identical inputs.
    EXPECT_NEAR(a.report.total, b.report.total, 1e-9) << to_string(lm);
    for (const auto& [k, v] : a.report.components) EXPECT_NEAR(v, b.report.components.at(k), 1e-9) << k;
  }
}
