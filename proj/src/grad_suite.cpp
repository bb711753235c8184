#include "videograph/grad_suite.hpp"

#include <chrono>
#include <functional>
#include <memory>
#include <random>

#include "videograph/losses.hpp"
#include "videograph/model.hpp"
#include "videograph/ops.hpp"

namespace videograph {

namespace {

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = dist(rng);
  return t;
}

std::vector<Parameter> make(std::mt19937_64& rng, std::initializer_list<Shape> shapes, double lo = -1.0,
                            double hi = 1.0) {
  std::vector<Parameter> ps;
  int i = 0;
  for (const Shape& s : shapes) ps.emplace_back("p" + std::to_string(i++), random_tensor(rng, s, lo, hi));
  return ps;
}

using OpFn = std::function<Var(Tape&, std::vector<Var>&)>;

// Loss = random projection of the op output.
GradCheckReport check_op(std::mt19937_64& rng, std::vector<Parameter>& params, const OpFn& op, double eps) {
  Tensor proj;
  auto f = [&](Tape& t) {
    std::vector<Var> in;
    for (auto& p : params) in.push_back(t.param(p));
    Var out = op(t, in);
    if (proj.empty()) proj = random_tensor(rng, out.shape());
    return ops::dot_const(out, proj);
  };
  std::vector<Parameter*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  return gradient_check(f, ptrs, eps);
}

// 2x with a backward that passes 2.02x.
Var faulty_double(Var a) {
  Tensor y = a.value();
  for (double& v : y.storage()) v *= 2.0;
  return a.tape->record("faulty_double", std::move(y), {a}, [a](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.02 * g[i];
  });
}

}  // namespace

bool GradSuiteResult::passed() const {
  for (const auto& c : cases)
    if (!c.passed) return false;
  return !cases.empty();
}

std::vector<GradCase> op_gradient_cases(std::uint64_t seed, double eps, double tolerance, bool inject_fault) {
  std::mt19937_64 rng(1000 + seed);
  using ops::Activation;
  const std::vector<double> row_mask{1, 0, 1, 1};
  const std::vector<double> batch_mask{1, 1, 0};
  const std::vector<std::size_t> picks{2, 0, 2};

  struct Case {
    std::string name;
    std::vector<Parameter> params;
    OpFn op;
  };
  std::vector<Case> cases;
  cases.push_back({"matmul", make(rng, {{3, 4}, {4, 2}}), [](Tape&, auto& v) { return ops::matmul(v[0], v[1]); }});
  cases.push_back({"matmul_batched", make(rng, {{2, 3, 4}, {4, 2}}),
                   [](Tape&, auto& v) { return ops::matmul(v[0], v[1]); }});
  cases.push_back({"bmm", make(rng, {{2, 3, 4}, {2, 4, 2}}), [](Tape&, auto& v) { return ops::bmm(v[0], v[1]); }});
  cases.push_back({"bmm_trans", make(rng, {{2, 3, 4}, {2, 5, 4}}),
                   [](Tape&, auto& v) { return ops::bmm(v[0], v[1], true); }});
  cases.push_back({"transpose", make(rng, {{3, 4}}), [](Tape&, auto& v) { return ops::transpose(v[0]); }});
  cases.push_back({"add_sub_mul", make(rng, {{3, 4}, {3, 4}}),
                   [](Tape&, auto& v) { return ops::mul(ops::add(v[0], v[1]), ops::sub(v[0], v[1])); }});
  cases.push_back({"scale_mul_const", make(rng, {{3, 4}}), [c = random_tensor(rng, {3, 4})](Tape&, auto& v) {
                     return ops::mul_const(ops::scale(v[0], -1.7), c);
                   }});
  cases.push_back({"add_bias", make(rng, {{3, 4}, {1, 4}}), [](Tape&, auto& v) { return ops::add_bias(v[0], v[1]); }});
  cases.push_back({"add_rows", make(rng, {{2, 3, 4}, {2, 4}}),
                   [](Tape&, auto& v) { return ops::add_rows(v[0], v[1]); }});
  cases.push_back({"elu", make(rng, {{3, 4}}), [](Tape&, auto& v) { return ops::elu(v[0]); }});
  cases.push_back({"relu", make(rng, {{3, 4}}), [](Tape&, auto& v) { return ops::relu(v[0]); }});
  cases.push_back({"sigmoid", make(rng, {{3, 4}}), [](Tape&, auto& v) { return ops::sigmoid(v[0]); }});
  cases.push_back({"row_softmax", make(rng, {{3, 4}}), [](Tape&, auto& v) { return ops::row_softmax(v[0], 1.6); }});
  cases.push_back({"row_softmax_masked", make(rng, {{2, 4, 4}}),
                   [&](Tape&, auto& v) { return ops::row_softmax(v[0], 2.0, row_mask); }});
  cases.push_back({"mean_rows", make(rng, {{3, 4}}), [](Tape&, auto& v) { return ops::mean_rows(v[0]); }});
  cases.push_back({"mean_rows_batched", make(rng, {{2, 3, 4}}),
                   [](Tape&, auto& v) { return ops::mean_rows(v[0]); }});
  cases.push_back({"sum_mean", make(rng, {{3, 4}}),
                   [](Tape&, auto& v) { return ops::add(ops::sum(v[0]), ops::scale(ops::mean(v[0]), 3.0)); }});
  cases.push_back({"reshape", make(rng, {{3, 4}}), [](Tape&, auto& v) { return ops::reshape(v[0], {2, 6}); }});
  cases.push_back({"concat0", make(rng, {{2, 4}, {3, 4}}), [](Tape&, auto& v) { return ops::concat(v, 0); }});
  cases.push_back({"concat1", make(rng, {{3, 2}, {3, 5}}), [](Tape&, auto& v) { return ops::concat(v, 1); }});
  cases.push_back({"gather_rows", make(rng, {{3, 4}}), [&](Tape&, auto& v) { return ops::gather_rows(v[0], picks); }});
  cases.push_back({"l2_normalize_rows", make(rng, {{3, 4}}),
                   [](Tape&, auto& v) { return ops::l2_normalize_rows(v[0]); }});
  cases.push_back({"node_norm", make(rng, {{5, 3}, {1, 3}, {1, 3}}),
                   [](Tape&, auto& v) { return ops::node_norm(v[0], v[1], v[2]); }});
  cases.push_back({"node_norm_masked", make(rng, {{4, 3}, {1, 3}, {1, 3}}),
                   [&](Tape&, auto& v) { return ops::node_norm(v[0], v[1], v[2], row_mask); }});
  cases.push_back({"sym_normalize", make(rng, {{2, 3, 3}}, 0.05, 1.0),
                   [](Tape&, auto& v) { return ops::sym_normalize(v[0]); }});
  const char* act_names[] = {"identity", "elu", "relu", "sigmoid", "softmax_rows"};
  int ai = 0;
  for (auto act : {Activation::identity, Activation::elu, Activation::relu, Activation::sigmoid,
                   Activation::softmax_rows}) {
    for (bool norm : {true, false}) {
      cases.push_back({std::string("graph_conv_") + act_names[ai] + (norm ? "_norm" : ""),
                       make(rng, {{4, 3}, {4, 4}, {3, 2}}, 0.05, 1.0), [act, norm](Tape&, auto& v) {
                         return ops::graph_conv(ops::add_bias(v[0], v[0].tape->constant(Tensor({1, 3}, -0.5))), v[1],
                                                v[2], act, norm);
                       }});
    }
    ++ai;
  }
  cases.push_back({"graph_conv_batched", make(rng, {{2, 3, 3}, {2, 3, 3}, {3, 2}}, 0.05, 1.0),
                   [](Tape&, auto& v) { return ops::graph_conv(v[0], v[1], v[2], ops::Activation::elu); }});
  cases.push_back({"cosine_affinity", make(rng, {{4, 3}, {3, 5}, {3, 5}}),
                   [](Tape&, auto& v) { return ops::cosine_affinity(v[0], v[1], v[2]); }});
  cases.push_back({"cosine_affinity_batched", make(rng, {{2, 3, 3}, {3, 4}, {3, 4}}),
                   [](Tape&, auto& v) { return ops::cosine_affinity(v[0], v[1], v[2]); }});
  cases.push_back({"clamp_row_normalize", make(rng, {{4, 4}}, 0.05, 1.0),
                   [&](Tape&, auto& v) { return ops::clamp_row_normalize(v[0], 1e-6, row_mask); }});
  cases.push_back({"entropy_offdiag", make(rng, {{4, 4}}, 0.05, 1.0),
                   [&](Tape&, auto& v) { return ops::entropy_offdiag(v[0], row_mask); }});
  cases.push_back({"entropy_offdiag_batched", make(rng, {{3, 3, 3}}, 0.05, 1.0),
                   [&](Tape&, auto& v) { return ops::entropy_offdiag(v[0], batch_mask); }});
  if (inject_fault) {
    cases.push_back({"faulty_double", make(rng, {{3, 4}}), [](Tape&, auto& v) { return faulty_double(v[0]); }});
  }

  std::vector<GradCase> out;
  for (auto& c : cases) {
    std::mt19937_64 proj_rng(seed * 7919 + c.params.size());
    GradCase g;
    g.name = c.name + "/seed" + std::to_string(seed);
    g.report = check_op(proj_rng, c.params, c.op, eps);
    g.passed = g.report.ok(tolerance);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<GradCase> model_gradient_cases(std::size_t frames, std::size_t objects, double eps, double tolerance) {
  std::vector<GradCase> out;
  for (QueryMode qm : {QueryMode::none, QueryMode::word, QueryMode::sentence}) {
    for (LossMode lm : {LossMode::supervised_binary, LossMode::supervised_score, LossMode::unsupervised}) {
      ModelConfig c;
      c.frames = frames;
      c.objects = objects;
      c.d_obj = 5;
      c.d_embed = 4;
      c.d_model = 4;
      c.heads = 2;
      c.d_head = 2;
      c.graph_layers = 2;
      c.graph_hidden = 3;
      c.summary_hidden = 3;
      c.d_affinity = 3;
      c.iterations = 2;
      c.query_mode = qm;
      c.words = 3;
      c.captions = 2;
      c.d_word = 3;
      c.d_caption = 4;
      ModelParams p = init_params(c, 3);
      std::mt19937_64 rng(17);
      VideoInput in;
      in.objects = random_tensor(rng, {frames, objects, c.d_obj});
      in.query.mode = qm;
      if (qm != QueryMode::none) in.query.vectors = random_tensor(rng, {c.query_rows(), c.query_width()});
      VideoTargets tg;
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (std::size_t t = 0; t < frames; ++t) {
        tg.labels.push_back(t % 3 == 0 ? 1 : 0);
        tg.scores.push_back(u(rng));
      }
      LossWeights w = LossWeights::defaults(lm);
      w.alpha = w.beta = w.gamma = 1.0;  // every term visible
      GradCase g;
      g.name = "model/" + to_string(qm) + "/" + to_string(lm);
      g.report = gradient_check([&](Tape& t) { return video_loss(t, p, in, tg, w).total; }, p.params.pointers(), eps);
      g.passed = g.report.ok(tolerance);
      out.push_back(std::move(g));
    }
  }
  return out;
}

GradSuiteResult run_gradient_suite(const GradSuiteOptions& o) {
  const auto start = std::chrono::steady_clock::now();
  GradSuiteResult r;
  if (o.ops) {
    for (std::size_t s = 0; s < o.op_seeds; ++s) {
      auto cs = op_gradient_cases(s, o.eps, o.tolerance, o.inject_fault && s == 0);
      r.cases.insert(r.cases.end(), cs.begin(), cs.end());
    }
  }
  if (o.model) {
    auto cs = model_gradient_cases(o.frames, o.objects, o.eps, o.tolerance);
    r.cases.insert(r.cases.end(), cs.begin(), cs.end());
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace videograph
