#include "videograph/model.hpp"

#include <cmath>
#include <random>

namespace videograph {

using ops::Activation;
using ops::Mask;

std::string to_string(QueryMode mode) {
  switch (mode) {
    case QueryMode::none:
      return "none";
    case QueryMode::word:
      return "word";
    case QueryMode::sentence:
      return "sentence";
  }
  return "none";
}

QueryMode parse_query_mode(const std::string& text) {
  if (text == "none") return QueryMode::none;
  if (text == "word") return QueryMode::word;
  if (text == "sentence") return QueryMode::sentence;
  throw ConfigError("unknown query mode '" + text + "' (expected none, word or sentence)");
}

void ModelConfig::validate() const {
  const std::pair<const char*, std::size_t> extents[] = {
      {"frames", frames},         {"objects", objects},           {"d_obj", d_obj},
      {"d_embed", d_embed},       {"d_model", d_model},           {"heads", heads},
      {"d_head", d_head},         {"graph_layers", graph_layers}, {"graph_hidden", graph_hidden},
      {"summary_hidden", summary_hidden}, {"d_affinity", d_affinity}, {"words", words},
      {"captions", captions},     {"d_word", d_word},             {"d_caption", d_caption}};
  for (const auto& [name, v] : extents) {
    if (v < 1) throw ConfigError(std::string("model config: ") + name + " must be >= 1");
  }
  if (d_model % heads != 0) throw ConfigError("model config: d_model must be divisible by heads");
  if (!(lambda_o > 0.0) || !(lambda_f > 0.0)) throw ConfigError("model config: scaling factors must be positive");
}

std::vector<std::size_t> ModelConfig::srr_channels() const {
  std::vector<std::size_t> c{d_model};
  for (std::size_t l = 0; l < graph_layers; ++l) c.push_back(graph_hidden);
  return c;
}

std::vector<std::size_t> ModelConfig::trr_channels() const {
  std::vector<std::size_t> c;
  for (std::size_t l = 0; l < graph_layers; ++l) c.push_back(graph_hidden);
  c.push_back(d_model);
  return c;
}

namespace {

Tensor xavier(std::mt19937_64& rng, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w({fan_in, fan_out});
  for (double& v : w.storage()) v = dist(rng);
  return w;
}

void add_norm(ParameterSet& ps, const std::string& prefix, std::size_t d) {
  ps.add(prefix + ".gamma", Tensor({1, d}, 1.0));
  ps.add(prefix + ".beta", Tensor({1, d}, 0.0));
}

void add_mhca(ParameterSet& ps, std::mt19937_64& rng, const std::string& prefix, const ModelConfig& c,
              std::size_t d_query, std::size_t d_node) {
  for (std::size_t h = 0; h < c.heads; ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    ps.add(hp + ".q", xavier(rng, d_query, c.d_head));
    ps.add(hp + ".k", xavier(rng, d_node, c.d_head));
    ps.add(hp + ".v", xavier(rng, d_node, c.d_head));
  }
  ps.add(prefix + ".out", xavier(rng, c.heads * c.d_head, d_node));
  add_norm(ps, prefix + ".norm", d_node);
}

Var linear(Tape& tape, ModelParams& p, const std::string& name, Var x) {
  Var y = ops::matmul(x, tape.param(p[name + ".w"]));
  if (p.params.contains(name + ".b")) y = ops::add_bias(y, tape.param(p[name + ".b"]));
  return y;
}

Var norm(Tape& tape, ModelParams& p, const std::string& name, Var x, Mask mask) {
  return ops::node_norm(x, tape.param(p[name + ".gamma"]), tape.param(p[name + ".beta"]), mask);
}

// Frame mask expanded to one entry per object row.
std::vector<double> per_object_mask(std::span<const double> frame_mask, std::size_t objects) {
  std::vector<double> m;
  if (frame_mask.empty()) return m;
  m.reserve(frame_mask.size() * objects);
  for (double v : frame_mask)
    for (std::size_t n = 0; n < objects; ++n) m.push_back(v);
  return m;
}

Tensor outer_mask(std::span<const double> mask) {
  const std::size_t t = mask.size();
  Tensor m({t, t});
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < t; ++j) m(i, j) = mask[i] * mask[j];
  return m;
}

}  // namespace

ModelParams init_params(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  ModelParams mp;
  mp.config = c;
  std::mt19937_64 rng(seed);
  ParameterSet& ps = mp.params;

  ps.add("obj_emb.w", xavier(rng, c.d_obj, c.d_embed));
  ps.add("obj_emb.b", Tensor({1, c.d_embed}));
  ps.add("mhca_emb.w", xavier(rng, c.d_embed, c.d_model));
  ps.add("mhca_emb.b", Tensor({1, c.d_model}));

  {
    std::normal_distribution<double> dist(0.0, 0.1);
    Tensor null({1, c.d_embed});
    for (double& v : null.storage()) v = dist(rng);
    ps.add("query.null", std::move(null));
  }
  if (c.query_mode == QueryMode::sentence) {
    ps.add("query.sentence.w", xavier(rng, c.captions * c.d_caption, c.d_embed));
    ps.add("query.sentence.b", Tensor({1, c.d_embed}));
  } else if (c.query_mode == QueryMode::word) {
    ps.add("query.word_mlp.w", xavier(rng, c.d_word, c.d_word));
    ps.add("query.word_mlp.b", Tensor({1, c.d_word}));
    ps.add("query.word_fuse.w", xavier(rng, c.words * c.d_word, c.d_embed));
    ps.add("query.word_fuse.b", Tensor({1, c.d_embed}));
  }

  add_mhca(ps, rng, "mhca_s", c, c.d_embed, c.d_model);

  const auto srr = c.srr_channels();
  for (std::size_t l = 0; l + 1 < srr.size(); ++l) {
    const std::string lp = "srr." + std::to_string(l);
    ps.add(lp + ".w", xavier(rng, srr[l], srr[l + 1]));
    add_norm(ps, lp + ".norm", srr[l + 1]);
  }

  const std::size_t d_frame = srr.back();
  add_mhca(ps, rng, "mhca_t", c, c.d_embed, d_frame);

  const auto trr = c.trr_channels();
  for (std::size_t l = 0; l + 1 < trr.size(); ++l) {
    const std::string lp = "trr." + std::to_string(l);
    ps.add(lp + ".w", xavier(rng, trr[l], trr[l + 1]));
    ps.add(lp + ".b", Tensor({1, trr[l + 1]}));
    add_norm(ps, lp + ".norm", trr[l + 1]);
  }

  ps.add("refine.theta_s", xavier(rng, d_frame, c.d_affinity));
  ps.add("refine.phi_s", xavier(rng, d_frame, c.d_affinity));
  ps.add("refine.theta_t", xavier(rng, c.d_model, c.d_affinity));
  ps.add("refine.phi_t", xavier(rng, c.d_model, c.d_affinity));

  ps.add("sum.1.w", xavier(rng, c.d_model, c.summary_hidden));
  add_norm(ps, "sum.1.norm", c.summary_hidden);
  ps.add("sum.2.w", xavier(rng, c.summary_hidden, 2));

  ps.add("recon.1.w", xavier(rng, c.d_model, c.d_obj));
  ps.add("recon.1.b", Tensor({1, c.d_obj}));
  ps.add("recon.2.w", xavier(rng, 2 * c.d_obj, c.d_obj));
  ps.add("recon.2.b", Tensor({1, c.d_obj}));
  return mp;
}

Var embed_objects(Tape& tape, ModelParams& p, Var objects) {
  if (objects.value().cols() != p.config.d_obj) {
    throw DimensionError("embed_objects: expected object width " + std::to_string(p.config.d_obj) + ", got " +
                         shape_str(objects.shape()));
  }
  Var h = linear(tape, p, "obj_emb", objects);
  return linear(tape, p, "mhca_emb", h);
}

Var fuse_query(Tape& tape, ModelParams& p, const QueryEmbedding& query) {
  const ModelConfig& c = p.config;
  if (query.mode == QueryMode::none) return tape.param(p["query.null"]);
  if (query.mode != c.query_mode) {
    throw ConfigError("fuse_query: model expects " + to_string(c.query_mode) + " queries, got " +
                      to_string(query.mode));
  }
  const std::size_t rows = c.query_rows(), width = c.query_width();
  if (query.vectors.rank() != 2 || query.vectors.dim(1) != width) {
    throw ConfigError("fuse_query: " + to_string(query.mode) + " vectors must be [rows x " + std::to_string(width) +
                      "], got " + shape_str(query.vectors.shape()));
  }
  // Zero-pad or truncate to the configured slot count.
  Tensor slots({rows, width});
  const std::size_t keep = std::min(rows, query.vectors.dim(0));
  for (std::size_t r = 0; r < keep; ++r)
    for (std::size_t j = 0; j < width; ++j) slots(r, j) = query.vectors(r, j);

  if (query.mode == QueryMode::sentence) {
    Var flat = tape.constant(slots.reshaped({1, rows * width}));
    return linear(tape, p, "query.sentence", flat);
  }
  Var words = ops::elu(linear(tape, p, "query.word_mlp", tape.constant(std::move(slots))));
  return linear(tape, p, "query.word_fuse", ops::reshape(words, {1, rows * width}));
}

Var mhca_fuse(Tape& tape, ModelParams& p, const std::string& prefix, Var query, Var nodes, Mask node_mask,
              Mask key_mask) {
  const ModelConfig& c = p.config;
  const bool batched = nodes.value().rank() == 3;
  Var x = batched ? nodes : ops::reshape(nodes, {1, nodes.value().dim(0), nodes.value().dim(1)});
  const std::size_t B = x.value().dim(0), n = x.value().dim(1), d = x.value().dim(2);
  if (n < 1) throw DimensionError("mhca_fuse: needs at least one node");

  std::vector<Var> heads;
  for (std::size_t h = 0; h < c.heads; ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    Var q = ops::matmul(query, tape.param(p[hp + ".q"]));                 // [1 x dh]
    Var k = ops::matmul(x, tape.param(p[hp + ".k"]));                     // [B x n x dh]
    Var v = ops::matmul(x, tape.param(p[hp + ".v"]));                     // [B x n x dh]
    Var logits = ops::reshape(ops::matmul(k, ops::transpose(q)), {B, n});  // [B x n]
    Var att = ops::row_softmax(logits, 1.0 / std::sqrt(static_cast<double>(c.d_head)), key_mask);
    Var ctx = ops::bmm(ops::reshape(att, {B, 1, n}), v);                   // [B x 1 x dh]
    heads.push_back(ops::reshape(ctx, {B, c.d_head}));
  }
  Var context = ops::matmul(ops::concat(heads, 1), tape.param(p[prefix + ".out"]));  // [B x d]
  // Normalize before the residual add: a per-channel standardization over
  // the nodes would cancel any vector broadcast to all of them.
  Var normed = norm(tape, p, prefix + ".norm", ops::reshape(x, {B * n, d}), node_mask);
  Var fused = ops::add_rows(ops::reshape(normed, {B, n, d}), context);
  return batched ? fused : ops::reshape(fused, {n, d});
}

Var build_spatial_graph(Var nodes, double lambda_o) {
  return ops::row_softmax(ops::bmm(nodes, nodes, true), lambda_o);
}

Var srr_forward(Tape& tape, ModelParams& p, Var objects, Var spatial_op, Mask node_mask) {
  const std::size_t layers = p.config.graph_layers;
  Var x = objects;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string lp = "srr." + std::to_string(l);
    Var h = ops::graph_conv(x, spatial_op, tape.param(p[lp + ".w"]), Activation::identity,
                            p.config.normalize_adjacency);
    const Shape s = h.value().shape();
    Var n = norm(tape, p, lp + ".norm", ops::reshape(h, {h.value().rows(), s.back()}), node_mask);
    x = ops::elu(ops::reshape(n, s));
  }
  return x;
}

Var frame_pool(Var z) { return ops::mean_rows(z); }

Tensor positional_encoding(std::size_t frames, std::size_t dim) {
  Tensor pe({frames, dim});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double expo = static_cast<double>(i - i % 2) / static_cast<double>(dim);
      const double angle = static_cast<double>(t) / std::pow(10000.0, expo);
      pe(t, i) = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

TemporalGraph build_temporal_graph(Tape& tape, ModelParams& p, Var query, Var frames, Mask frame_mask) {
  Var keys = frames;
  if (p.config.positional_encoding) {
    keys = ops::add(frames, tape.constant(positional_encoding(frames.value().dim(0), frames.value().dim(1))));
  }
  Var fhat = mhca_fuse(tape, p, "mhca_t", query, keys, frame_mask, frame_mask);
  Var adj = ops::row_softmax(ops::bmm(fhat, fhat, true), p.config.lambda_f, frame_mask);
  if (!frame_mask.empty()) adj = ops::mul_const(adj, outer_mask(frame_mask));
  return {fhat, adj};
}

Var trr_forward(Tape& tape, ModelParams& p, Var z, Var temporal_op, Var frames_hat, Mask node_mask) {
  const Tensor& zv = z.value();
  require_rank(zv, 3, "trr_forward");
  const std::size_t T = zv.dim(0), N = zv.dim(1);
  if (temporal_op.value().shape() != Shape{T, T} || frames_hat.value().shape() != Shape{T, zv.dim(2)}) {
    throw DimensionError("trr_forward: adjacency " + shape_str(temporal_op.shape()) + " / frame nodes " +
                         shape_str(frames_hat.shape()) + " do not match objects " + shape_str(zv.shape()));
  }
  Var x = z;
  for (std::size_t l = 0; l < p.config.graph_layers; ++l) {
    const std::string lp = "trr." + std::to_string(l);
    // The first layer propagates the language-guided frame nodes; deeper
    // layers propagate the pooled objects of their own input.
    Var frames = l == 0 ? frames_hat : frame_pool(x);
    Var message = ops::matmul(temporal_op, frames);  // [T x d]
    Var h = linear(tape, p, lp, ops::add_rows(x, message));
    const std::size_t d = h.value().dim(2);
    Var n = norm(tape, p, lp + ".norm", ops::reshape(h, {T * N, d}), node_mask);
    x = ops::elu(ops::reshape(n, {T, N, d}));
  }
  return x;
}

RefinementState init_refinement(Var spatial_init, Var temporal_init, std::size_t max_iterations,
                                std::vector<double> frame_mask) {
  RefinementState s;
  s.spatial_raw = s.spatial_init = spatial_init;
  s.temporal_raw = s.temporal_init = temporal_init;
  s.max_iterations = max_iterations;
  s.frame_mask = std::move(frame_mask);
  return s;
}

void refine_step(Tape& tape, ModelParams& p, RefinementState& state, Var frames, Var objects_prev) {
  if (state.iteration >= state.max_iterations) {
    throw StateError("refine_step: iteration " + std::to_string(state.iteration + 1) + " exceeds K=" +
                     std::to_string(state.max_iterations));
  }
  Var da = ops::sigmoid(
      ops::cosine_affinity(frames, tape.param(p["refine.theta_s"]), tape.param(p["refine.phi_s"])));
  if (!state.frame_mask.empty()) da = ops::mul_const(da, outer_mask(state.frame_mask));
  Var ds = ops::sigmoid(
      ops::cosine_affinity(objects_prev, tape.param(p["refine.theta_t"]), tape.param(p["refine.phi_t"])));
  state.temporal_raw = ops::add(state.temporal_raw, da);
  state.spatial_raw = ops::add(state.spatial_raw, ds);
  state.temporal_residuals.push_back(da);
  state.spatial_residuals.push_back(ds);
  ++state.iteration;
}

Var operational_spatial(const RefinementState& state) {
  return ops::clamp_row_normalize(state.spatial_raw, kAdjacencyFloor);
}

Var operational_temporal(const RefinementState& state) {
  return ops::clamp_row_normalize(state.temporal_raw, kAdjacencyFloor, state.frame_mask);
}

std::vector<std::size_t> keyframes_from_probs(const Tensor& probs, std::span<const double> valid) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < probs.dim(0); ++t) {
    if (!valid.empty() && valid[t] == 0.0) continue;
    if (probs(t, 1) > probs(t, 0)) out.push_back(t);  // ties stay background
  }
  return out;
}

SummaryScores summarize_head(Tape& tape, ModelParams& p, Var frame_nodes, Var temporal_op, Mask frame_mask) {
  const bool norm_adj = p.config.normalize_adjacency;
  Var h = ops::graph_conv(frame_nodes, temporal_op, tape.param(p["sum.1.w"]), Activation::identity, norm_adj);
  h = ops::relu(norm(tape, p, "sum.1.norm", h, frame_mask));
  Var probs = ops::graph_conv(h, temporal_op, tape.param(p["sum.2.w"]), Activation::softmax_rows, norm_adj);
  return {probs, keyframes_from_probs(probs.value(), frame_mask)};
}

Var reconstruct_features(Tape& tape, ModelParams& p, Var selected, const Tensor& originals) {
  if (originals.rank() != 2 || originals.dim(0) != selected.value().dim(0) ||
      originals.dim(1) != p.config.d_obj) {
    throw DimensionError("reconstruct: originals " + shape_str(originals.shape()) + " do not match selection " +
                         shape_str(selected.shape()));
  }
  Var decoded = ops::elu(linear(tape, p, "recon.1", selected));
  const Var parts[] = {decoded, tape.constant(originals)};
  return linear(tape, p, "recon.2", ops::concat(parts, 1));
}

ForwardResult forward(Tape& tape, ModelParams& p, const VideoInput& input) {
  const ModelConfig& c = p.config;
  const Tensor& obj = input.objects;
  if (obj.rank() != 3 || obj.dim(2) != c.d_obj) {
    throw DimensionError("forward: objects must be [T x N x " + std::to_string(c.d_obj) + "], got " +
                         shape_str(obj.shape()));
  }
  const std::size_t T = obj.dim(0), N = obj.dim(1);
  if (!input.valid.empty() && input.valid.size() != T) {
    throw DimensionError("forward: validity mask has " + std::to_string(input.valid.size()) + " entries for " +
                         std::to_string(T) + " frames");
  }
  const std::vector<double>& fmask = input.valid;
  const std::vector<double> omask = per_object_mask(fmask, N);

  ForwardResult r;
  Var q = fuse_query(tape, p, input.query);
  r.query = q;
  Var nodes = mhca_fuse(tape, p, "mhca_s", q, embed_objects(tape, p, tape.constant(obj)), omask);
  Var s0 = build_spatial_graph(nodes, c.lambda_o);

  // Initial pass: spatial reasoning, then the temporal graph built on it.
  Var z = srr_forward(tape, p, nodes, ops::clamp_row_normalize(s0, kAdjacencyFloor), omask);
  TemporalGraph tg = build_temporal_graph(tape, p, q, frame_pool(z), fmask);
  r.state = init_refinement(s0, tg.adjacency, c.iterations, fmask);
  Var a_op = operational_temporal(r.state);
  Var s_op = operational_spatial(r.state);
  r.diagnostics.spatial_ops.push_back(s_op.value());
  r.diagnostics.temporal_ops.push_back(a_op.value());
  Var zhat = trr_forward(tape, p, z, a_op, tg.frames_hat, omask);

  for (std::size_t k = 1; k <= c.iterations; ++k) {
    try {
      z = srr_forward(tape, p, zhat, s_op, omask);
      Var frames = frame_pool(z);
      tg = build_temporal_graph(tape, p, q, frames, fmask);
      refine_step(tape, p, r.state, frames, zhat);
      a_op = operational_temporal(r.state);
      s_op = operational_spatial(r.state);
      r.diagnostics.spatial_ops.push_back(s_op.value());
      r.diagnostics.temporal_ops.push_back(a_op.value());
      zhat = trr_forward(tape, p, z, a_op, tg.frames_hat, omask);
    } catch (const Error& e) {
      throw StateError("refinement iteration " + std::to_string(k) + ": " + e.what());
    }
  }

  r.spatial_final = s_op;
  r.temporal_final = a_op;
  r.frame_final = frame_pool(zhat);
  r.summary = summarize_head(tape, p, r.frame_final, a_op, fmask);
  return r;
}

}  // namespace videograph
