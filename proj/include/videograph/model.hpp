#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "videograph/autodiff.hpp"
#include "videograph/ops.hpp"

namespace videograph {

enum class QueryMode : std::uint8_t { none = 0, word = 1, sentence = 2 };

std::string to_string(QueryMode mode);
QueryMode parse_query_mode(const std::string& text);

/// Architecture hyperparameters. Defaults follow the three-layer network
/// configuration; desk-scale runs shrink the widths.
struct ModelConfig {
  std::size_t frames = 320;  // T, clip length used for training
  std::size_t objects = 16;  // N, objects per frame
  std::size_t d_obj = 2048;
  std::size_t d_embed = 1024;
  std::size_t d_model = 512;
  std::size_t heads = 4;
  std::size_t d_head = 256;
  std::size_t graph_layers = 3;
  std::size_t graph_hidden = 256;
  std::size_t summary_hidden = 256;
  std::size_t d_affinity = 256;
  std::size_t iterations = 5;  // K
  double lambda_o = 1.6;
  double lambda_f = 30.0;
  QueryMode query_mode = QueryMode::sentence;
  std::size_t words = 8;       // W
  std::size_t captions = 8;    // M
  std::size_t d_word = 128;
  std::size_t d_caption = 2048;
  bool positional_encoding = true;
  bool normalize_adjacency = true;

  void validate() const;
  /// Channel plan of the spatial stack: d_model -> hidden ... hidden.
  std::vector<std::size_t> srr_channels() const;
  /// Channel plan of the temporal stack: hidden ... hidden -> d_model.
  std::vector<std::size_t> trr_channels() const;
  std::size_t query_width() const { return query_mode == QueryMode::word ? d_word : d_caption; }
  std::size_t query_rows() const { return query_mode == QueryMode::word ? words : captions; }
};

/// Lower clamp applied before row-normalizing raw adjacencies.
inline constexpr double kAdjacencyFloor = 1e-6;

/// Learnable weights of every layer, keyed by layer name.
struct ModelParams {
  ModelConfig config;
  ParameterSet params;

  Parameter& operator[](const std::string& name) { return params[name]; }
  const Parameter& operator[](const std::string& name) const { return params[name]; }
};

/// Xavier-uniform weights, zero biases, unit norm scales.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

struct QueryEmbedding {
  QueryMode mode = QueryMode::none;
  Tensor vectors;  // [rows x width]; empty for mode none
};

/// Everything the network consumes for one (possibly padded) video.
struct VideoInput {
  Tensor objects;              // [T x N x d_obj]
  QueryEmbedding query;
  std::vector<double> valid;   // per-frame 0/1; empty means all valid
};

/// Raw accumulated adjacencies and their per-iteration residuals.
struct RefinementState {
  Var spatial_raw;   // [T x N x N]
  Var temporal_raw;  // [T x T]
  Var spatial_init;
  Var temporal_init;
  std::vector<Var> spatial_residuals;
  std::vector<Var> temporal_residuals;
  std::size_t iteration = 0;
  std::size_t max_iterations = 0;
  std::vector<double> frame_mask;  // empty means all frames valid
};

struct SummaryScores {
  Var probs;  // [T x 2] (background, keyframe)
  std::vector<std::size_t> keyframes;
};

struct ForwardDiagnostics {
  std::vector<Tensor> spatial_ops;   // operational S per iteration, [T x N x N]
  std::vector<Tensor> temporal_ops;  // operational A per iteration, [T x T]
};

struct ForwardResult {
  SummaryScores summary;
  RefinementState state;
  Var spatial_final;   // operational S^K
  Var temporal_final;  // operational A^K
  Var frame_final;     // pooled final frame nodes [T x d_model]
  Var query;           // fused query [1 x d_embed]
  ForwardDiagnostics diagnostics;
};

// Individual stages. Each takes the parameters registered on `tape`.

/// [.. x d_obj] -> [.. x d_model]: object FC layer then the MHCA embedding.
Var embed_objects(Tape& tape, ModelParams& p, Var objects);
Var fuse_query(Tape& tape, ModelParams& p, const QueryEmbedding& query);
/// Single-query multi-head cross-attention. The nodes are normalized over
/// the (unmasked) node axis, then the attended context is added to each.
/// `prefix` selects the parameter block ("mhca_s" or "mhca_t").
Var mhca_fuse(Tape& tape, ModelParams& p, const std::string& prefix, Var query, Var nodes,
              ops::Mask node_mask = {}, ops::Mask key_mask = {});
Var build_spatial_graph(Var nodes, double lambda_o);
Var srr_forward(Tape& tape, ModelParams& p, Var objects, Var spatial_op, ops::Mask node_mask = {});
Var frame_pool(Var z);
Tensor positional_encoding(std::size_t frames, std::size_t dim);

struct TemporalGraph {
  Var frames_hat;  // F-hat [T x d]
  Var adjacency;   // A [T x T]
};
TemporalGraph build_temporal_graph(Tape& tape, ModelParams& p, Var query, Var frames, ops::Mask frame_mask = {});
Var trr_forward(Tape& tape, ModelParams& p, Var z, Var temporal_op, Var frames_hat, ops::Mask node_mask = {});

RefinementState init_refinement(Var spatial_init, Var temporal_init, std::size_t max_iterations,
                                std::vector<double> frame_mask = {});
/// One refinement iteration: residuals from the current frame nodes and the
/// previous temporal-stage object nodes are added to the raw adjacencies.
void refine_step(Tape& tape, ModelParams& p, RefinementState& state, Var frames, Var objects_prev);
Var operational_spatial(const RefinementState& state);
Var operational_temporal(const RefinementState& state);

SummaryScores summarize_head(Tape& tape, ModelParams& p, Var frame_nodes, Var temporal_op,
                             ops::Mask frame_mask = {});
/// Frames whose keyframe probability strictly exceeds the background one.
std::vector<std::size_t> keyframes_from_probs(const Tensor& probs, std::span<const double> valid = {});

ForwardResult forward(Tape& tape, ModelParams& p, const VideoInput& input);

/// Decoder of the reconstruction branch: rows of `selected` [k x d_model]
/// with the matching original frame features [k x d_obj].
Var reconstruct_features(Tape& tape, ModelParams& p, Var selected, const Tensor& originals);

}  // namespace videograph
