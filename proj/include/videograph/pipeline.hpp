#pragma once

#include <vector>

#include "videograph/data_io.hpp"
#include "videograph/eval.hpp"
#include "videograph/losses.hpp"
#include "videograph/model.hpp"

namespace videograph {

/// Frame indices for a fixed-length clip: evenly spaced when the video is
/// longer than `clip`, all frames otherwise (the rest is padding).
std::vector<std::size_t> clip_indices(std::size_t frames, std::size_t clip);

/// Network input and targets for one video, clipped or zero-padded to
/// `clip` frames (0 keeps every frame). Padded frames are masked out.
struct PreparedVideo {
  VideoInput input;
  VideoTargets targets;
  std::vector<std::size_t> frame_index;  // source frame of each valid clip frame
};

PreparedVideo prepare_video(const FeatureSet& fs, const ModelConfig& model, std::size_t clip, LossMode mode,
                            const KtsOptions& kts = {});

/// Query handed to the network: the video's own embedding, or the null
/// query when the model or the file has none.
QueryEmbedding model_query(const FeatureSet& fs, const ModelConfig& model);

struct EvalOptions {
  double budget_ratio = kDefaultBudgetRatio;
  KtsOptions kts;
  Aggregation aggregation = Aggregation::max;
};

struct Prediction {
  std::vector<double> scores;            // keyframe probability per sampled frame
  std::vector<std::size_t> keyframes;    // argmax keyframes
  KeyshotSummary summary;                // over original frames
  DominanceResult dominance;             // from the final spatial graphs
};

/// Full-length inference on one video.
Prediction predict(ModelParams& params, const FeatureSet& fs, const EvalOptions& options = {});
/// F-score against the video's groundtruth plus rank correlations when
/// user scores exist.
EvalReport evaluate_prediction(const Prediction& pred, const FeatureSet& fs, const EvalOptions& options = {});

/// Keyshots from arbitrary per-frame scores on the video's own segmentation
/// signal (used by the random baseline).
KeyshotSummary keyshots_for_scores(std::span<const double> scores, const FeatureSet& fs, const EvalOptions& options);

}  // namespace videograph
