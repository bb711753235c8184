#include "videograph/pipeline.hpp"

#include <algorithm>

namespace videograph {

std::vector<std::size_t> clip_indices(std::size_t frames, std::size_t clip) {
  std::vector<std::size_t> idx;
  if (clip == 0 || frames <= clip) {
    idx.resize(frames);
    for (std::size_t t = 0; t < frames; ++t) idx[t] = t;
    return idx;
  }
  idx.resize(clip);
  for (std::size_t i = 0; i < clip; ++i) idx[i] = i * frames / clip;
  return idx;
}

QueryEmbedding model_query(const FeatureSet& fs, const ModelConfig& model) {
  if (model.query_mode == QueryMode::none || fs.query.mode == QueryMode::none) return {};
  return fs.query;
}

PreparedVideo prepare_video(const FeatureSet& fs, const ModelConfig& model, std::size_t clip, LossMode mode,
                            const KtsOptions& kts) {
  fs.validate();
  if (fs.d_obj() != model.d_obj) {
    throw DimensionError("video '" + fs.video_id + "' has object width " + std::to_string(fs.d_obj()) +
                         ", layer 'obj_emb.w' expects " + std::to_string(model.d_obj));
  }
  const std::size_t T = fs.frames(), N = fs.objects_per_frame(), d = fs.d_obj();
  const std::vector<std::size_t> idx = clip_indices(T, clip);
  const std::size_t L = clip == 0 ? T : clip;

  PreparedVideo pv;
  pv.frame_index = idx;
  pv.input.query = model_query(fs, model);
  pv.input.objects = Tensor({L, N, d});
  pv.input.valid.assign(L, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(fs.objects.storage().begin() + static_cast<long>(idx[i] * N * d), N * d,
                pv.input.objects.storage().begin() + static_cast<long>(i * N * d));
    pv.input.valid[i] = 1.0;
  }
  if (idx.size() == L) pv.input.valid.clear();  // nothing padded

  if (mode == LossMode::unsupervised) return pv;
  if (fs.gt_binary.empty() && fs.gt_scores.empty()) {
    throw ConfigError("video '" + fs.video_id + "' has no groundtruth for supervised training");
  }
  std::vector<std::uint8_t> labels = fs.gt_binary;
  if (labels.empty()) labels = make_training_keyframes(fs.gt_scores, segmentation_signal(fs), kDefaultBudgetRatio, kts);
  std::vector<double> scores(T, 0.0);
  if (!fs.gt_scores.empty()) {
    for (const auto& u : fs.gt_scores)
      for (std::size_t t = 0; t < T; ++t) scores[t] += u[t] / static_cast<double>(fs.gt_scores.size());
  } else {
    for (std::size_t t = 0; t < T; ++t) scores[t] = labels[t];
  }
  pv.targets.labels.assign(L, 0);
  pv.targets.scores.assign(L, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    pv.targets.labels[i] = labels[idx[i]];
    pv.targets.scores[i] = std::clamp(scores[idx[i]], 0.0, 1.0);
  }
  return pv;
}

KeyshotSummary keyshots_for_scores(std::span<const double> scores, const FeatureSet& fs, const EvalOptions& options) {
  return scores_to_keyshots(scores, segmentation_signal(fs), options.budget_ratio, options.kts, fs.picks,
                            fs.frames_original);
}

Prediction predict(ModelParams& params, const FeatureSet& fs, const EvalOptions& options) {
  const PreparedVideo pv = prepare_video(fs, params.config, 0, LossMode::unsupervised, options.kts);
  Tape tape;
  const ForwardResult fr = forward(tape, params, pv.input);
  Prediction p;
  const Tensor& probs = fr.summary.probs.value();
  p.scores.resize(fs.frames());
  for (std::size_t t = 0; t < fs.frames(); ++t) p.scores[t] = probs(t, 1);
  p.keyframes = fr.summary.keyframes;
  p.summary = keyshots_for_scores(p.scores, fs, options);
  p.dominance = dominance(fr.spatial_final.value());
  return p;
}

EvalReport evaluate_prediction(const Prediction& pred, const FeatureSet& fs, const EvalOptions& options) {
  const auto gts = groundtruth_summaries(fs, options.budget_ratio, options.kts);
  EvalReport r = prf(pred.summary, gts, options.aggregation);
  r.video_id = fs.video_id;
  if (!fs.gt_scores.empty() && pred.scores.size() >= 2) add_correlations(r, pred.scores, fs.gt_scores);
  return r;
}

}  // namespace videograph
