#pragma once

#include <map>
#include <string>
#include <vector>

#include "videograph/model.hpp"

namespace videograph {

enum class LossMode { supervised_binary, supervised_score, unsupervised };
enum class DiversityNorm { squared, plain };

std::string to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& text);

struct LossWeights {
  LossMode mode = LossMode::supervised_binary;
  double alpha = 1e-4;  // sparsity
  double beta = 0.1;    // diversity
  double gamma = 0.1;   // reconstruction
  double rho = 5.0;     // temporal vs spatial entropy balance
  DiversityNorm diversity_norm = DiversityNorm::squared;

  /// Published defaults for the given mode.
  static LossWeights defaults(LossMode mode);
  void validate() const;
};

struct LossReport {
  double total = 0.0;
  std::map<std::string, double> components;
  std::vector<std::string> warnings;
};

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kMedianFrequency = 0.5;
inline constexpr double kTrainingSelectionRatio = 0.15;

// Each loss records a scalar node. `valid` restricts frames (empty = all).

/// Class-balanced binary cross entropy on the keyframe column of probs.
Var weighted_bce(Var probs, std::span<const int> labels, std::span<const double> valid = {},
                 std::vector<std::string>* warnings = nullptr);
/// Mean squared error between the keyframe column of probs and scores.
Var score_mse(Var probs, std::span<const double> scores, std::span<const double> valid = {});
/// Plain mean squared error of two equal-length vectors (untaped).
double score_mse(std::span<const double> pred, std::span<const double> gt);
/// Off-diagonal entropy of the spatial stack plus rho times the temporal one.
Var sparsity_entropy(Var spatial_ops, Var temporal_op, double rho, std::span<const double> valid = {});
/// Mean squared row distance between reconstructed and original features.
Var reconstruction_loss(Var reconstructed, const Tensor& originals);
/// Mean pairwise x_i.x_j / (|x_i|^p |x_j|^p) over ordered pairs i != j.
Var diversity(Var x, DiversityNorm norm = DiversityNorm::squared, std::vector<std::string>* warnings = nullptr);

struct LossParts {
  Var classification;  // unset in unsupervised mode
  Var sparsity;
  Var diversity;
  Var reconstruction;
};

/// Weighted sum of the parts; returns the total node and fills `report`.
Var total_loss(const LossParts& parts, const LossWeights& weights, LossReport* report = nullptr);

/// Frames used by the reconstruction/diversity terms: the predicted
/// keyframes in supervised modes (top-ratio fallback when empty), top-ratio
/// by keyframe probability otherwise. Ties resolve to the earlier frame.
std::vector<std::size_t> training_selection(const Tensor& probs, LossMode mode, std::span<const double> valid = {},
                                            double ratio = kTrainingSelectionRatio);

/// Per-frame mean of the raw object features: [T x N x d] -> [T x d].
Tensor frame_means(const Tensor& objects);

struct VideoTargets {
  std::vector<int> labels;                // supervised_binary
  std::vector<double> scores;             // supervised_score, in [0, 1]
};

/// Forward pass plus every loss term for one video.
struct VideoLoss {
  ForwardResult forward;
  Var total;
  LossReport report;
  std::vector<std::size_t> selection;
};

VideoLoss video_loss(Tape& tape, ModelParams& p, const VideoInput& input, const VideoTargets& targets,
                     const LossWeights& weights);

}  // namespace videograph
