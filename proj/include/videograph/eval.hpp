#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "videograph/tensor.hpp"

namespace videograph {

/// Contiguous partition of [0, frames).
struct SegmentSet {
  std::size_t frames = 0;
  std::vector<std::size_t> starts;  // first frame of each segment; starts[0] == 0
  std::vector<double> mean_scores;  // filled by scores_to_keyshots

  std::size_t size() const { return starts.size(); }
  std::size_t begin(std::size_t s) const { return starts[s]; }
  std::size_t end(std::size_t s) const { return s + 1 < starts.size() ? starts[s + 1] : frames; }
  std::size_t length(std::size_t s) const { return end(s) - begin(s); }
};

struct KtsOptions {
  std::size_t max_segments = 0;  // 0: frames / min_length
  double penalty = -1.0;         // < 0: penalty_factor * total scatter / frames
  double penalty_factor = 0.5;
  std::size_t min_length = 2;
};

/// Sum over segments of squared distances to the segment mean.
double segment_scatter(const Tensor& x, std::size_t begin, std::size_t end);
/// Exact change-point DP: minimizes total within-segment scatter plus
/// penalty * (#segments). `x` is [T] or [T x d]. Ties prefer fewer segments
/// and earlier boundaries.
SegmentSet kts_segment(const Tensor& x, std::size_t max_segments, double penalty, std::size_t min_length = 2);
SegmentSet kts_segment(const Tensor& x, const KtsOptions& options);
double kts_objective(const Tensor& x, const SegmentSet& seg, double penalty);

/// 0/1 knapsack maximizing sum(values) under sum(weights) <= budget; on
/// equal value the lower-indexed item is kept. Returns ascending indices.
std::vector<std::size_t> knapsack(std::span<const double> values, std::span<const std::size_t> weights,
                                  std::size_t budget);
/// Segment selection: value = mean score * length, weight = length.
std::vector<std::size_t> knapsack_select(const SegmentSet& segments, std::span<const double> scores,
                                         std::size_t budget_frames);

inline constexpr double kDefaultBudgetRatio = 0.15;

struct KeyshotSummary {
  std::vector<std::uint8_t> selection;  // per original frame
  std::vector<std::size_t> segments;    // selected segment ids
  SegmentSet segmentation;              // over sampled frames
  double budget_ratio = kDefaultBudgetRatio;

  std::size_t selected_frames() const;
};

/// Segments `signal` (frame features, or the scores themselves when empty),
/// averages scores per segment, min-max rescales those means, and packs
/// segments into floor(budget_ratio * frames_original) original frames. `picks` maps
/// sampled to original frames (empty: identity).
KeyshotSummary scores_to_keyshots(std::span<const double> scores, const Tensor& signal, double budget_ratio,
                                  const KtsOptions& options = {}, std::span<const std::uint32_t> picks = {},
                                  std::size_t frames_original = 0);
/// Same packing on a fixed segmentation.
KeyshotSummary keyshots_on_segments(std::span<const double> scores, const SegmentSet& segments,
                                    double budget_ratio, std::span<const std::uint32_t> picks = {},
                                    std::size_t frames_original = 0);
/// Wraps a binary per-frame vector as a summary.
KeyshotSummary summary_from_binary(std::span<const std::uint8_t> selection);

enum class Aggregation { max, mean };
std::string to_string(Aggregation a);
Aggregation parse_aggregation(const std::string& text);

struct UserScore {
  double precision = 0.0, recall = 0.0, f_score = 0.0;
};

UserScore prf_single(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

struct Correlation {
  double value = 0.0;
  bool defined = true;  // false for a constant input
};

Correlation kendall_tau(std::span<const double> a, std::span<const double> b);
Correlation spearman_rho(std::span<const double> a, std::span<const double> b);
/// Average ranks (1-based); ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

struct EvalReport {
  std::string video_id;
  double precision = 0.0, recall = 0.0, f_score = 0.0;
  double kendall_tau = 0.0, spearman_rho = 0.0;
  bool correlation_defined = false;
  Aggregation aggregation = Aggregation::max;
  std::vector<UserScore> per_user;

  std::string to_text() const;
  std::string to_json() const;
};

/// F-score protocol: per user P/R/F, aggregated by max (best user) or mean.
EvalReport prf(const KeyshotSummary& pred, std::span<const KeyshotSummary> gts, Aggregation aggregation);
/// Rank correlations averaged over annotators; sets correlation_defined when
/// at least one annotator gives a defined value.
void add_correlations(EvalReport& report, std::span<const double> predicted,
                      std::span<const std::vector<double>> annotations);

/// Averages of several per-video reports.
EvalReport average_reports(std::span<const EvalReport> reports);

struct DominanceResult {
  Tensor scores;                    // [T x N], per-frame min-max normalized
  std::vector<std::uint8_t> degenerate;  // per frame: max == min
};

/// d_{t,n} = sum_{i != n} s_{t,n,i}, normalized within each frame.
DominanceResult dominance(const Tensor& spatial_ops);

}  // namespace videograph
