#include "videograph/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace videograph {
namespace {

// Rank-1 signals are treated as one column.
std::size_t signal_dim(const Tensor& x) { return x.rank() == 1 ? 1 : x.cols(); }
std::size_t signal_len(const Tensor& x) { return x.rank() == 1 ? x.size() : x.rows(); }

// Within-segment scatter for every (i, j) pair from prefix sums.
class ScatterTable {
 public:
  explicit ScatterTable(const Tensor& x) : T_(signal_len(x)), d_(signal_dim(x)), cost_((T_ + 1) * (T_ + 1), 0.0) {
    std::vector<double> s((T_ + 1) * d_, 0.0), q(T_ + 1, 0.0);
    for (std::size_t t = 0; t < T_; ++t) {
      double sq = 0.0;
      for (std::size_t k = 0; k < d_; ++k) {
        const double v = x[t * d_ + k];
        s[(t + 1) * d_ + k] = s[t * d_ + k] + v;
        sq += v * v;
      }
      q[t + 1] = q[t] + sq;
    }
    for (std::size_t i = 0; i < T_; ++i) {
      for (std::size_t j = i + 1; j <= T_; ++j) {
        double lin = 0.0;
        for (std::size_t k = 0; k < d_; ++k) {
          const double diff = s[j * d_ + k] - s[i * d_ + k];
          lin += diff * diff;
        }
        cost_[i * (T_ + 1) + j] = std::max(0.0, q[j] - q[i] - lin / static_cast<double>(j - i));
      }
    }
  }
  double operator()(std::size_t i, std::size_t j) const { return cost_[i * (T_ + 1) + j]; }

 private:
  std::size_t T_, d_;
  std::vector<double> cost_;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

double segment_scatter(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t d = signal_dim(x);
  if (end <= begin) return 0.0;
  std::vector<double> mean(d, 0.0);
  for (std::size_t t = begin; t < end; ++t)
    for (std::size_t k = 0; k < d; ++k) mean[k] += x[t * d + k] / static_cast<double>(end - begin);
  double s = 0.0;
  for (std::size_t t = begin; t < end; ++t)
    for (std::size_t k = 0; k < d; ++k) s += (x[t * d + k] - mean[k]) * (x[t * d + k] - mean[k]);
  return s;
}

double kts_objective(const Tensor& x, const SegmentSet& seg, double penalty) {
  double total = penalty * static_cast<double>(seg.size());
  for (std::size_t s = 0; s < seg.size(); ++s) total += segment_scatter(x, seg.begin(s), seg.end(s));
  return total;
}

SegmentSet kts_segment(const Tensor& x, std::size_t max_segments, double penalty, std::size_t min_length) {
  if (max_segments < 1) throw ConfigError("kts_segment: max_segments must be >= 1");
  if (min_length < 1) throw ConfigError("kts_segment: min_length must be >= 1");
  if (x.rank() > 2) throw DimensionError("kts_segment: signal must be [T] or [T x d]");
  const std::size_t T = signal_len(x);
  if (T < 1) throw DomainError("kts_segment: empty signal");

  SegmentSet out;
  out.frames = T;
  const std::size_t M = std::min(max_segments, std::max<std::size_t>(1, T / min_length));
  if (M == 1 || T < 2 * min_length) {
    out.starts = {0};
    return out;
  }
  const ScatterTable cost(x);
  constexpr double inf = std::numeric_limits<double>::infinity();
  // best[m][j]: m + 1 segments covering [0, j).
  std::vector<std::vector<double>> best(M, std::vector<double>(T + 1, inf));
  std::vector<std::vector<std::size_t>> from(M, std::vector<std::size_t>(T + 1, 0));
  for (std::size_t j = min_length; j <= T; ++j) best[0][j] = cost(0, j);
  for (std::size_t m = 1; m < M; ++m) {
    for (std::size_t j = (m + 1) * min_length; j <= T; ++j) {
      for (std::size_t i = m * min_length; i + min_length <= j; ++i) {
        if (best[m - 1][i] == inf) continue;
        const double v = best[m - 1][i] + cost(i, j);
        if (v < best[m][j]) {
          best[m][j] = v;
          from[m][j] = i;
        }
      }
    }
  }
  std::size_t chosen = 0;
  double chosen_v = inf;
  for (std::size_t m = 0; m < M; ++m) {
    if (best[m][T] == inf) continue;
    const double v = best[m][T] + penalty * static_cast<double>(m + 1);
    if (v < chosen_v) {
      chosen_v = v;
      chosen = m;
    }
  }
  std::vector<std::size_t> starts;
  std::size_t j = T;
  for (std::size_t m = chosen + 1; m-- > 0;) {
    const std::size_t i = m == 0 ? 0 : from[m][j];
    starts.push_back(i);
    j = i;
  }
  std::reverse(starts.begin(), starts.end());
  out.starts = std::move(starts);
  return out;
}

SegmentSet kts_segment(const Tensor& x, const KtsOptions& o) {
  const std::size_t T = signal_len(x);
  const std::size_t min_len = std::max<std::size_t>(1, o.min_length);
  const std::size_t max_seg = o.max_segments > 0 ? o.max_segments : std::max<std::size_t>(1, T / min_len);
  double penalty = o.penalty;
  if (penalty < 0.0) penalty = o.penalty_factor * segment_scatter(x, 0, T) / static_cast<double>(std::max<std::size_t>(T, 1));
  return kts_segment(x, max_seg, penalty, min_len);
}

std::vector<std::size_t> knapsack(std::span<const double> values, std::span<const std::size_t> weights,
                                  std::size_t budget) {
  if (values.size() != weights.size()) throw DimensionError("knapsack: values and weights differ in length");
  const std::size_t k = values.size();
  // best[i][w]: optimum over items i..k-1 with capacity w.
  std::vector<double> best((k + 1) * (budget + 1), 0.0);
  auto at = [&](std::size_t i, std::size_t w) -> double& { return best[i * (budget + 1) + w]; };
  for (std::size_t i = k; i-- > 0;) {
    for (std::size_t w = 0; w <= budget; ++w) {
      double v = at(i + 1, w);
      if (weights[i] <= w) v = std::max(v, values[i] + at(i + 1, w - weights[i]));
      at(i, w) = v;
    }
  }
  std::vector<std::size_t> picked;
  std::size_t w = budget;
  for (std::size_t i = 0; i < k; ++i) {
    if (weights[i] <= w && values[i] + at(i + 1, w - weights[i]) >= at(i + 1, w) - 1e-12) {
      picked.push_back(i);
      w -= weights[i];
    }
  }
  return picked;
}

std::vector<std::size_t> knapsack_select(const SegmentSet& segments, std::span<const double> scores,
                                         std::size_t budget_frames) {
  if (scores.size() != segments.frames) throw DimensionError("knapsack_select: scores do not match segmentation");
  std::vector<double> values;
  std::vector<std::size_t> weights;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    double sum = 0.0;
    for (std::size_t t = segments.begin(s); t < segments.end(s); ++t) sum += scores[t];
    values.push_back(sum);  // mean * length
    weights.push_back(segments.length(s));
  }
  return knapsack(values, weights, budget_frames);
}

std::size_t KeyshotSummary::selected_frames() const {
  return static_cast<std::size_t>(std::count(selection.begin(), selection.end(), 1));
}

KeyshotSummary keyshots_on_segments(std::span<const double> scores, const SegmentSet& seg, double budget_ratio,
                                    std::span<const std::uint32_t> picks, std::size_t frames_original) {
  const std::size_t T = scores.size();
  if (seg.frames != T) throw DimensionError("keyshots: segmentation covers " + std::to_string(seg.frames) +
                                            " frames, scores have " + std::to_string(T));
  if (!(budget_ratio >= 0.0 && budget_ratio <= 1.0)) throw DomainError("keyshots: budget ratio must lie in [0, 1]");
  for (double s : scores)
    if (!std::isfinite(s)) throw DomainError("keyshots: non-finite score");
  if (!picks.empty() && picks.size() != T) throw DimensionError("keyshots: picks do not match scores");
  const std::size_t orig = frames_original > 0 ? frames_original : (picks.empty() ? T : picks.back() + 1);
  for (std::size_t i = 0; i < picks.size(); ++i) {
    if ((i > 0 && picks[i] <= picks[i - 1]) || picks[i] >= orig) {
      throw DomainError("keyshots: picks must be strictly increasing and below the original frame count");
    }
  }
  auto to_orig = [&](std::size_t sampled) -> std::size_t {
    if (sampled == 0) return 0;
    if (sampled >= T) return orig;
    return picks.empty() ? sampled : picks[sampled];
  };

  KeyshotSummary out;
  out.segmentation = seg;
  out.budget_ratio = budget_ratio;
  out.segmentation.mean_scores.clear();
  std::vector<double> values;
  std::vector<std::size_t> weights;
  for (std::size_t s = 0; s < seg.size(); ++s) {
    double mean = 0.0;
    for (std::size_t t = seg.begin(s); t < seg.end(s); ++t) mean += scores[t];
    mean /= static_cast<double>(seg.length(s));
    out.segmentation.mean_scores.push_back(mean);
    weights.push_back(to_orig(seg.end(s)) - to_orig(seg.begin(s)));
  }
  // Segment means are min-max rescaled before packing so a positive affine
  // change of the scores cannot shift the trade-off between short and long
  // segments. Constant scores pack by length alone.
  const auto& means = out.segmentation.mean_scores;
  const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
  double span = *hi - *lo;
  if (span <= 1e-12 * std::max(1.0, std::abs(*hi))) span = 0.0;  // summation noise on flat scores
  for (std::size_t s = 0; s < seg.size(); ++s) {
    const double v = span > 0 ? (means[s] - *lo) / span : 0.0;
    values.push_back(v * static_cast<double>(weights[s]));
  }
  const auto budget = static_cast<std::size_t>(std::floor(budget_ratio * static_cast<double>(orig) + 1e-9));
  out.segments = knapsack(values, weights, budget);
  out.selection.assign(orig, 0);
  for (std::size_t s : out.segments)
    for (std::size_t f = to_orig(seg.begin(s)); f < to_orig(seg.end(s)); ++f) out.selection[f] = 1;
  return out;
}

KeyshotSummary scores_to_keyshots(std::span<const double> scores, const Tensor& signal, double budget_ratio,
                                  const KtsOptions& options, std::span<const std::uint32_t> picks,
                                  std::size_t frames_original) {
  Tensor x = signal;
  if (x.empty()) x = Tensor({scores.size(), 1}, std::vector<double>(scores.begin(), scores.end()));
  if (signal_len(x) != scores.size()) {
    throw DimensionError("scores_to_keyshots: signal has " + std::to_string(signal_len(x)) + " frames, scores " +
                         std::to_string(scores.size()));
  }
  return keyshots_on_segments(scores, kts_segment(x, options), budget_ratio, picks, frames_original);
}

KeyshotSummary summary_from_binary(std::span<const std::uint8_t> selection) {
  KeyshotSummary s;
  s.selection.assign(selection.begin(), selection.end());
  for (auto& v : s.selection) v = v ? 1 : 0;
  return s;
}

std::string to_string(Aggregation a) { return a == Aggregation::max ? "max" : "mean"; }

Aggregation parse_aggregation(const std::string& text) {
  if (text == "max") return Aggregation::max;
  if (text == "mean") return Aggregation::mean;
  throw ConfigError("unknown aggregation '" + text + "' (expected max or mean)");
}

UserScore prf_single(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) {
    throw DimensionError("prf: prediction has " + std::to_string(pred.size()) + " frames, groundtruth " +
                         std::to_string(gt.size()));
  }
  double overlap = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    np += pred[i] ? 1 : 0;
    ng += gt[i] ? 1 : 0;
    overlap += pred[i] && gt[i] ? 1 : 0;
  }
  UserScore u;
  u.precision = np > 0 ? overlap / np : 0.0;
  u.recall = ng > 0 ? overlap / ng : 0.0;
  u.f_score = u.precision + u.recall > 0 ? 2 * u.precision * u.recall / (u.precision + u.recall) : 0.0;
  return u;
}

EvalReport prf(const KeyshotSummary& pred, std::span<const KeyshotSummary> gts, Aggregation aggregation) {
  if (gts.empty()) throw DomainError("prf: no groundtruth summaries");
  EvalReport r;
  r.aggregation = aggregation;
  for (const auto& g : gts) r.per_user.push_back(prf_single(pred.selection, g.selection));
  if (aggregation == Aggregation::max) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < r.per_user.size(); ++i)
      if (r.per_user[i].f_score > r.per_user[best].f_score) best = i;
    r.precision = r.per_user[best].precision;
    r.recall = r.per_user[best].recall;
    r.f_score = r.per_user[best].f_score;
  } else {
    for (const auto& u : r.per_user) {
      r.precision += u.precision;
      r.recall += u.recall;
      r.f_score += u.f_score;
    }
    const double n = static_cast<double>(r.per_user.size());
    r.precision /= n;
    r.recall /= n;
    r.f_score /= n;
  }
  return r;
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

double tie_pairs(const std::vector<double>& sorted) {
  double total = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    total += t * (t - 1) / 2;
    i = j + 1;
  }
  return total;
}

// Merge sort counting inversions (pairs i < j with v[i] > v[j]).
double count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = (lo + hi) / 2;
  double inv = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += static_cast<double>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
  return inv;
}

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) throw DimensionError(std::string(what) + ": inputs differ in length");
  if (a.size() < 2) throw DomainError(std::string(what) + ": needs at least two values");
}

}  // namespace

Correlation kendall_tau(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b, "kendall_tau");
  const std::size_t n = a.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
    return a[i] != a[j] ? a[i] < a[j] : (b[i] != b[j] ? b[i] < b[j] : i < j);
  });
  std::vector<double> sa(n), sb(n);
  for (std::size_t i = 0; i < n; ++i) {
    sa[i] = a[idx[i]];
    sb[i] = b[idx[i]];
  }
  const double n0 = static_cast<double>(n) * static_cast<double>(n - 1) / 2;
  const double n1 = tie_pairs(sa);
  double n3 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && sa[j + 1] == sa[i] && sb[j + 1] == sb[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    n3 += t * (t - 1) / 2;
    i = j + 1;
  }
  std::vector<double> buf(n);
  const double swaps = count_inversions(sb, buf, 0, n);
  const double n2 = tie_pairs(sb);  // sb is sorted now
  const double denom = std::sqrt((n0 - n1) * (n0 - n2));
  if (n0 - n1 <= 0 || n0 - n2 <= 0) return {0.0, false};
  return {(n0 - n1 - n2 + n3 - 2 * swaps) / denom, true};
}

Correlation spearman_rho(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b, "spearman_rho");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va <= 0 || vb <= 0) return {0.0, false};
  return {cov / std::sqrt(va * vb), true};
}

void add_correlations(EvalReport& report, std::span<const double> predicted,
                      std::span<const std::vector<double>> annotations) {
  double tau = 0, rho = 0;
  std::size_t used = 0;
  for (const auto& ann : annotations) {
    const Correlation t = kendall_tau(predicted, ann);
    const Correlation r = spearman_rho(predicted, ann);
    if (!t.defined || !r.defined) continue;
    tau += t.value;
    rho += r.value;
    ++used;
  }
  report.correlation_defined = used > 0;
  report.kendall_tau = used ? tau / static_cast<double>(used) : 0.0;
  report.spearman_rho = used ? rho / static_cast<double>(used) : 0.0;
}

EvalReport average_reports(std::span<const EvalReport> reports) {
  EvalReport avg;
  avg.video_id = "average";
  if (reports.empty()) return avg;
  avg.aggregation = reports.front().aggregation;
  std::size_t corr = 0;
  for (const auto& r : reports) {
    avg.precision += r.precision;
    avg.recall += r.recall;
    avg.f_score += r.f_score;
    if (r.correlation_defined) {
      avg.kendall_tau += r.kendall_tau;
      avg.spearman_rho += r.spearman_rho;
      ++corr;
    }
  }
  const double n = static_cast<double>(reports.size());
  avg.precision /= n;
  avg.recall /= n;
  avg.f_score /= n;
  avg.correlation_defined = corr > 0;
  if (corr) {
    avg.kendall_tau /= static_cast<double>(corr);
    avg.spearman_rho /= static_cast<double>(corr);
  }
  return avg;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "video_id=" << video_id << "\n"
     << "aggregation=" << to_string(aggregation) << "\n"
     << "precision=" << fmt(precision) << "\n"
     << "recall=" << fmt(recall) << "\n"
     << "f_score=" << fmt(f_score) << "\n"
     << "kendall_tau=" << fmt(kendall_tau) << "\n"
     << "spearman_rho=" << fmt(spearman_rho) << "\n"
     << "correlation_defined=" << (correlation_defined ? 1 : 0) << "\n"
     << "users=" << per_user.size() << "\n";
  for (std::size_t i = 0; i < per_user.size(); ++i) {
    os << "user." << i << ".precision=" << fmt(per_user[i].precision) << "\n"
       << "user." << i << ".recall=" << fmt(per_user[i].recall) << "\n"
       << "user." << i << ".f_score=" << fmt(per_user[i].f_score) << "\n";
  }
  return os.str();
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["video_id"] = video_id;
  j["aggregation"] = to_string(aggregation);
  j["precision"] = precision;
  j["recall"] = recall;
  j["f_score"] = f_score;
  j["kendall_tau"] = kendall_tau;
  j["spearman_rho"] = spearman_rho;
  j["correlation_defined"] = correlation_defined;
  j["per_user"] = nlohmann::ordered_json::array();
  for (const auto& u : per_user) {
    j["per_user"].push_back({{"precision", u.precision}, {"recall", u.recall}, {"f_score", u.f_score}});
  }
  return j.dump(2);
}

DominanceResult dominance(const Tensor& s) {
  require_rank(s, 3, "dominance");
  const std::size_t T = s.dim(0), N = s.dim(1);
  if (s.dim(2) != N) throw DimensionError("dominance: spatial graphs must be square, got " + shape_str(s.shape()));
  DominanceResult r;
  r.scores = Tensor({T, N});
  r.degenerate.assign(T, 0);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> d(N, 0.0);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < N; ++i)
        if (i != n) d[n] += s(t, n, i);
    const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
    const double mn = *lo, mx = *hi;
    if (mx == mn) {
      r.degenerate[t] = 1;
      for (std::size_t n = 0; n < N; ++n) r.scores(t, n) = 0.5;
      continue;
    }
    for (std::size_t n = 0; n < N; ++n) r.scores(t, n) = (d[n] - mn) / (mx - mn);
  }
  return r;
}

}  // namespace videograph
