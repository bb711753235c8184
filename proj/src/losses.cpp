#include "videograph/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace videograph {
namespace {

bool is_valid(std::span<const double> valid, std::size_t t) { return valid.empty() || valid[t] != 0.0; }

void warn(std::vector<std::string>* warnings, std::string msg) {
  if (warnings) warnings->push_back(std::move(msg));
}

void check_probs(const Tensor& probs, std::size_t n, std::span<const double> valid, const char* what) {
  if (probs.rank() != 2 || probs.dim(1) != 2) {
    throw DimensionError(std::string(what) + ": probabilities must be [T x 2], got " + shape_str(probs.shape()));
  }
  if (probs.dim(0) != n) {
    throw DimensionError(std::string(what) + ": " + std::to_string(n) + " targets for " +
                         std::to_string(probs.dim(0)) + " frames");
  }
  if (!valid.empty() && valid.size() != n) throw DimensionError(std::string(what) + ": mask length mismatch");
}

}  // namespace

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::supervised_binary:
      return "sup-bin";
    case LossMode::supervised_score:
      return "sup-score";
    case LossMode::unsupervised:
      return "unsup";
  }
  return "sup-bin";
}

LossMode parse_loss_mode(const std::string& text) {
  if (text == "sup-bin" || text == "supervised_binary") return LossMode::supervised_binary;
  if (text == "sup-score" || text == "supervised_score") return LossMode::supervised_score;
  if (text == "unsup" || text == "unsupervised") return LossMode::unsupervised;
  throw ConfigError("unknown loss mode '" + text + "' (expected sup-bin, sup-score or unsup)");
}

LossWeights LossWeights::defaults(LossMode mode) {
  LossWeights w;
  w.mode = mode;
  if (mode == LossMode::unsupervised) {
    w.alpha = 1e-3;
    w.beta = 10.0;
    w.gamma = 10.0;
  } else {
    w.alpha = 1e-4;
    w.beta = 0.1;
    w.gamma = 0.1;
  }
  w.rho = 5.0;
  return w;
}

void LossWeights::validate() const {
  if (alpha < 0 || beta < 0 || gamma < 0 || rho < 0) throw ConfigError("loss weights must be non-negative");
}

Var weighted_bce(Var probs, std::span<const int> labels, std::span<const double> valid,
                 std::vector<std::string>* warnings) {
  const Tensor& pv = probs.value();
  const std::size_t T = labels.size();
  check_probs(pv, T, valid, "weighted_bce");

  double count = 0.0, keyframes = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    if (!is_valid(valid, t)) continue;
    count += 1.0;
    keyframes += labels[t] != 0 ? 1.0 : 0.0;
  }
  if (count == 0.0) throw DomainError("weighted_bce: no valid frames");
  const double key_freq = keyframes / count;
  double w_key = kMedianFrequency / key_freq;
  double w_bg = kMedianFrequency / (1.0 - key_freq);
  if (keyframes == 0.0 || keyframes == count) {
    warn(warnings, "weighted_bce: labels contain a single class; using unit frame weights");
    w_key = w_bg = 1.0;
  }

  std::vector<double> dy(T, 0.0);
  double loss = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    if (!is_valid(valid, t)) continue;
    const double raw = pv(t, 1);
    const double y = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
    const bool key = labels[t] != 0;
    const double w = key ? w_key : w_bg;
    loss -= w * (key ? std::log(y) : std::log(1.0 - y));
    if (raw > kProbClamp && raw < 1.0 - kProbClamp) dy[t] = -w * (key ? 1.0 / y : -1.0 / (1.0 - y)) / count;
  }
  loss /= count;
  return probs.tape->record("weighted_bce", Tensor::scalar(loss), {probs}, [probs, dy](Tape& t, std::uint32_t self) {
    const double g = t.grad(self)[0];
    Tensor& gp = t.grad(probs);
    for (std::size_t i = 0; i < dy.size(); ++i) gp(i, 1) += g * dy[i];
  });
}

Var score_mse(Var probs, std::span<const double> scores, std::span<const double> valid) {
  const Tensor& pv = probs.value();
  const std::size_t T = scores.size();
  check_probs(pv, T, valid, "score_mse");
  double count = 0.0;
  for (std::size_t t = 0; t < T; ++t) count += is_valid(valid, t) ? 1.0 : 0.0;
  if (count == 0.0) throw DomainError("score_mse: no valid frames");
  std::vector<double> diff(T, 0.0);
  double loss = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    if (!is_valid(valid, t)) continue;
    diff[t] = pv(t, 1) - scores[t];
    loss += diff[t] * diff[t];
  }
  loss /= count;
  return probs.tape->record("score_mse", Tensor::scalar(loss), {probs},
                            [probs, diff, count](Tape& t, std::uint32_t self) {
                              const double g = t.grad(self)[0];
                              Tensor& gp = t.grad(probs);
                              for (std::size_t i = 0; i < diff.size(); ++i) gp(i, 1) += g * 2.0 * diff[i] / count;
                            });
}

double score_mse(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size()) {
    throw DimensionError("score_mse: length " + std::to_string(pred.size()) + " vs " + std::to_string(gt.size()));
  }
  if (pred.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - gt[i]) * (pred[i] - gt[i]);
  return s / static_cast<double>(pred.size());
}

Var sparsity_entropy(Var spatial_ops, Var temporal_op, double rho, std::span<const double> valid) {
  Var spatial = ops::entropy_offdiag(spatial_ops, valid);
  Var temporal = ops::entropy_offdiag(temporal_op, valid);
  return ops::add(spatial, ops::scale(temporal, rho));
}

Var reconstruction_loss(Var reconstructed, const Tensor& originals) {
  const Tensor& xv = reconstructed.value();
  if (xv.shape() != originals.shape()) {
    throw DimensionError("reconstruction_loss: " + shape_str(xv.shape()) + " vs " + shape_str(originals.shape()));
  }
  const std::size_t k = xv.dim(0);
  if (k == 0) return reconstructed.tape->constant(Tensor::scalar(0.0));
  double loss = 0.0;
  Tensor diff(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    diff[i] = xv[i] - originals[i];
    loss += diff[i] * diff[i];
  }
  loss /= static_cast<double>(k);
  return reconstructed.tape->record("reconstruction_loss", Tensor::scalar(loss), {reconstructed},
                                    [reconstructed, diff, k](Tape& t, std::uint32_t self) {
                                      const double g = t.grad(self)[0] * 2.0 / static_cast<double>(k);
                                      Tensor& gx = t.grad(reconstructed);
                                      for (std::size_t i = 0; i < diff.size(); ++i) gx[i] += g * diff[i];
                                    });
}

Var diversity(Var x, DiversityNorm norm, std::vector<std::string>* warnings) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "diversity");
  const std::size_t k = xv.dim(0), d = xv.dim(1);
  if (k < 2) {
    warn(warnings, "diversity: fewer than two selected frames; term is 0");
    return x.tape->constant(Tensor::scalar(0.0));
  }
  const double power = norm == DiversityNorm::squared ? 2.0 : 1.0;
  constexpr double eps = 1e-8;
  std::vector<double> norms(k), den(k);
  Tensor u({k, d});
  for (std::size_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += xv(i, j) * xv(i, j);
    norms[i] = std::sqrt(s);
    den[i] = std::pow(std::max(norms[i], eps), power);
    for (std::size_t j = 0; j < d; ++j) u(i, j) = xv(i, j) / den[i];
  }
  std::vector<double> total(d, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) total[j] += u(i, j);
  double value = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) value += u(i, j) * (total[j] - u(i, j));
  const double pairs = static_cast<double>(k * (k - 1));
  value /= pairs;

  return x.tape->record(
      "diversity", Tensor::scalar(value), {x},
      [x, u, total, norms, den, power, pairs, k, d](Tape& t, std::uint32_t self) {
        const double g = t.grad(self)[0];
        const Tensor& xv = t.value(x);
        Tensor& gx = t.grad(x);
        std::vector<double> gu(d);
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < d; ++j) gu[j] = g * 2.0 * (total[j] - u(i, j)) / pairs;
          if (norms[i] <= eps) {
            for (std::size_t j = 0; j < d; ++j) gx(i, j) += gu[j] / den[i];
            continue;
          }
          double xg = 0.0;
          for (std::size_t j = 0; j < d; ++j) xg += xv(i, j) * gu[j];
          const double tail = power * xg / (den[i] * norms[i] * norms[i]);
          for (std::size_t j = 0; j < d; ++j) gx(i, j) += gu[j] / den[i] - tail * xv(i, j);
        }
      });
}

Var total_loss(const LossParts& parts, const LossWeights& w, LossReport* report) {
  w.validate();
  const bool supervised = w.mode != LossMode::unsupervised;
  if (supervised && !parts.classification.valid()) {
    throw ConfigError("total_loss: supervised mode requires a classification term");
  }
  if (!parts.sparsity.valid() || !parts.diversity.valid() || !parts.reconstruction.valid()) {
    throw ConfigError("total_loss: sparsity, diversity and reconstruction terms are required");
  }
  Tape& tape = *parts.sparsity.tape;
  Var total = ops::add(ops::add(ops::scale(parts.sparsity, w.alpha), ops::scale(parts.diversity, w.beta)),
                       ops::scale(parts.reconstruction, w.gamma));
  if (supervised) total = ops::add(parts.classification, total);
  (void)tape;
  if (report) {
    report->components["sparsity"] = parts.sparsity.value()[0];
    report->components["diversity"] = parts.diversity.value()[0];
    report->components["reconstruction"] = parts.reconstruction.value()[0];
    if (supervised) report->components["classification"] = parts.classification.value()[0];
    report->total = total.value()[0];
  }
  return total;
}

std::vector<std::size_t> training_selection(const Tensor& probs, LossMode mode, std::span<const double> valid,
                                            double ratio) {
  std::vector<std::size_t> frames;
  for (std::size_t t = 0; t < probs.dim(0); ++t)
    if (is_valid(valid, t)) frames.push_back(t);
  if (mode != LossMode::unsupervised) {
    auto picked = keyframes_from_probs(probs, valid);
    if (!picked.empty()) return picked;
  }
  const auto budget = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(frames.size())));
  std::stable_sort(frames.begin(), frames.end(),
                   [&probs](std::size_t a, std::size_t b) { return probs(a, 1) > probs(b, 1); });
  frames.resize(std::min(budget, frames.size()));
  std::sort(frames.begin(), frames.end());
  return frames;
}

Tensor frame_means(const Tensor& objects) {
  require_rank(objects, 3, "frame_means");
  const std::size_t T = objects.dim(0), N = objects.dim(1), d = objects.dim(2);
  Tensor out({T, d});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t j = 0; j < d; ++j) out(t, j) += objects(t, n, j) / static_cast<double>(N);
  return out;
}

VideoLoss video_loss(Tape& tape, ModelParams& p, const VideoInput& input, const VideoTargets& targets,
                     const LossWeights& weights) {
  VideoLoss out;
  out.forward = forward(tape, p, input);
  const std::span<const double> valid = input.valid;
  const Var probs = out.forward.summary.probs;

  LossParts parts;
  if (weights.mode == LossMode::supervised_binary) {
    parts.classification = weighted_bce(probs, targets.labels, valid, &out.report.warnings);
  } else if (weights.mode == LossMode::supervised_score) {
    parts.classification = score_mse(probs, targets.scores, valid);
  }
  parts.sparsity = sparsity_entropy(out.forward.spatial_final, out.forward.temporal_final, weights.rho, valid);

  out.selection = training_selection(probs.value(), weights.mode, valid);
  const Tensor means = frame_means(input.objects);
  Tensor originals({out.selection.size(), means.dim(1)});
  for (std::size_t i = 0; i < out.selection.size(); ++i)
    for (std::size_t j = 0; j < means.dim(1); ++j) originals(i, j) = means(out.selection[i], j);

  if (out.selection.empty()) {
    out.report.warnings.push_back("reconstruction: empty selection; term is 0");
    parts.reconstruction = tape.constant(Tensor::scalar(0.0));
    parts.diversity = tape.constant(Tensor::scalar(0.0));
  } else {
    Var selected = ops::gather_rows(out.forward.frame_final, out.selection);
    Var recon = reconstruct_features(tape, p, selected, originals);
    parts.reconstruction = reconstruction_loss(recon, originals);
    parts.diversity = diversity(recon, weights.diversity_norm, &out.report.warnings);
  }
  out.total = total_loss(parts, weights, &out.report);
  return out;
}

}  // namespace videograph
