#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "videograph/data_io.hpp"
#include "videograph/losses.hpp"
#include "videograph/model.hpp"
#include "videograph/pipeline.hpp"

namespace videograph {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 5;
  double lr = 1e-4;
  double lr_decay = 0.1;
  std::size_t decay_every = 80;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables
  std::uint64_t seed = 0;
  std::size_t clip_frames = 320;
  std::size_t validate_every = 1;

  void validate() const;
  /// lr * lr_decay^floor(epoch / decay_every), epochs counted from 0.
  double lr_at(std::size_t epoch) const;
};

/// Everything a run needs, serializable as key = value text.
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  LossWeights loss;
  EvalOptions eval;

  void validate() const;
  std::string to_text() const;
  /// Missing keys keep their defaults; unknown keys are errors. Loss
  /// weights not given explicitly follow the chosen mode's defaults.
  static ExperimentConfig parse(const std::string& text, const std::string& origin = "config");
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Applies one `key = value` override (same keys as the file).
  void set(const std::string& key, const std::string& value);
  std::uint64_t hash() const;  // FNV-1a of to_text()
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor> m, v;  // aligned with the parameter set order

  void init(const ParameterSet& params);
};

/// One bias-corrected adaptive-moment update of a flat parameter block;
/// `t` is the 1-based step number.
void adam_step(std::span<double> value, std::span<const double> grad, std::span<double> m, std::span<double> v,
               double lr, std::uint64_t t, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct StepInfo {
  bool applied = false;
  double grad_norm = 0.0;  // before clipping
  bool clipped = false;
  std::string diagnostic;  // why a step was rejected
};

/// Clips, then updates every parameter from its accumulated gradient.
/// A non-finite gradient rejects the whole step (nothing changes).
StepInfo adam_update(ParameterSet& params, AdamState& state, double lr, const TrainConfig& config);

struct Checkpoint {
  ExperimentConfig config;
  ModelParams params;
  AdamState adam;
  std::uint32_t epoch = 0;        // epochs completed
  std::string rng_state;          // shuffling engine, textual std form

  std::vector<std::uint8_t> encode() const;
  static Checkpoint decode(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean over training videos, before each step
  std::map<std::string, double> components;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double val_f = std::numeric_limits<double>::quiet_NaN();
  std::size_t rejected_steps = 0;
  std::size_t clipped_steps = 0;
  std::size_t warnings = 0;
};

struct Dataset {
  std::vector<FeatureSet> train, val, test;
};

struct TrainResult {
  Checkpoint final_state;
  Checkpoint best;         // best validation epoch; the final state without validation data
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
  std::vector<std::string> warnings;  // distinct loss warnings, first occurrence order
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Deterministic for a fixed config. Validation: mean F-score, ties broken by
/// lower loss (supervised)
/// or mean total loss (unsupervised) on dataset.val.
TrainResult train(const Dataset& data, const ExperimentConfig& config, const EpochCallback& on_epoch = {},
                  const Checkpoint* resume = nullptr);

/// Mean loss over videos without updating anything.
double mean_loss(ModelParams& params, const std::vector<FeatureSet>& videos, const ExperimentConfig& config,
                 LossReport* mean_report = nullptr);

/// History as a CSV table (one row per epoch).
std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace videograph
