#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "videograph/eval.hpp"
#include "videograph/model.hpp"

namespace videograph {

/// One video's extracted features plus optional groundtruth. Float payloads
/// are stored as f32 on disk.
struct FeatureSet {
  std::string video_id;  // not stored; taken from the file stem on read
  std::uint32_t frames_original = 0;
  std::vector<std::uint32_t> picks;        // original frame of each sampled frame
  Tensor objects;                          // [T x N x d_obj]
  std::vector<std::uint16_t> class_ids;    // T * N
  std::vector<std::string> class_names;
  std::vector<float> confidences;          // optional, T * N, descending within a frame
  QueryEmbedding query;
  std::vector<std::uint8_t> gt_binary;           // optional, per sampled frame
  std::vector<std::vector<double>> gt_scores;    // optional, one vector per user

  std::size_t frames() const { return picks.size(); }
  std::size_t objects_per_frame() const { return objects.rank() == 3 ? objects.dim(1) : 0; }
  std::size_t d_obj() const { return objects.rank() == 3 ? objects.dim(2) : 0; }
  void validate() const;  // throws DomainError / DimensionError
};

inline constexpr std::uint16_t kContainerVersion = 1;

std::vector<std::uint8_t> encode_features(const FeatureSet& fs);
/// `origin` only labels error messages.
FeatureSet decode_features(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");
void write_features(const FeatureSet& fs, const std::filesystem::path& path);
FeatureSet read_features(const std::filesystem::path& path);

struct WordQuerySelection {
  std::vector<std::string> words;
  std::vector<std::size_t> counts;
  bool short_of_request = false;  // fewer distinct classes than requested
};

/// Top-W classes by detection count over all frames; ties alphabetical.
WordQuerySelection select_word_queries(const FeatureSet& fs, std::size_t W);

/// Averages user score vectors, converts them to keyshots on `signal`
/// (empty: the averaged scores) and returns the selected frames as 0/1.
std::vector<std::uint8_t> make_training_keyframes(const std::vector<std::vector<double>>& user_scores,
                                                  const Tensor& signal, double budget_ratio = kDefaultBudgetRatio,
                                                  const KtsOptions& kts = {});

struct SyntheticSpec {
  std::size_t frames = 64;
  std::size_t objects = 6;
  std::size_t d_obj = 16;
  std::size_t n_events = 4;
  double keyframe_ratio = 0.15;
  double noise_sigma = 0.1;
  std::uint64_t seed = 7;
  std::size_t frame_stride = 1;  // original frames per sampled frame
  std::size_t users = 1;         // score annotators; user 0 is exact
  QueryMode query_mode = QueryMode::word;
  std::size_t words = 4;
  std::size_t d_word = 8;
  std::size_t captions = 2;
  std::size_t d_caption = 12;

  void validate() const;  // ConfigError
};

/// Planted dataset: each video is a sequence of event blocks. Inside a block
/// a short run of frames (randomly placed, at least two frames from either
/// edge) sits exactly on the event prototype and the rest drifts toward a
/// distractor. The runs across all events form the planted keyframe set,
/// ceil(ratio * T) frames; scores are the cosine of a frame's noiseless
/// center to its prototype. `events`, if given, receives each frame's
/// latent event id.
FeatureSet generate_synthetic(const SyntheticSpec& spec, std::size_t video_index,
                              std::vector<std::size_t>* events = nullptr);

/// Frame mean of the object features, [T x d_obj]; the default KTS signal.
Tensor segmentation_signal(const FeatureSet& fs);

/// Per-original-frame groundtruth summaries: the binary labels when present,
/// else one keyshot summary per user score vector.
std::vector<KeyshotSummary> groundtruth_summaries(const FeatureSet& fs, double budget_ratio = kDefaultBudgetRatio,
                                                  const KtsOptions& kts = {});
/// Expands a per-sampled-frame 0/1 vector to original frames through picks
/// (each sampled frame covers up to the next pick).
std::vector<std::uint8_t> expand_to_original(std::span<const std::uint8_t> sampled, const FeatureSet& fs);

enum class SplitSetting { standard, augment, transfer };
std::string to_string(SplitSetting s);
SplitSetting parse_split_setting(const std::string& text);

struct SplitConfig {
  SplitSetting setting = SplitSetting::standard;
  std::size_t round = 0;
  std::vector<std::string> train, val, test;

  void validate() const;  // lists pairwise disjoint
  std::string to_text() const;
  static SplitConfig parse(const std::string& text);
  static SplitConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Informational key=value file next to a container (title, fps, users, ...).
using Metadata = std::map<std::string, std::string>;
std::filesystem::path metadata_path(const std::filesystem::path& container);
void write_metadata(const std::filesystem::path& container, const Metadata& meta);
Metadata read_metadata(const std::filesystem::path& container);

/// key = value lines; '#' starts a comment. Shared by config-style files.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace videograph
