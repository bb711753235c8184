#include "videograph/data_io.hpp"
#include "videograph/losses.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace videograph {
namespace {

static_assert(std::endian::native == std::endian::little, "container IO assumes a little-endian host");

constexpr char kMagic[4] = {'V', 'G', 'F', '1'};
constexpr std::uint8_t kHasBinary = 1, kHasScores = 2, kHasConfidences = 4;

class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_f32(double v) { put(static_cast<float>(v)); }
  void put_string(const std::string& s) {
    if (s.size() > 0xFFFF) throw DomainError("container: string longer than 65535 bytes");
    put(static_cast<std::uint16_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> bytes;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> b, std::string origin) : b_(b), origin_(std::move(origin)) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, b_.data() + at_, sizeof(T));
    at_ += sizeof(T);
    return v;
  }
  double get_f32(const char* what) {
    const float f = get<float>(what);
    if (!std::isfinite(f)) fail(std::string("non-finite value in ") + what, at_ - 4);
    return f;
  }
  std::string get_string(const char* what) {
    const auto n = get<std::uint16_t>(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + at_), n);
    at_ += n;
    return s;
  }
  void need(std::size_t n, const char* what) const {
    if (b_.size() - at_ < n) fail(std::string("truncated while reading ") + what, at_);
  }
  [[noreturn]] void fail(const std::string& what, std::size_t offset) const {
    throw ParseError(origin_ + ": " + what, offset);
  }
  std::size_t offset() const { return at_; }
  std::size_t size() const { return b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::string origin_;
  std::size_t at_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large files.
  std::size_t done = 0;
  while (done < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - done, 1u << 30);
    crc = crc32(crc, bytes.data() + done, static_cast<uInt>(n));
    done += n;
  }
  return static_cast<std::uint32_t>(crc);
}

template <class Limit>
void check_fits(std::size_t v, const char* what) {
  if (v > std::numeric_limits<Limit>::max()) {
    throw DomainError(std::string("container: ") + what + " = " + std::to_string(v) + " does not fit the header");
  }
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void FeatureSet::validate() const {
  const std::size_t T = frames();
  if (T == 0) throw DomainError("feature set '" + video_id + "' has no frames");
  if (objects.rank() != 3 || objects.dim(0) != T) {
    throw DimensionError("feature set '" + video_id + "': objects must be [T x N x d] with T = " + std::to_string(T) +
                         ", got " + shape_str(objects.shape()));
  }
  for (std::size_t t = 0; t < T; ++t) {
    if (t > 0 && picks[t] <= picks[t - 1]) throw DomainError("feature set '" + video_id + "': picks not increasing");
  }
  if (picks.back() >= frames_original) {
    throw DomainError("feature set '" + video_id + "': pick " + std::to_string(picks.back()) +
                      " beyond original frame count " + std::to_string(frames_original));
  }
  const std::size_t TN = T * objects_per_frame();
  if (class_ids.size() != TN) throw DimensionError("feature set '" + video_id + "': class_ids must have T*N entries");
  for (auto c : class_ids)
    if (c >= class_names.size()) throw DomainError("feature set '" + video_id + "': class id out of range");
  if (!confidences.empty()) {
    if (confidences.size() != TN) throw DimensionError("feature set '" + video_id + "': confidences must have T*N entries");
    const std::size_t N = objects_per_frame();
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t n = 1; n < N; ++n)
        if (confidences[t * N + n] > confidences[t * N + n - 1]) {
          throw DomainError("feature set '" + video_id + "': objects of frame " + std::to_string(t) +
                            " are not sorted by descending confidence");
        }
  }
  if (query.mode == QueryMode::none ? !query.vectors.empty() : query.vectors.rank() != 2) {
    throw DimensionError("feature set '" + video_id + "': query matrix does not match its mode");
  }
  if (!gt_binary.empty() && gt_binary.size() != T) throw DimensionError("feature set '" + video_id + "': gt_binary length != T");
  for (const auto& u : gt_scores)
    if (u.size() != T) throw DimensionError("feature set '" + video_id + "': gt score vector length != T");
  if (!objects.all_finite()) throw DomainError("feature set '" + video_id + "': non-finite object feature");
}

std::vector<std::uint8_t> encode_features(const FeatureSet& fs) {
  fs.validate();
  const std::size_t T = fs.frames(), N = fs.objects_per_frame(), d = fs.d_obj();
  const std::size_t qr = fs.query.vectors.empty() ? 0 : fs.query.vectors.dim(0);
  const std::size_t qd = fs.query.vectors.empty() ? 0 : fs.query.vectors.dim(1);
  check_fits<std::uint32_t>(T, "T");
  check_fits<std::uint16_t>(N, "N");
  check_fits<std::uint16_t>(d, "d_obj");
  check_fits<std::uint16_t>(qr, "query_rows");
  check_fits<std::uint16_t>(qd, "query_dim");
  check_fits<std::uint16_t>(fs.class_names.size(), "class count");
  check_fits<std::uint16_t>(fs.gt_scores.size(), "user count");

  ByteWriter w;
  for (char c : kMagic) w.put(c);
  w.put(kContainerVersion);
  w.put(static_cast<std::uint32_t>(T));
  w.put(fs.frames_original);
  w.put(static_cast<std::uint16_t>(N));
  w.put(static_cast<std::uint16_t>(d));
  w.put(static_cast<std::uint8_t>(fs.query.mode));
  w.put(static_cast<std::uint16_t>(qr));
  w.put(static_cast<std::uint16_t>(qd));
  for (auto p : fs.picks) w.put(p);
  for (double v : fs.objects.storage()) w.put_f32(v);
  for (auto c : fs.class_ids) w.put(c);
  w.put(static_cast<std::uint16_t>(fs.class_names.size()));
  for (const auto& name : fs.class_names) w.put_string(name);
  for (double v : fs.query.vectors.storage()) w.put_f32(v);

  std::uint8_t flags = 0;
  if (!fs.gt_binary.empty()) flags |= kHasBinary;
  if (!fs.gt_scores.empty()) flags |= kHasScores;
  if (!fs.confidences.empty()) flags |= kHasConfidences;
  w.put(flags);
  for (auto b : fs.gt_binary) w.put(static_cast<std::uint8_t>(b ? 1 : 0));
  if (flags & kHasScores) {
    w.put(static_cast<std::uint16_t>(fs.gt_scores.size()));
    for (const auto& u : fs.gt_scores)
      for (double v : u) w.put_f32(v);
  }
  for (float c : fs.confidences) w.put(c);
  w.put(crc_of(w.bytes));
  return std::move(w.bytes);
}

FeatureSet decode_features(std::span<const std::uint8_t> bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  for (char c : kMagic)
    if (r.get<char>("magic") != c) r.fail("bad magic (expected VGF1)", 0);
  const auto version = r.get<std::uint16_t>("version");
  if (version != kContainerVersion) r.fail("unsupported version " + std::to_string(version), 4);
  const std::size_t T = r.get<std::uint32_t>("T");
  if (T == 0) r.fail("header declares T = 0", 6);
  FeatureSet fs;
  fs.frames_original = r.get<std::uint32_t>("T_original");
  const std::size_t N = r.get<std::uint16_t>("N");
  if (N == 0) r.fail("header declares N = 0", 14);
  const std::size_t d = r.get<std::uint16_t>("d_obj");
  if (d == 0) r.fail("header declares d_obj = 0", 16);
  const auto mode = r.get<std::uint8_t>("query_mode");
  if (mode > 2) r.fail("unknown query mode " + std::to_string(mode), 18);
  const std::size_t qr = r.get<std::uint16_t>("query_rows");
  const std::size_t qd = r.get<std::uint16_t>("query_dim");
  if ((mode == 0) != (qr == 0 || qd == 0) || (qr == 0) != (qd == 0)) r.fail("query shape does not match query mode", 19);

  // Check the fixed-size payload up front so a lying header fails before allocating.
  const double payload = static_cast<double>(T) * (4.0 + static_cast<double>(N) * (4.0 * static_cast<double>(d) + 2.0));
  if (payload > static_cast<double>(r.size() - r.offset())) r.fail("truncated: header promises more payload than the file holds", r.offset());
  fs.picks.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t at = r.offset();
    fs.picks[t] = r.get<std::uint32_t>("picks");
    if ((t > 0 && fs.picks[t] <= fs.picks[t - 1]) || fs.picks[t] >= fs.frames_original) {
      r.fail("picks must be strictly increasing and below T_original", at);
    }
  }
  fs.objects = Tensor({T, N, d});
  for (double& v : fs.objects.storage()) v = r.get_f32("objects");
  fs.class_ids.resize(T * N);
  for (auto& c : fs.class_ids) c = r.get<std::uint16_t>("class_ids");
  const std::size_t ids_at = r.offset() - fs.class_ids.size() * 2;
  const std::size_t classes = r.get<std::uint16_t>("class count");
  for (std::size_t i = 0; i < classes; ++i) fs.class_names.push_back(r.get_string("class table"));
  for (std::size_t i = 0; i < fs.class_ids.size(); ++i)
    if (fs.class_ids[i] >= classes) r.fail("class id " + std::to_string(fs.class_ids[i]) + " outside class table", ids_at + 2 * i);
  fs.query.mode = static_cast<QueryMode>(mode);
  if (qr > 0) {
    r.need(qr * qd * 4, "query matrix");
    fs.query.vectors = Tensor({qr, qd});
    for (double& v : fs.query.vectors.storage()) v = r.get_f32("query matrix");
  }
  const std::size_t flag_at = r.offset();
  const auto flags = r.get<std::uint8_t>("gt flags");
  if (flags & ~(kHasBinary | kHasScores | kHasConfidences)) r.fail("unknown groundtruth flags", flag_at);
  if (flags & kHasBinary) {
    fs.gt_binary.resize(T);
    for (auto& b : fs.gt_binary) {
      const std::size_t at = r.offset();
      b = r.get<std::uint8_t>("gt_binary");
      if (b > 1) r.fail("gt_binary entries must be 0 or 1", at);
    }
  }
  if (flags & kHasScores) {
    const std::size_t users = r.get<std::uint16_t>("user count");
    if (users == 0) r.fail("score block with zero users", r.offset() - 2);
    r.need(users * T * 4, "gt scores");
    fs.gt_scores.assign(users, std::vector<double>(T));
    for (auto& u : fs.gt_scores)
      for (double& v : u) v = r.get_f32("gt scores");
  }
  if (flags & kHasConfidences) {
    fs.confidences.resize(T * N);
    for (float& c : fs.confidences) c = static_cast<float>(r.get_f32("confidences"));
  }
  const std::size_t crc_at = r.offset();
  const auto stored = r.get<std::uint32_t>("checksum");
  if (r.offset() != r.size()) r.fail("trailing bytes after checksum", r.offset());
  if (stored != crc_of(bytes.first(crc_at))) r.fail("checksum mismatch", crc_at);
  try {
    fs.validate();
  } catch (const Error& e) {
    r.fail(e.what(), 0);
  }
  return fs;
}

void write_features(const FeatureSet& fs, const std::filesystem::path& path) {
  write_binary_file(path, encode_features(fs));
}

FeatureSet read_features(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  FeatureSet fs = decode_features(bytes, path.string());
  fs.video_id = path.stem().string();
  return fs;
}

WordQuerySelection select_word_queries(const FeatureSet& fs, std::size_t W) {
  std::vector<std::size_t> counts(fs.class_names.size(), 0);
  for (auto c : fs.class_ids) {
    if (c >= counts.size()) throw DomainError("select_word_queries: class id outside class table");
    ++counts[c];
  }
  std::vector<std::size_t> order;
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] > 0) order.push_back(c);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return counts[a] != counts[b] ? counts[a] > counts[b] : fs.class_names[a] < fs.class_names[b];
  });
  WordQuerySelection out;
  out.short_of_request = order.size() < W;
  for (std::size_t i = 0; i < std::min(W, order.size()); ++i) {
    out.words.push_back(fs.class_names[order[i]]);
    out.counts.push_back(counts[order[i]]);
  }
  return out;
}

std::vector<std::uint8_t> make_training_keyframes(const std::vector<std::vector<double>>& user_scores,
                                                  const Tensor& signal, double budget_ratio, const KtsOptions& kts) {
  if (user_scores.empty()) throw DomainError("make_training_keyframes: no user scores");
  const std::size_t T = user_scores.front().size();
  std::vector<double> mean(T, 0.0);
  for (const auto& u : user_scores) {
    if (u.size() != T) throw DimensionError("make_training_keyframes: user score vectors differ in length");
    for (std::size_t t = 0; t < T; ++t) mean[t] += u[t];
  }
  for (double& v : mean) v /= static_cast<double>(user_scores.size());
  return scores_to_keyshots(mean, signal, budget_ratio, kts).selection;
}

void SyntheticSpec::validate() const {
  if (n_events < 2) throw ConfigError("synthetic: n_events must be >= 2, got " + std::to_string(n_events));
  if (!(keyframe_ratio > 0.0 && keyframe_ratio <= 0.5)) throw ConfigError("synthetic: keyframe_ratio must lie in (0, 0.5]");
  if (!(noise_sigma >= 0.0)) throw ConfigError("synthetic: noise_sigma must be >= 0");
  if (objects < 1 || d_obj < 1 || frame_stride < 1 || users < 1) {
    throw ConfigError("synthetic: objects, d_obj, frame_stride and users must be >= 1");
  }
  if (query_mode == QueryMode::word && (words < 1 || d_word < 1)) throw ConfigError("synthetic: word queries need words, d_word >= 1");
  if (query_mode == QueryMode::sentence && (captions < 1 || d_caption < 1)) {
    throw ConfigError("synthetic: sentence queries need captions, d_caption >= 1");
  }
  // Every event block needs its planted run plus two drifting frames on each side.
  const std::size_t planted = static_cast<std::size_t>(std::ceil(keyframe_ratio * static_cast<double>(frames) - 1e-9));
  const std::size_t run = (planted + n_events - 1) / n_events;
  if (frames / n_events < run + 4) {
    throw ConfigError("synthetic: " + std::to_string(frames) + " frames are too few for " + std::to_string(n_events) +
                      " events at keyframe ratio " + std::to_string(keyframe_ratio));
  }
}

namespace {

constexpr const char* kClassNames[] = {"person", "car",  "dog",   "ball",  "tree",  "sky",   "boat", "bike",
                                       "horse",  "bird", "table", "chair", "phone", "bottle", "cup",  "kite"};

Tensor gaussian(std::mt19937_64& rng, Shape shape, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = g(rng);
  return t;
}

double cosine(const double* a, const double* b, std::size_t d) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < d; ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  return ab / std::sqrt(std::max(aa * bb, 1e-300));
}

}  // namespace

FeatureSet generate_synthetic(const SyntheticSpec& spec, std::size_t video_index, std::vector<std::size_t>* events) {
  spec.validate();
  const std::size_t T = spec.frames, N = spec.objects, d = spec.d_obj, E = spec.n_events;
  const std::size_t n_classes = std::min<std::size_t>(E + 2, 0xFFFF);
  constexpr double kDriftStart = 0.6, kDriftSlope = 0.04, kDriftMax = 0.9, kOffsetScale = 0.5;

  // Banks shared by every video of a dataset.
  // seed_seq keeps 32-bit words, so the 64-bit seed goes in as two halves.
  const std::uint32_t lo = static_cast<std::uint32_t>(spec.seed), hi = static_cast<std::uint32_t>(spec.seed >> 32);
  std::seed_seq bank_seed{lo, hi, 0x9e3779b9u};
  std::mt19937_64 bank(bank_seed);
  const Tensor protos = gaussian(bank, {E, d}, 1.0);
  const Tensor distractors = gaussian(bank, {2 * E, d}, 1.0);
  const Tensor offsets = gaussian(bank, {n_classes, d}, kOffsetScale);
  const Tensor word_proj = gaussian(bank, {d, std::max<std::size_t>(spec.d_word, 1)}, 1.0 / std::sqrt(double(d)));
  const Tensor caption_proj = gaussian(bank, {d, std::max<std::size_t>(spec.d_caption, 1)}, 1.0 / std::sqrt(double(d)));

  std::seed_seq video_seed{lo, hi, static_cast<std::uint32_t>(video_index), 1u};
  std::mt19937_64 rng(video_seed);
  std::vector<std::size_t> order(E);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  // Block lengths: equal split, then neighbours trade frames so events do not
  // sit at the same positions in every video.
  const std::size_t planted = static_cast<std::size_t>(std::ceil(spec.keyframe_ratio * static_cast<double>(T) - 1e-9));
  std::vector<std::size_t> runs(E), blocks(E, T / E);
  for (std::size_t b = 0; b < E; ++b) runs[b] = planted / E + (b < planted % E ? 1 : 0);
  blocks[E - 1] += T % E;
  for (std::size_t b = 0; b + 1 < E; ++b) {
    const std::size_t slack_l = blocks[b] - (runs[b] + 4), slack_r = blocks[b + 1] - (runs[b + 1] + 4);
    const long lo = -static_cast<long>(std::min(slack_l, T / E / 2));
    const long hi = static_cast<long>(std::min(slack_r, T / E / 2));
    const long shift = std::uniform_int_distribution<long>(lo, hi)(rng);
    blocks[b] = static_cast<std::size_t>(static_cast<long>(blocks[b]) + shift);
    blocks[b + 1] = static_cast<std::size_t>(static_cast<long>(blocks[b + 1]) - shift);
  }

  FeatureSet fs;
  char id[64];
  std::snprintf(id, sizeof id, "video_%03zu", video_index);
  fs.video_id = id;
  fs.frames_original = static_cast<std::uint32_t>(T * spec.frame_stride);
  fs.picks.resize(T);
  for (std::size_t t = 0; t < T; ++t) fs.picks[t] = static_cast<std::uint32_t>(t * spec.frame_stride);
  for (std::size_t c = 0; c < n_classes; ++c) {
    fs.class_names.push_back(c < std::size(kClassNames) ? kClassNames[c] : "class" + std::to_string(c));
  }
  fs.objects = Tensor({T, N, d});
  fs.class_ids.resize(T * N);
  fs.confidences.resize(T * N);
  fs.gt_binary.assign(T, 0);
  fs.gt_scores.assign(spec.users, std::vector<double>(T, 0.0));
  if (events) events->assign(T, 0);

  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> center(d);
  std::size_t t = 0;
  for (std::size_t b = 0; b < E; ++b) {
    const std::size_t e = order[b];
    const std::size_t distractor = 2 * e + rng() % 2;
    // run sits anywhere that leaves two drift frames on each side
    const std::size_t free = blocks[b] - runs[b] - 4;
    const std::size_t run_begin = t + 2 + std::uniform_int_distribution<std::size_t>(0, free)(rng);
    const std::size_t run_end = run_begin + runs[b];
    for (std::size_t end = t + blocks[b]; t < end; ++t) {
      const std::size_t dist = t < run_begin ? run_begin - t : (t >= run_end ? t - run_end + 1 : 0);
      const double m = dist == 0 ? 0.0 : std::min(kDriftMax, kDriftStart + kDriftSlope * static_cast<double>(dist - 1));
      for (std::size_t k = 0; k < d; ++k) center[k] = (1.0 - m) * protos(e, k) + m * distractors(distractor, k);
      fs.gt_binary[t] = dist == 0 ? 1 : 0;
      if (events) (*events)[t] = e;
      const double score = dist == 0 ? 1.0 : std::clamp(cosine(center.data(), &protos.storage()[e * d], d), 0.0, 1.0);
      for (std::size_t u = 0; u < spec.users; ++u) {
        const double jitter = u == 0 ? 0.0 : 0.05 * noise(rng);
        fs.gt_scores[u][t] = f32(std::clamp(score + jitter, 0.0, 1.0));
      }
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t cls = (e + n) % n_classes;
        fs.class_ids[t * N + n] = static_cast<std::uint16_t>(cls);
        fs.confidences[t * N + n] = static_cast<float>(0.95 - 0.5 * static_cast<double>(n) / static_cast<double>(N));
        for (std::size_t k = 0; k < d; ++k) {
          fs.objects(t, n, k) = f32(center[k] + offsets(cls, k) + spec.noise_sigma * noise(rng));
        }
      }
    }
  }

  // Queries: projections of the event prototypes in the order they appear.
  fs.query.mode = spec.query_mode;
  if (spec.query_mode == QueryMode::word) {
    fs.query.vectors = Tensor({spec.words, spec.d_word});
    for (std::size_t w = 0; w < spec.words; ++w) {
      const std::size_t e = order[w % E];
      for (std::size_t j = 0; j < spec.d_word; ++j) {
        double v = 0;
        for (std::size_t k = 0; k < d; ++k) v += protos(e, k) * word_proj(k, j);
        fs.query.vectors(w, j) = f32(v);
      }
    }
  } else if (spec.query_mode == QueryMode::sentence) {
    // Caption c describes the events of blocks c, c + M, c + 2M, ...
    fs.query.vectors = Tensor({spec.captions, spec.d_caption});
    for (std::size_t c = 0; c < spec.captions; ++c) {
      std::vector<double> mean(d, 0.0);
      std::size_t count = 0;
      for (std::size_t b = c % E; b < E; b += spec.captions) {
        for (std::size_t k = 0; k < d; ++k) mean[k] += protos(order[b], k);
        ++count;
      }
      for (std::size_t j = 0; j < spec.d_caption; ++j) {
        double v = 0;
        for (std::size_t k = 0; k < d; ++k) v += mean[k] / static_cast<double>(std::max<std::size_t>(count, 1)) * caption_proj(k, j);
        fs.query.vectors(c, j) = f32(v);
      }
    }
  }
  fs.validate();
  return fs;
}

Tensor segmentation_signal(const FeatureSet& fs) { return frame_means(fs.objects); }

std::vector<std::uint8_t> expand_to_original(std::span<const std::uint8_t> sampled, const FeatureSet& fs) {
  if (sampled.size() != fs.frames()) throw DimensionError("expand_to_original: length differs from the frame count");
  std::vector<std::uint8_t> out(fs.frames_original, 0);
  for (std::size_t t = 0; t < sampled.size(); ++t) {
    if (!sampled[t]) continue;
    const std::size_t begin = t == 0 ? 0 : fs.picks[t];
    const std::size_t end = t + 1 < fs.picks.size() ? fs.picks[t + 1] : fs.frames_original;
    std::fill(out.begin() + static_cast<long>(begin), out.begin() + static_cast<long>(end), 1);
  }
  return out;
}

std::vector<KeyshotSummary> groundtruth_summaries(const FeatureSet& fs, double budget_ratio, const KtsOptions& kts) {
  std::vector<KeyshotSummary> out;
  if (!fs.gt_binary.empty()) {
    out.push_back(summary_from_binary(expand_to_original(fs.gt_binary, fs)));
    return out;
  }
  if (fs.gt_scores.empty()) throw DomainError("video '" + fs.video_id + "' has no groundtruth");
  const Tensor signal = segmentation_signal(fs);
  for (const auto& u : fs.gt_scores) {
    out.push_back(scores_to_keyshots(u, signal, budget_ratio, kts, fs.picks, fs.frames_original));
  }
  return out;
}

std::string to_string(SplitSetting s) {
  switch (s) {
    case SplitSetting::standard: return "standard";
    case SplitSetting::augment: return "augment";
    case SplitSetting::transfer: return "transfer";
  }
  return "standard";
}

SplitSetting parse_split_setting(const std::string& text) {
  if (text == "standard") return SplitSetting::standard;
  if (text == "augment") return SplitSetting::augment;
  if (text == "transfer") return SplitSetting::transfer;
  throw ConfigError("unknown split setting '" + text + "' (expected standard, augment or transfer)");
}

void SplitConfig::validate() const {
  std::set<std::string> seen;
  for (const auto* list : {&train, &val, &test}) {
    for (const auto& id : *list) {
      if (!seen.insert(id).second) throw ConfigError("split: video '" + id + "' appears more than once");
    }
  }
}

std::string SplitConfig::to_text() const {
  std::ostringstream os;
  auto line = [&](const char* key, const std::vector<std::string>& ids) {
    os << key << " =";
    for (const auto& id : ids) os << ' ' << id;
    os << '\n';
  };
  os << "setting = " << to_string(setting) << "\nround = " << round << '\n';
  line("train", train);
  line("val", val);
  line("test", test);
  return os.str();
}

SplitConfig SplitConfig::parse(const std::string& text) {
  SplitConfig s;
  for (const auto& [key, value] : parse_key_values(text, "split config")) {
    if (key == "setting") s.setting = parse_split_setting(value);
    else if (key == "round") s.round = std::stoul(value);
    else if (key == "train") s.train = split_words(value);
    else if (key == "val") s.val = split_words(value);
    else if (key == "test") s.test = split_words(value);
    else throw ConfigError("split config: unknown key '" + key + "'");
  }
  s.validate();
  return s;
}

SplitConfig SplitConfig::load(const std::filesystem::path& path) { return parse(read_text_file(path)); }
void SplitConfig::save(const std::filesystem::path& path) const { write_text_file(path, to_text()); }

std::filesystem::path metadata_path(const std::filesystem::path& container) {
  auto p = container;
  p.replace_extension(".meta");
  return p;
}

void write_metadata(const std::filesystem::path& container, const Metadata& meta) {
  std::ostringstream os;
  for (const auto& [k, v] : meta) os << k << " = " << v << '\n';
  write_text_file(metadata_path(container), os.str());
}

Metadata read_metadata(const std::filesystem::path& container) {
  const auto p = metadata_path(container);
  if (!std::filesystem::exists(p)) return {};
  return parse_key_values(read_text_file(p), p.string());
}

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (out.count(key)) throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace {

// Writes to a sibling temp file and renames, so readers never see half a file.
void write_atomically(const std::filesystem::path& path, const char* data, std::size_t size) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out.write(data, static_cast<std::streamsize>(size));
    if (!out) throw Error("write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_atomically(path, text.data(), text.size());
}

void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  write_atomically(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

}  // namespace videograph
