#include "videograph/trainer.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace videograph {

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train config: lr must be finite and >= 0");
  if (!(lr_decay > 0.0)) throw ConfigError("train config: lr_decay must be positive");
  if (decay_every < 1) throw ConfigError("train config: decay_every must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
    throw ConfigError("train config: need 0 <= beta < 1 and eps > 0");
  }
  if (clip_frames < 1) throw ConfigError("train config: clip_frames must be >= 1");
  if (validate_every < 1) throw ConfigError("train config: validate_every must be >= 1");
}

double TrainConfig::lr_at(std::size_t epoch) const {
  return lr * std::pow(lr_decay, static_cast<double>(epoch / decay_every));
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected a number, got '" + s + "'");
}

std::uint64_t to_uint(const std::string& key, const std::string& s) {
  if (!s.empty() && s[0] != '-') {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + s + "'");
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + s + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define VG_SIZE(KEY, MEMBER)                                                                              \
  Field {                                                                                                 \
    KEY, [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); },                              \
        [](ExperimentConfig& c, const std::string& v) { c.MEMBER = static_cast<decltype(c.MEMBER)>(to_uint(KEY, v)); } \
  }
#define VG_REAL(KEY, MEMBER)                                                                   \
  Field {                                                                                      \
    KEY, [](const ExperimentConfig& c) { return fmt_double(c.MEMBER); },                       \
        [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); }        \
  }
#define VG_BOOL(KEY, MEMBER)                                                                   \
  Field {                                                                                      \
    KEY, [](const ExperimentConfig& c) { return std::string(c.MEMBER ? "true" : "false"); },   \
        [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_bool(KEY, v); }          \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      VG_SIZE("model.frames", model.frames),
      VG_SIZE("model.objects", model.objects),
      VG_SIZE("model.d_obj", model.d_obj),
      VG_SIZE("model.d_embed", model.d_embed),
      VG_SIZE("model.d_model", model.d_model),
      VG_SIZE("model.heads", model.heads),
      VG_SIZE("model.d_head", model.d_head),
      VG_SIZE("model.graph_layers", model.graph_layers),
      VG_SIZE("model.graph_hidden", model.graph_hidden),
      VG_SIZE("model.summary_hidden", model.summary_hidden),
      VG_SIZE("model.d_affinity", model.d_affinity),
      VG_SIZE("model.iterations", model.iterations),
      VG_REAL("model.lambda_o", model.lambda_o),
      VG_REAL("model.lambda_f", model.lambda_f),
      Field{"model.query_mode", [](const ExperimentConfig& c) { return to_string(c.model.query_mode); },
            [](ExperimentConfig& c, const std::string& v) { c.model.query_mode = parse_query_mode(v); }},
      VG_SIZE("model.words", model.words),
      VG_SIZE("model.captions", model.captions),
      VG_SIZE("model.d_word", model.d_word),
      VG_SIZE("model.d_caption", model.d_caption),
      VG_BOOL("model.positional_encoding", model.positional_encoding),
      VG_BOOL("model.normalize_adjacency", model.normalize_adjacency),
      VG_SIZE("train.epochs", train.epochs),
      VG_SIZE("train.batch_size", train.batch_size),
      VG_REAL("train.lr", train.lr),
      VG_REAL("train.lr_decay", train.lr_decay),
      VG_SIZE("train.decay_every", train.decay_every),
      VG_REAL("train.beta1", train.beta1),
      VG_REAL("train.beta2", train.beta2),
      VG_REAL("train.eps", train.eps),
      VG_REAL("train.clip_norm", train.clip_norm),
      VG_SIZE("train.seed", train.seed),
      VG_SIZE("train.clip_frames", train.clip_frames),
      VG_SIZE("train.validate_every", train.validate_every),
      Field{"loss.mode", [](const ExperimentConfig& c) { return to_string(c.loss.mode); },
            [](ExperimentConfig& c, const std::string& v) {
              // A new mode brings its own default weights.
              const DiversityNorm norm = c.loss.diversity_norm;
              c.loss = LossWeights::defaults(parse_loss_mode(v));
              c.loss.diversity_norm = norm;
            }},
      VG_REAL("loss.alpha", loss.alpha),
      VG_REAL("loss.beta", loss.beta),
      VG_REAL("loss.gamma", loss.gamma),
      VG_REAL("loss.rho", loss.rho),
      Field{"loss.diversity_norm",
            [](const ExperimentConfig& c) {
              return std::string(c.loss.diversity_norm == DiversityNorm::squared ? "squared" : "plain");
            },
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "squared") c.loss.diversity_norm = DiversityNorm::squared;
              else if (v == "plain") c.loss.diversity_norm = DiversityNorm::plain;
              else throw ConfigError("config key 'loss.diversity_norm': expected squared or plain, got '" + v + "'");
            }},
      VG_REAL("eval.budget_ratio", eval.budget_ratio),
      Field{"eval.aggregation", [](const ExperimentConfig& c) { return to_string(c.eval.aggregation); },
            [](ExperimentConfig& c, const std::string& v) { c.eval.aggregation = parse_aggregation(v); }},
      VG_SIZE("eval.kts_max_segments", eval.kts.max_segments),
      VG_REAL("eval.kts_penalty", eval.kts.penalty),
      VG_REAL("eval.kts_penalty_factor", eval.kts.penalty_factor),
      VG_SIZE("eval.kts_min_length", eval.kts.min_length),
  };
  return f;
}

#undef VG_SIZE
#undef VG_REAL
#undef VG_BOOL

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  loss.validate();
  if (!(eval.budget_ratio >= 0.0 && eval.budget_ratio <= 1.0)) throw ConfigError("eval.budget_ratio must lie in [0, 1]");
  if (eval.kts.min_length < 1) throw ConfigError("eval.kts_min_length must be >= 1");
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.key << " = " << f.get(*this) << '\n';
  return os.str();
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& origin) {
  const auto kv = parse_key_values(text, origin);
  ExperimentConfig c;
  if (auto it = kv.find("loss.mode"); it != kv.end()) c.set(it->first, it->second);
  for (const auto& [k, v] : kv)
    if (k != "loss.mode") c.set(k, v);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return parse(read_text_file(path), path.string());
}

std::uint64_t ExperimentConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : to_text()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------- optimizer

void AdamState::init(const ParameterSet& params) {
  step = 0;
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.emplace_back(p.value.shape());
    v.emplace_back(p.value.shape());
  }
}

void adam_step(std::span<double> value, std::span<const double> grad, std::span<double> m, std::span<double> v,
               double lr, std::uint64_t t, double beta1, double beta2, double eps) {
  if (t < 1) throw StateError("adam_step: step number must be >= 1");
  if (grad.size() != value.size() || m.size() != value.size() || v.size() != value.size()) {
    throw DimensionError("adam_step: value, gradient and moments differ in size");
  }
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < value.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

StepInfo adam_update(ParameterSet& params, AdamState& state, double lr, const TrainConfig& config) {
  if (state.m.size() != params.size()) state.init(params);
  StepInfo info;
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad.storage()) {
      if (!std::isfinite(g)) {
        info.diagnostic = "non-finite gradient in '" + p.name + "'";
        return info;
      }
      sq += g * g;
    }
  }
  info.grad_norm = std::sqrt(sq);
  double scale = 1.0;
  if (config.clip_norm > 0.0 && info.grad_norm > config.clip_norm) {
    scale = config.clip_norm / info.grad_norm;
    info.clipped = true;
  }
  ++state.step;
  std::size_t i = 0;
  std::vector<double> g;
  for (auto& p : params) {
    g.assign(p.grad.storage().begin(), p.grad.storage().end());
    if (scale != 1.0)
      for (double& x : g) x *= scale;
    adam_step(p.value.data(), g, state.m[i].data(), state.v[i].data(), lr, state.step, config.beta1, config.beta2,
              config.eps);
    ++i;
  }
  info.applied = true;
  return info;
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kCkMagic[4] = {'V', 'G', 'C', 'K'};
constexpr std::uint16_t kCkVersion = 1;

struct Out {
  std::vector<std::uint8_t> b;
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    b.insert(b.end(), p, p + sizeof(T));
  }
  void put_blob(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    b.insert(b.end(), s.begin(), s.end());
  }
  void put_tensor(const Tensor& t) {
    for (double x : t.storage()) put(x);
  }
};

struct In {
  std::span<const std::uint8_t> b;
  std::string origin;
  std::size_t at = 0;
  [[noreturn]] void fail(const std::string& what, std::size_t off) const { throw ParseError(origin + ": " + what, off); }
  void need(std::size_t n, const char* what) const {
    if (b.size() - at < n) fail(std::string("truncated while reading ") + what, at);
  }
  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, b.data() + at, sizeof(T));
    at += sizeof(T);
    return v;
  }
  std::string get_blob(const char* what) {
    const std::size_t n = get<std::uint32_t>(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b.data() + at), n);
    at += n;
    return s;
  }
  void get_tensor(Tensor& t, const char* what) {
    need(t.size() * 8, what);
    for (double& x : t.storage()) x = get<double>(what);
  }
};

}  // namespace

std::vector<std::uint8_t> Checkpoint::encode() const {
  Out o;
  for (char c : kCkMagic) o.put(c);
  o.put(kCkVersion);
  o.put_blob(config.to_text());
  o.put(config.hash());
  o.put(epoch);
  o.put(adam.step);
  o.put_blob(rng_state);
  o.put(static_cast<std::uint32_t>(params.params.size()));
  const bool moments = adam.m.size() == params.params.size();
  std::size_t i = 0;
  for (const auto& p : params.params) {
    if (p.name.size() > 0xFFFF) throw DomainError("checkpoint: parameter name too long");
    o.put(static_cast<std::uint16_t>(p.name.size()));
    o.b.insert(o.b.end(), p.name.begin(), p.name.end());
    o.put(static_cast<std::uint8_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) o.put(static_cast<std::uint32_t>(d));
    o.put_tensor(p.value);
    o.put(static_cast<std::uint8_t>(moments ? 1 : 0));
    if (moments) {
      o.put_tensor(adam.m[i]);
      o.put_tensor(adam.v[i]);
    }
    ++i;
  }
  o.put(static_cast<std::uint32_t>(crc32(0L, o.b.data(), static_cast<uInt>(o.b.size()))));
  return std::move(o.b);
}

Checkpoint Checkpoint::decode(std::span<const std::uint8_t> bytes, const std::string& origin) {
  In in{bytes, origin};
  for (char c : kCkMagic)
    if (in.get<char>("magic") != c) in.fail("bad magic (expected VGCK)", 0);
  const auto version = in.get<std::uint16_t>("version");
  if (version != kCkVersion) in.fail("unsupported checkpoint version " + std::to_string(version), 4);
  Checkpoint ck;
  const std::size_t cfg_at = in.at;
  try {
    ck.config = ExperimentConfig::parse(in.get_blob("config"), origin + " (embedded config)");
  } catch (const ConfigError& e) {
    in.fail(e.what(), cfg_at);
  }
  const std::size_t hash_at = in.at;
  if (in.get<std::uint64_t>("config hash") != ck.config.hash()) in.fail("config hash mismatch", hash_at);
  ck.epoch = in.get<std::uint32_t>("epoch");
  ck.adam.step = in.get<std::uint64_t>("adam step");
  ck.rng_state = in.get_blob("rng state");
  ck.params = init_params(ck.config.model, 0);
  const std::size_t count = in.get<std::uint32_t>("parameter count");
  if (count != ck.params.params.size()) {
    in.fail("checkpoint holds " + std::to_string(count) + " parameters, the configured model has " +
                std::to_string(ck.params.params.size()),
            in.at - 4);
  }
  std::set<std::string> seen;
  bool moments = true;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t name_len = in.get<std::uint16_t>("parameter name");
    in.need(name_len, "parameter name");
    const std::string name(reinterpret_cast<const char*>(bytes.data() + in.at), name_len);
    in.at += name_len;
    if (!ck.params.params.contains(name) || !seen.insert(name).second) {
      in.fail("unexpected parameter '" + name + "'", in.at - name_len);
    }
    Parameter& p = ck.params[name];
    const std::size_t rank = in.get<std::uint8_t>("rank");
    Shape shape;
    for (std::size_t r = 0; r < rank; ++r) shape.push_back(in.get<std::uint32_t>("shape"));
    if (shape != p.value.shape()) {
      throw DimensionError(origin + ": layer '" + name + "' is " + shape_str(shape) + " in the checkpoint but " +
                           shape_str(p.value.shape()) + " in the model");
    }
    in.get_tensor(p.value, "parameter values");
    const auto has = in.get<std::uint8_t>("moment flag");
    if (i == 0) {
      moments = has == 1;
      if (moments) {
        const auto step = ck.adam.step;
        ck.adam.init(ck.params.params);  // allocates moments, resets the step
        ck.adam.step = step;
      }
    } else if ((has == 1) != moments) {
      in.fail("inconsistent optimizer moments", in.at - 1);
    }
    if (moments) {
      const std::size_t idx = static_cast<std::size_t>(
          std::distance(ck.params.params.begin(),
                        std::find_if(ck.params.params.begin(), ck.params.params.end(),
                                     [&](const Parameter& q) { return q.name == name; })));
      in.get_tensor(ck.adam.m[idx], "adam m");
      in.get_tensor(ck.adam.v[idx], "adam v");
    }
  }
  const std::size_t crc_at = in.at;
  const auto stored = in.get<std::uint32_t>("checksum");
  if (in.at != bytes.size()) in.fail("trailing bytes after checksum", in.at);
  if (stored != static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(crc_at)))) {
    in.fail("checksum mismatch", crc_at);
  }
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const { write_binary_file(path, encode()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  return decode(read_binary_file(path), path.string());
}

// ---------------------------------------------------------------- training

namespace {

std::mt19937_64 shuffle_engine(std::uint64_t seed) {
  std::seed_seq s{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 2u};
  return std::mt19937_64(s);
}

std::string engine_state(const std::mt19937_64& e) {
  std::ostringstream os;
  os << e;
  return os.str();
}

void check_compatible(const std::vector<FeatureSet>& videos, const ExperimentConfig& c) {
  for (const auto& v : videos) {
    if (v.d_obj() != c.model.d_obj) {
      throw DimensionError("video '" + v.video_id + "' has object width " + std::to_string(v.d_obj()) +
                           ", layer 'obj_emb.w' expects " + std::to_string(c.model.d_obj));
    }
    const QueryEmbedding q = model_query(v, c.model);
    if (q.mode != QueryMode::none && q.mode != c.model.query_mode) {
      throw ConfigError("video '" + v.video_id + "' carries " + to_string(q.mode) + " queries, model expects " +
                        to_string(c.model.query_mode));
    }
    if (q.mode != QueryMode::none && q.vectors.dim(1) != c.model.query_width()) {
      throw ConfigError("video '" + v.video_id + "' query width " + std::to_string(q.vectors.dim(1)) +
                        " differs from the model's " + std::to_string(c.model.query_width()));
    }
  }
}

}  // namespace

double mean_loss(ModelParams& params, const std::vector<FeatureSet>& videos, const ExperimentConfig& config,
                 LossReport* mean_report) {
  if (videos.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  LossReport acc;
  for (const auto& fs : videos) {
    const PreparedVideo pv = prepare_video(fs, params.config, config.train.clip_frames, config.loss.mode, config.eval.kts);
    Tape tape;
    const VideoLoss vl = video_loss(tape, params, pv.input, pv.targets, config.loss);
    total += vl.report.total;
    for (const auto& [k, v] : vl.report.components) acc.components[k] += v / static_cast<double>(videos.size());
  }
  acc.total = total / static_cast<double>(videos.size());
  if (mean_report) *mean_report = acc;
  return acc.total;
}

TrainResult train(const Dataset& data, const ExperimentConfig& config, const EpochCallback& on_epoch,
                  const Checkpoint* resume) {
  config.validate();
  if (data.train.empty()) throw ConfigError("train: no training videos");
  check_compatible(data.train, config);
  check_compatible(data.val, config);
  {
    std::set<std::string> ids;
    for (const auto* split : {&data.train, &data.val, &data.test})
      for (const auto& v : *split)
        if (!ids.insert(v.video_id).second) throw ConfigError("train: video '" + v.video_id + "' is in two splits");
  }
  const TrainConfig& tc = config.train;
  const bool supervised = config.loss.mode != LossMode::unsupervised;

  std::vector<PreparedVideo> prepared;
  for (const auto& fs : data.train)
    prepared.push_back(prepare_video(fs, config.model, tc.clip_frames, config.loss.mode, config.eval.kts));

  TrainResult result;
  Checkpoint& st = result.final_state;
  std::mt19937_64 engine = shuffle_engine(tc.seed);
  if (resume) {
    st = *resume;
    if (st.config.to_text() != config.to_text()) {
      // Only the epoch budget may change on resume.
      ExperimentConfig a = st.config, b = config;
      a.train.epochs = b.train.epochs = 0;
      if (a.to_text() != b.to_text()) throw ConfigError("train: resume checkpoint was made with a different config");
    }
    st.config = config;
    std::istringstream is(st.rng_state);
    is >> engine;
    if (!is) throw ParseError("checkpoint rng state is unreadable", 0);
  } else {
    st.config = config;
    st.params = init_params(config.model, tc.seed);
    st.adam.init(st.params.params);
  }
  result.best = st;
  result.best_epoch = st.epoch;
  double best_score = -std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();
  std::set<std::string> seen_warnings;
  auto note = [&](const std::string& w) {
    if (seen_warnings.insert(w).second) result.warnings.push_back(w);
  };

  ModelParams& params = st.params;
  std::vector<std::size_t> order(prepared.size());
  for (std::size_t epoch = st.epoch; epoch < tc.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = tc.lr_at(epoch);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), engine);

    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t B = std::min(tc.batch_size, order.size() - start);
      std::vector<std::unique_ptr<Tape>> tapes(B);
      std::vector<VideoLoss> losses(B);
      std::vector<std::exception_ptr> errors(B);
      params.params.zero_grads();
      // Videos of a batch run concurrently on their own tapes; gradients are
      // folded in below in batch order, so results do not depend on threads.
#pragma omp parallel for schedule(static, 1)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(B); ++i) {
        try {
          const PreparedVideo& pv = prepared[order[start + static_cast<std::size_t>(i)]];
          tapes[i] = std::make_unique<Tape>();
          losses[i] = video_loss(*tapes[i], params, pv.input, pv.targets, config.loss);
          tapes[i]->backward(losses[i].total);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
      for (std::size_t i = 0; i < B; ++i) {
        tapes[i]->flush_param_grads(1.0 / static_cast<double>(B));
        rec.train_loss += losses[i].report.total / static_cast<double>(order.size());
        for (const auto& [k, v] : losses[i].report.components) rec.components[k] += v / static_cast<double>(order.size());
        for (const auto& w : losses[i].report.warnings) {
          ++rec.warnings;
          note(w);
        }
      }
      tapes.clear();
      const StepInfo info = adam_update(params.params, st.adam, rec.lr, tc);
      if (!info.applied) {
        ++rec.rejected_steps;
        note("epoch " + std::to_string(epoch) + ": step rejected: " + info.diagnostic);
      }
      if (info.clipped) ++rec.clipped_steps;
    }
    st.epoch = static_cast<std::uint32_t>(epoch + 1);
    st.rng_state = engine_state(engine);

    const bool validate = !data.val.empty() && ((epoch + 1) % tc.validate_every == 0 || epoch + 1 == tc.epochs);
    if (validate) {
      if (supervised) {
        double f = 0.0;
        for (const auto& fs : data.val) {
          f += evaluate_prediction(predict(params, fs, config.eval), fs, config.eval).f_score;
        }
        rec.val_f = f / static_cast<double>(data.val.size());
      }
      rec.val_loss = mean_loss(params, data.val, config);
      // Supervised: higher F wins, lower loss breaks F ties (a single
      // validation video makes exact F ties common).
      const bool better = supervised ? (rec.val_f > best_score || (rec.val_f == best_score && rec.val_loss < best_loss))
                                     : rec.val_loss < best_loss;
      if (better) {
        best_score = rec.val_f;
        best_loss = rec.val_loss;
        result.best = st;
        result.best_epoch = epoch + 1;
      }
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (data.val.empty()) {
    result.best = st;
    result.best_epoch = st.epoch;
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::set<std::string> keys;
  for (const auto& r : history)
    for (const auto& [k, v] : r.components) keys.insert(k);
  std::ostringstream os;
  os << "epoch,lr,train_loss";
  for (const auto& k : keys) os << ',' << k;
  os << ",val_loss,val_f,rejected_steps,clipped_steps,warnings\n";
  for (const auto& r : history) {
    os << r.epoch << ',' << fmt_double(r.lr) << ',' << fmt_double(r.train_loss);
    for (const auto& k : keys) {
      auto it = r.components.find(k);
      os << ',' << (it == r.components.end() ? std::string() : fmt_double(it->second));
    }
    os << ',' << (std::isnan(r.val_loss) ? std::string() : fmt_double(r.val_loss)) << ','
       << (std::isnan(r.val_f) ? std::string() : fmt_double(r.val_f)) << ',' << r.rejected_steps << ','
       << r.clipped_steps << ',' << r.warnings << '\n';
  }
  return os.str();
}

}  // namespace videograph
