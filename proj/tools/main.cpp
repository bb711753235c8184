#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cli.hpp"
#include "videograph/grad_suite.hpp"
#include "videograph/kernels.hpp"
#include "videograph/trainer.hpp"

namespace fs = std::filesystem;
using namespace videograph;
using json = nlohmann::ordered_json;

namespace vgcli {
namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Flags shared by several commands; empty strings mean "not given".
struct Overrides {
  std::string seed, mode, iterations, objects, words, query_mode, budget, aggregation, epochs, lr;
  std::vector<std::string> set;

  void apply(ExperimentConfig& c) const {
    if (!mode.empty()) c.set("loss.mode", mode);  // first: resets the loss weights
    const std::pair<const std::string*, const char*> keys[] = {
        {&seed, "train.seed"},          {&iterations, "model.iterations"}, {&objects, "model.objects"},
        {&words, "model.words"},        {&query_mode, "model.query_mode"}, {&budget, "eval.budget_ratio"},
        {&aggregation, "eval.aggregation"}, {&epochs, "train.epochs"},  {&lr, "train.lr"}};
    for (const auto& [value, key] : keys)
      if (!value->empty()) c.set(key, *value);
    for (const auto& kv : set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
        return s;
      };
      c.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    c.validate();
  }
};

void prepare_out(Run& run, const fs::path& out) {
  fs::create_directories(out);
  run.manifest_path = out / (run.manifest.command + ".manifest.json");
}

// ---------------------------------------------------------------- synth

struct SynthOptions {
  fs::path out;
  std::size_t videos = 8;
  SyntheticSpec spec;
  std::string query_mode = "word";
  std::string split;  // "train,val,test" counts
};

std::string spec_text(const SyntheticSpec& s, std::size_t videos) {
  std::ostringstream os;
  os << "videos = " << videos << "\nframes = " << s.frames << "\nobjects = " << s.objects << "\nd_obj = " << s.d_obj
     << "\nevents = " << s.n_events << "\nkeyframe_ratio = " << fmt("%.17g", s.keyframe_ratio)
     << "\nnoise_sigma = " << fmt("%.17g", s.noise_sigma) << "\nseed = " << s.seed << "\nframe_stride = " << s.frame_stride
     << "\nusers = " << s.users << "\nquery_mode = " << to_string(s.query_mode) << "\nwords = " << s.words
     << "\nd_word = " << s.d_word << "\ncaptions = " << s.captions << "\nd_caption = " << s.d_caption << "\n";
  return os.str();
}

int cmd_synth(Run& run, SynthOptions o) {
  try {
    o.spec.query_mode = parse_query_mode(o.query_mode);
    o.spec.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (o.videos == 0) throw UsageError("--videos must be >= 1");
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  if (o.split.empty()) {
    n_test = std::max<std::size_t>(1, o.videos / 4);
    if (n_test >= o.videos) n_test = 0;
    n_train = o.videos - n_test;
  } else {
    char extra;
    if (std::sscanf(o.split.c_str(), "%zu,%zu,%zu%c", &n_train, &n_val, &n_test, &extra) != 3 ||
        n_train + n_val + n_test != o.videos || n_train == 0) {
      throw UsageError("--split must be 'train,val,test' counts summing to --videos with train >= 1");
    }
  }
  prepare_out(run, o.out);
  run.manifest.config = spec_text(o.spec, o.videos);
  run.manifest.seed = o.spec.seed;

  SplitConfig split;
  for (std::size_t v = 0; v < o.videos; ++v) {
    const FeatureSet video = generate_synthetic(o.spec, v);
    const fs::path path = o.out / (video.video_id + ".vgf");
    write_features(video, path);
    write_metadata(path, {{"title", "synthetic " + video.video_id},
                          {"fps", "2"},
                          {"users", std::to_string(o.spec.users)},
                          {"seed", std::to_string(o.spec.seed)}});
    run.output(path);
    run.output(metadata_path(path));
    (v < n_train ? split.train : v < n_train + n_val ? split.val : split.test).push_back(video.video_id);
  }
  split.save(o.out / "split.cfg");
  run.output(o.out / "split.cfg");
  std::cout << "wrote " << o.videos << " videos (" << n_train << " train, " << n_val << " val, " << n_test
            << " test) to " << o.out.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  fs::path config, data, split, out, resume;
  Overrides over;
  bool quiet = false;
};

std::vector<FeatureSet> load_videos(const fs::path& dir, const std::vector<std::string>& ids) {
  std::vector<FeatureSet> out;
  for (const auto& id : ids) out.push_back(read_features(dir / (id + ".vgf")));
  return out;
}

int cmd_train(Run& run, const TrainOptions& o) {
  ExperimentConfig config = o.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(o.config);
  o.over.apply(config);
  const SplitConfig split = SplitConfig::load(o.split.empty() ? o.data / "split.cfg" : o.split);
  prepare_out(run, o.out);
  run.manifest.config = config.to_text();
  run.manifest.seed = config.train.seed;

  Dataset data;
  data.train = load_videos(o.data, split.train);
  data.val = load_videos(o.data, split.val);
  data.test = load_videos(o.data, split.test);
  Checkpoint resume;
  if (!o.resume.empty()) resume = Checkpoint::load(o.resume);

  const TrainResult r = train(
      data, config,
      [&](const EpochRecord& e) {
        if (o.quiet) return;
        std::cout << "epoch " << e.epoch + 1 << "/" << config.train.epochs << " lr " << fmt("%.3g", e.lr) << " loss "
                  << fmt("%.6f", e.train_loss);
        for (const auto& [k, v] : e.components) std::cout << " " << k << " " << fmt("%.6f", v);
        if (!std::isnan(e.val_f)) std::cout << " val_f " << fmt("%.4f", e.val_f);
        if (!std::isnan(e.val_loss)) std::cout << " val_loss " << fmt("%.6f", e.val_loss);
        if (e.rejected_steps) std::cout << " rejected " << e.rejected_steps;
        std::cout << "\n";
      },
      o.resume.empty() ? nullptr : &resume);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";

  r.final_state.save(o.out / "final.vgck");
  r.best.save(o.out / "best.vgck");
  write_text_file(o.out / "history.csv", history_csv(r.history));
  write_text_file(o.out / "config.cfg", config.to_text());
  for (const char* f : {"final.vgck", "best.vgck", "history.csv", "config.cfg"}) run.output(o.out / f);

  if (!data.test.empty()) {
    ModelParams params = r.best.params;
    std::vector<EvalReport> reports;
    json j;
    for (const auto& v : data.test) {
      reports.push_back(evaluate_prediction(predict(params, v, config.eval), v, config.eval));
      j["videos"].push_back(json::parse(reports.back().to_json()));
    }
    const EvalReport avg = average_reports(reports);
    j["average"] = json::parse(avg.to_json());
    write_text_file(o.out / "test_report.json", j.dump(2) + "\n");
    run.output(o.out / "test_report.json");
    std::cout << "test F " << fmt("%.4f", avg.f_score) << " over " << reports.size() << " videos (checkpoint of epoch "
              << r.best_epoch << ")\n";
  }
  return kOk;
}

// ---------------------------------------------------------------- summarize

struct SummarizeOptions {
  fs::path checkpoint, input, out;
  std::string budget, iterations, query;
  bool plot_data = false;
};

// Word rows follow the frequency ranking of the video's classes; an
// override keeps the rows of the requested words in the requested order.
void override_query(FeatureSet& video, const ModelConfig& model, const std::string& spec) {
  if (model.query_mode == QueryMode::none) {
    std::cerr << "warning: the model takes no query; --query ignored\n";
    return;
  }
  if (spec == "none") {
    video.query = {};
    return;
  }
  if (model.query_mode != QueryMode::word) throw UsageError("--query can only override word queries");
  std::vector<std::string> words;
  std::stringstream ss(spec);
  for (std::string w; std::getline(ss, w, ',');)
    if (!w.empty()) words.push_back(w);
  if (words.empty() || words.size() > model.words) {
    throw UsageError("--query takes 1 to " + std::to_string(model.words) + " comma-separated words");
  }
  const auto ranked = select_word_queries(video, model.words).words;
  const bool has_rows = video.query.mode == QueryMode::word && video.query.vectors.dim(0) == model.words;
  Tensor rows({model.words, model.query_width()});
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto it = std::find(ranked.begin(), ranked.end(), words[i]);
    if (!has_rows || it == ranked.end()) {
      std::cerr << "warning: no embedding for query word '" << words[i] << "' in " << video.video_id
                << "; using the null query\n";
      video.query = {};
      return;
    }
    const std::size_t src = static_cast<std::size_t>(it - ranked.begin());
    for (std::size_t j = 0; j < rows.dim(1); ++j) rows(i, j) = video.query.vectors(src, j);
  }
  video.query.vectors = std::move(rows);
}

std::vector<std::pair<std::size_t, std::size_t>> shots_of(const std::vector<std::uint8_t>& selection) {
  std::vector<std::pair<std::size_t, std::size_t>> shots;
  for (std::size_t t = 0; t < selection.size(); ++t) {
    if (!selection[t]) continue;
    if (!shots.empty() && shots.back().second == t) ++shots.back().second;
    else shots.push_back({t, t + 1});
  }
  return shots;
}

int cmd_summarize(Run& run, const SummarizeOptions& o) {
  const Checkpoint ck = Checkpoint::load(o.checkpoint);
  ExperimentConfig config = ck.config;
  Overrides over;
  over.budget = o.budget;
  over.iterations = o.iterations;
  over.apply(config);
  FeatureSet video = read_features(o.input);
  if (!o.query.empty()) override_query(video, config.model, o.query);
  prepare_out(run, o.out);
  run.manifest.config = config.to_text();
  run.manifest.seed = config.train.seed;

  ModelParams params = ck.params;
  params.config.iterations = config.model.iterations;
  const Prediction p = predict(params, video, config.eval);

  json j;
  j["video_id"] = video.video_id;
  j["checkpoint_epoch"] = ck.epoch;
  j["frames"] = video.frames();
  j["frames_original"] = video.frames_original;
  j["budget_ratio"] = config.eval.budget_ratio;
  j["scores"] = p.scores;
  j["keyframes"] = p.keyframes;
  json segs = json::array();
  for (std::size_t s = 0; s < p.summary.segmentation.size(); ++s)
    segs.push_back({p.summary.segmentation.begin(s), p.summary.segmentation.end(s)});
  j["segments"] = segs;
  j["selected_segments"] = p.summary.segments;
  json shots = json::array();
  for (auto [a, b] : shots_of(p.summary.selection)) shots.push_back({a, b});
  j["shots"] = shots;
  j["selected_frames"] = p.summary.selected_frames();
  json dom = json::array();
  for (std::size_t t = 0; t < p.dominance.scores.dim(0); ++t) {
    std::vector<double> row(p.dominance.scores.dim(1));
    for (std::size_t n = 0; n < row.size(); ++n) row[n] = p.dominance.scores(t, n);
    dom.push_back(row);
  }
  j["dominance"] = dom;
  j["dominance_degenerate"] = p.dominance.degenerate;

  const fs::path path = o.out / (video.video_id + ".summary.json");
  write_text_file(path, j.dump(2) + "\n");
  run.output(path);
  if (o.plot_data) {
    std::ostringstream os;
    os << "# frame score\n";
    for (std::size_t t = 0; t < p.scores.size(); ++t) os << t << ' ' << fmt("%.10g", p.scores[t]) << '\n';
    os << "\n# shot_start shot_end (original frames, end exclusive)\n";
    for (auto [a, b] : shots_of(p.summary.selection)) os << a << ' ' << b << '\n';
    const fs::path plot = o.out / (video.video_id + ".plot.txt");
    write_text_file(plot, os.str());
    run.output(plot);
  }
  std::cout << video.video_id << ": " << p.summary.selected_frames() << " of " << video.frames_original
            << " frames in " << shots.size() << " shots, " << p.keyframes.size() << " argmax keyframes\n";
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalOptions_ {
  fs::path pred, gt, out;
  std::string aggregation = "max";
  double budget = kDefaultBudgetRatio;
};

int cmd_eval(Run& run, const EvalOptions_& o) {
  EvalOptions eo;
  try {
    eo.aggregation = parse_aggregation(o.aggregation);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (!(o.budget >= 0.0 && o.budget <= 1.0)) throw UsageError("--budget must lie in [0, 1]");
  eo.budget_ratio = o.budget;
  if (!fs::is_directory(o.pred)) throw Error("prediction directory '" + o.pred.string() + "' does not exist");
  prepare_out(run, o.out);
  run.manifest.config = "aggregation = " + o.aggregation + "\nbudget_ratio = " + fmt("%.17g", o.budget) + "\n";

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(o.pred)) {
    const std::string name = e.path().filename().string();
    if (name.size() > 13 && name.ends_with(".summary.json")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error("no *.summary.json files in '" + o.pred.string() + "'");

  std::vector<EvalReport> reports;
  std::vector<std::string> missing;
  for (const auto& f : files) {
    json j;
    try {
      j = json::parse(read_text_file(f));
    } catch (const json::exception& e) {
      throw ParseError(f.string() + ": " + e.what(), 0);
    }
    const std::string id = j.at("video_id").get<std::string>();
    const fs::path gt_path = o.gt / (id + ".vgf");
    if (!fs::exists(gt_path)) {
      missing.push_back(id);
      continue;
    }
    const FeatureSet video = read_features(gt_path);
    const std::size_t frames_original = j.at("frames_original").get<std::size_t>();
    if (frames_original != video.frames_original) {
      throw DimensionError(f.string() + ": prediction covers " + std::to_string(frames_original) +
                           " original frames, groundtruth has " + std::to_string(video.frames_original));
    }
    std::vector<std::uint8_t> selection(frames_original, 0);
    for (const auto& shot : j.at("shots")) {
      const auto a = shot.at(0).get<std::size_t>(), b = shot.at(1).get<std::size_t>();
      if (a >= b || b > frames_original) throw ParseError(f.string() + ": shot out of range", 0);
      std::fill(selection.begin() + static_cast<long>(a), selection.begin() + static_cast<long>(b), 1);
    }
    const KeyshotSummary pred = summary_from_binary(selection);
    EvalReport r = prf(pred, groundtruth_summaries(video, eo.budget_ratio, eo.kts), eo.aggregation);
    r.video_id = id;
    const auto scores = j.value("scores", std::vector<double>{});
    if (!video.gt_scores.empty() && scores.size() == video.frames() && scores.size() >= 2) {
      add_correlations(r, scores, video.gt_scores);
    }
    reports.push_back(r);
  }
  for (const auto& id : missing) std::cerr << "missing groundtruth: " << id << " (excluded)\n";
  if (reports.empty()) throw Error("no prediction has groundtruth in '" + o.gt.string() + "'");

  const EvalReport avg = average_reports(reports);
  std::ostringstream table;
  table << "video_id\tF\tP\tR\ttau\trho\n";
  auto row = [&](const std::string& id, const EvalReport& r) {
    table << id << '\t' << fmt("%.4f", r.f_score) << '\t' << fmt("%.4f", r.precision) << '\t' << fmt("%.4f", r.recall)
          << '\t' << (r.correlation_defined ? fmt("%.4f", r.kendall_tau) : "-") << '\t'
          << (r.correlation_defined ? fmt("%.4f", r.spearman_rho) : "-") << '\n';
  };
  for (const auto& r : reports) row(r.video_id, r);
  row("average", avg);
  std::cout << table.str();

  json j;
  for (const auto& r : reports) j["videos"].push_back(json::parse(r.to_json()));
  j["average"] = json::parse(avg.to_json());
  j["missing"] = missing;
  write_text_file(o.out / "eval_report.txt", table.str());
  write_text_file(o.out / "eval_report.json", j.dump(2) + "\n");
  run.output(o.out / "eval_report.txt");
  run.output(o.out / "eval_report.json");
  return kOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradOptions {
  fs::path out;
  GradSuiteOptions suite;
};

int cmd_gradcheck(Run& run, const GradOptions& o) {
  if (!(o.suite.eps >= 1e-7 && o.suite.eps <= 1e-3)) throw UsageError("--eps must lie in [1e-7, 1e-3]");
  if (!(o.suite.tolerance > 0.0)) throw UsageError("--tolerance must be positive");
  if (o.suite.frames < 2 || o.suite.objects < 1) throw UsageError("--frames >= 2 and --objects >= 1 required");
  prepare_out(run, o.out);
  run.manifest.config = "frames = " + std::to_string(o.suite.frames) + "\nobjects = " + std::to_string(o.suite.objects) +
                        "\nseeds = " + std::to_string(o.suite.op_seeds) + "\neps = " + fmt("%.17g", o.suite.eps) +
                        "\ntolerance = " + fmt("%.17g", o.suite.tolerance) + "\n";
  const GradSuiteResult r = run_gradient_suite(o.suite);
  std::ostringstream os;
  std::size_t failed = 0;
  double worst = 0.0;
  for (const auto& c : r.cases) {
    worst = std::max(worst, c.report.max_rel_error);
    if (c.passed) continue;
    ++failed;
    os << "FAIL " << c.name << " rel " << fmt("%.3e", c.report.max_rel_error) << " at " << c.report.worst_param << "["
       << c.report.worst_index << "] analytic " << fmt("%.10g", c.report.worst_analytic) << " numeric "
       << fmt("%.10g", c.report.worst_numeric);
    if (!c.report.failure.empty()) os << " (" << c.report.failure << ")";
    os << "\n";
  }
  os << (failed ? "FAIL" : "PASS") << ": " << r.cases.size() - failed << "/" << r.cases.size()
     << " gradient checks within " << fmt("%.1e", o.suite.tolerance) << ", worst relative error "
     << fmt("%.3e", worst) << "\n";
  std::cout << os.str();
  write_text_file(o.out / "gradcheck.txt", os.str());
  run.output(o.out / "gradcheck.txt");
  return failed ? kRuntime : kOk;
}

// ---------------------------------------------------------------- dispatch

int dispatch(const std::vector<std::string>& args);

int run_command(const std::string& name, const std::vector<std::string>& args, const std::function<int(Run&)>& body) {
  Run run;
  run.manifest.command = name;
  run.manifest.argv = args;
  run.manifest.cwd = fs::current_path().string();
  run.manifest.started_at = utc_now();
  int code = kRuntime;
  try {
    code = body(run);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    code = kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    code = kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = kRuntime;
  }
  if (!run.manifest_path.empty()) {
    run.manifest.exit_code = code;
    run.manifest.finished_at = utc_now();
    try {
      run.manifest.write(run.manifest_path);
    } catch (const std::exception& e) {
      std::cerr << "error: cannot write manifest: " << e.what() << "\n";
      if (code == kOk) code = kRuntime;
    }
  }
  return code;
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Language-guided spatiotemporal graph video summarizer"};
  app.require_subcommand(1);
  app.set_version_flag("--version", git_describe());

  SynthOptions so;
  auto* synth = app.add_subcommand("synth", "Write a planted synthetic dataset");
  synth->add_option("--out", so.out, "Output directory")->required();
  synth->add_option("--videos", so.videos, "Number of videos")->capture_default_str();
  synth->add_option("--frames", so.spec.frames, "Frames per video")->capture_default_str();
  synth->add_option("--objects", so.spec.objects, "Objects per frame")->capture_default_str();
  synth->add_option("--d-obj", so.spec.d_obj, "Object feature width")->capture_default_str();
  synth->add_option("--events", so.spec.n_events, "Events per video")->capture_default_str();
  synth->add_option("--ratio", so.spec.keyframe_ratio, "Planted keyframe ratio")->capture_default_str();
  synth->add_option("--noise", so.spec.noise_sigma, "Feature noise sigma")->capture_default_str();
  synth->add_option("--seed", so.spec.seed, "Dataset seed")->capture_default_str();
  synth->add_option("--stride", so.spec.frame_stride, "Original frames per sampled frame")->capture_default_str();
  synth->add_option("--users", so.spec.users, "Score annotators")->capture_default_str();
  synth->add_option("--query-mode", so.query_mode, "none, word or sentence")->capture_default_str();
  synth->add_option("--words", so.spec.words, "Word query rows")->capture_default_str();
  synth->add_option("--d-word", so.spec.d_word, "Word embedding width")->capture_default_str();
  synth->add_option("--captions", so.spec.captions, "Caption rows")->capture_default_str();
  synth->add_option("--d-caption", so.spec.d_caption, "Caption embedding width")->capture_default_str();
  synth->add_option("--split", so.split, "train,val,test video counts");

  auto add_overrides = [](CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--seed", ov.seed, "Training seed");
    cmd->add_option("--mode", ov.mode, "Loss mode: sup-bin, sup-score or unsup");
    cmd->add_option("--iterations", ov.iterations, "Refinement iterations K");
    cmd->add_option("--objects", ov.objects, "Objects per frame N");
    cmd->add_option("--words", ov.words, "Word query rows W");
    cmd->add_option("--query-mode", ov.query_mode, "none, word or sentence");
    cmd->add_option("--budget", ov.budget, "Summary budget ratio");
    cmd->add_option("--aggregation", ov.aggregation, "max or mean over annotators");
    cmd->add_option("--epochs", ov.epochs, "Epoch budget");
    cmd->add_option("--lr", ov.lr, "Learning rate");
    cmd->add_option("--set", ov.set, "Any config key, as key=value (repeatable)");
  };

  TrainOptions to;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a container directory");
  train_cmd->add_option("--config", to.config, "Config file (key = value)")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", to.data, "Directory of .vgf containers")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--split", to.split, "Split file (default: <data>/split.cfg)");
  train_cmd->add_option("--out", to.out, "Output directory")->required();
  train_cmd->add_option("--resume", to.resume, "Checkpoint to continue from");
  train_cmd->add_flag("--quiet", to.quiet, "No per-epoch lines");
  add_overrides(train_cmd, to.over);

  SummarizeOptions mo;
  auto* summ = app.add_subcommand("summarize", "Summarize one video with a trained checkpoint");
  summ->add_option("--checkpoint", mo.checkpoint, "Checkpoint file")->required();
  summ->add_option("--input", mo.input, "Container file")->required();
  summ->add_option("--out", mo.out, "Output directory")->required();
  summ->add_option("--budget", mo.budget, "Summary budget ratio");
  summ->add_option("--iterations", mo.iterations, "Refinement iterations K at inference");
  summ->add_option("--query", mo.query, "Comma-separated query words, or 'none'");
  summ->add_flag("--plot-data", mo.plot_data, "Also write <id>.plot.txt");

  EvalOptions_ eo;
  auto* eval_cmd = app.add_subcommand("eval", "Score summaries against groundtruth containers");
  eval_cmd->add_option("--pred", eo.pred, "Directory of *.summary.json")->required();
  eval_cmd->add_option("--gt", eo.gt, "Directory of groundtruth .vgf files")->required();
  eval_cmd->add_option("--out", eo.out, "Output directory")->required();
  eval_cmd->add_option("--aggregation", eo.aggregation, "max or mean over annotators")->capture_default_str();
  eval_cmd->add_option("--budget", eo.budget, "Groundtruth budget ratio")->capture_default_str();

  GradOptions go;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every op and the full model");
  grad->add_option("--out", go.out, "Output directory")->required();
  grad->add_option("--frames", go.suite.frames, "Frames of the model input")->capture_default_str();
  grad->add_option("--objects", go.suite.objects, "Objects of the model input")->capture_default_str();
  grad->add_option("--seeds", go.suite.op_seeds, "Random inputs per op")->capture_default_str();
  grad->add_option("--eps", go.suite.eps, "Central difference step")->capture_default_str();
  grad->add_option("--tolerance", go.suite.tolerance, "Max relative error")->capture_default_str();
  grad->add_flag("--inject-fault", go.suite.inject_fault, "Add an op with a wrong backward (self-test)");

  fs::path manifest_file;
  auto* rerun = app.add_subcommand("rerun", "Repeat the command recorded in a manifest");
  rerun->add_option("manifest", manifest_file, "Manifest JSON")->required()->check(CLI::ExistingFile);

  std::vector<const char*> argv{"videograph"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (synth->parsed()) return run_command("synth", args, [&](Run& r) { return cmd_synth(r, so); });
  if (train_cmd->parsed()) return run_command("train", args, [&](Run& r) { return cmd_train(r, to); });
  if (summ->parsed()) return run_command("summarize", args, [&](Run& r) { return cmd_summarize(r, mo); });
  if (eval_cmd->parsed()) return run_command("eval", args, [&](Run& r) { return cmd_eval(r, eo); });
  if (grad->parsed()) return run_command("gradcheck", args, [&](Run& r) { return cmd_gradcheck(r, go); });

  Manifest m;
  try {
    m = Manifest::from_json(nlohmann::json::parse(read_text_file(manifest_file)));
  } catch (const std::exception& e) {
    std::cerr << "error: " << manifest_file.string() << ": " << e.what() << "\n";
    return kRuntime;
  }
  if (m.command == "rerun") {
    std::cerr << "error: a manifest cannot record a rerun\n";
    return kRuntime;
  }
  std::error_code ec;
  fs::current_path(m.cwd, ec);
  if (ec) {
    std::cerr << "error: cannot enter recorded directory '" << m.cwd << "': " << ec.message() << "\n";
    return kRuntime;
  }
  return dispatch(m.argv);
}

void apply_thread_env() {
  const char* env = std::getenv("VIDEOGRAPH_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1 || n > 4096) throw UsageError(std::string("VIDEOGRAPH_THREADS must be a positive integer, got '") + env + "'");
  kernels::set_max_threads(static_cast<int>(n));
}

}  // namespace
}  // namespace vgcli

int main(int argc, char** argv) {
  try {
    vgcli::apply_thread_env();
  } catch (const vgcli::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return vgcli::kUsage;
  }
  return vgcli::dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
