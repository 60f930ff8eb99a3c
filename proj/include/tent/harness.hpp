#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tent/episodes.hpp"
#include "tent/error.hpp"
#include "tent/graph.hpp"
#include "tent/model.hpp"
#include "tent/optimizer.hpp"
#include "tent/pipeline.hpp"
#include "tent/rng.hpp"

namespace tent {

struct TrainConfig {
  EpisodeConfig episode;
  int epochs = 500;
  int t_test = 500;
  double learning_rate = 0.05;
  double weight_decay = 1e-4;
  double gamma = 1.0;
  double dropout = 0.2;
  int hidden_dim = 16;
  int out_dim = 16;
  std::uint64_t seed = 0;
  Variant variant = Variant::Full;
  int val_cadence = 25;
  int val_tasks = 50;

  void validate() const {
    episode.validate();
    if (epochs < 0) throw ArgumentError("epochs must be >= 0");
    if (t_test < 1) throw ArgumentError("t_test must be >= 1");
    if (learning_rate <= 0.0) throw ArgumentError("learning rate must be > 0");
    if (weight_decay < 0.0) throw ArgumentError("weight decay must be >= 0");
    if (gamma < 0.0) throw ArgumentError("gamma must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ArgumentError("dropout must be in [0, 1)");
    if (hidden_dim < 1 || out_dim < 1) throw ArgumentError("dims must be >= 1");
    if (val_cadence < 0) throw ArgumentError("val_cadence must be >= 0");
    if (val_tasks < 1) throw ArgumentError("val_tasks must be >= 1");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["n_way"] = c.episode.n_way;
  j["k_shot"] = c.episode.k_shot;
  j["query_size"] = c.episode.query_size;
  j["train_n_way"] = c.episode.train_n_way;
  j["train_k_shot"] = c.episode.train_k_shot;
  j["epochs"] = c.epochs;
  j["t_test"] = c.t_test;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["gamma"] = c.gamma;
  j["dropout"] = c.dropout;
  j["hidden_dim"] = c.hidden_dim;
  j["out_dim"] = c.out_dim;
  j["seed"] = c.seed;
  j["variant"] = variant_name(c.variant);
  j["val_cadence"] = c.val_cadence;
  j["val_tasks"] = c.val_tasks;
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  auto get = [&j](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  get("n_way", c.episode.n_way);
  get("k_shot", c.episode.k_shot);
  get("query_size", c.episode.query_size);
  c.episode.train_n_way = c.episode.n_way;
  c.episode.train_k_shot = c.episode.k_shot;
  get("train_n_way", c.episode.train_n_way);
  get("train_k_shot", c.episode.train_k_shot);
  get("epochs", c.epochs);
  get("t_test", c.t_test);
  get("learning_rate", c.learning_rate);
  get("weight_decay", c.weight_decay);
  get("gamma", c.gamma);
  get("dropout", c.dropout);
  get("hidden_dim", c.hidden_dim);
  get("out_dim", c.out_dim);
  get("seed", c.seed);
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  get("val_cadence", c.val_cadence);
  get("val_tasks", c.val_tasks);
  return c;
}

namespace detail {

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace detail

// Stable hash of the canonical config serialization.
inline std::string config_fingerprint(const TrainConfig& c) {
  return detail::hex64(detail::fnv1a(to_json(c).dump()));
}

// Per-run metrics. Wall-clock timing is intentionally absent: output files
// must be a pure function of (data, config, seed).
struct MetricsRecord {
  std::string variant;
  std::uint64_t seed = 0;
  std::string config_fingerprint;
  int epochs_trained = 0;
  double best_val_accuracy = 0.0;
  double final_val_accuracy = 0.0;
  double test_accuracy_mean = 0.0;
  double test_accuracy_std = 0.0;
  double final_train_loss = 0.0;
  int t_test = 0;
  std::string eval_stream_fingerprint;
};

inline nlohmann::json to_json(const MetricsRecord& r) {
  nlohmann::json j;
  j["variant"] = r.variant;
  j["seed"] = r.seed;
  j["config_fingerprint"] = r.config_fingerprint;
  j["epochs_trained"] = r.epochs_trained;
  j["best_val_accuracy"] = r.best_val_accuracy;
  j["final_val_accuracy"] = r.final_val_accuracy;
  j["test_accuracy_mean"] = r.test_accuracy_mean;
  j["test_accuracy_std"] = r.test_accuracy_std;
  j["final_train_loss"] = r.final_train_loss;
  j["t_test"] = r.t_test;
  j["eval_stream_fingerprint"] = r.eval_stream_fingerprint;
  return j;
}

// JSON-lines event sink (metrics.jsonl). Null sink drops events.
class MetricsWriter {
 public:
  MetricsWriter() = default;
  explicit MetricsWriter(const std::string& path) : out_(path) {
    if (!out_) throw FormatError("cannot write metrics file: " + path);
  }
  void event(const nlohmann::json& j) {
    if (out_.is_open()) out_ << j.dump() << '\n';
  }

 private:
  std::ofstream out_;
};

struct EvalSummary {
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;  // population std over tasks
  std::vector<double> task_accuracies;
  std::string stream_fingerprint;
};

// Meta-test / validation protocol: T fixed-seed tasks from `classes`, frozen
// parameters, no auxiliary loss. The task stream depends only on
// (stream_seed, cfg shape), so paired runs see identical tasks.
inline EvalSummary evaluate_stream(const Graph& g, const ModelParams& model,
                                   const std::vector<int>& classes,
                                   const TrainConfig& cfg, Variant variant,
                                   std::uint64_t stream_seed, int task_count) {
  EpisodeStream stream(g, classes, cfg.episode.n_way, cfg.episode.k_shot,
                       cfg.episode.query_size, stream_seed);
  // Frozen-phi cache: one full-graph pass shared by every task.
  ad::Tape h_tape;
  ModelVars h_vars = load_model_vars(h_tape, model, false);
  ad::Var h = gin_forward(h_tape, h_vars.phi, model.phi_cfg, g.adjacency(),
                          h_tape.constant(g.features()), Mode::Eval, nullptr);
  const Mat h_cache = h_tape.value(h);

  EvalSummary summary;
  std::uint64_t fp = 0xCBF29CE484222325ULL;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < task_count; ++i) {
    const MetaTask task = stream.task(static_cast<std::uint64_t>(i));
    for (int c : task.class_map)
      fp = detail::fnv1a(std::to_string(i) + ":" + std::to_string(c) + ";", fp);
    ad::Tape t;
    ModelVars vars = load_model_vars(t, model, false);
    EpisodeOptions opt;
    opt.variant = variant;
    opt.mode = Mode::Eval;
    opt.h_cache = &h_cache;
    const EpisodeResult res = run_episode(t, g, task, model, vars, opt);
    summary.task_accuracies.push_back(res.accuracy);
    sum += res.accuracy;
    sum_sq += res.accuracy * res.accuracy;
  }
  const double n = static_cast<double>(task_count);
  summary.accuracy_mean = sum / n;
  summary.accuracy_std =
      std::sqrt(std::max(0.0, sum_sq / n - summary.accuracy_mean * summary.accuracy_mean));
  summary.stream_fingerprint = detail::hex64(fp);
  return summary;
}

struct TrainResult {
  ModelParams model;  // best-validation checkpoint
  MetricsRecord record;
  std::vector<double> episode_losses;
};

// Meta-training: one task and one optimizer step per epoch; validation every
// val_cadence epochs (and after the last one) on a fixed 50-task stream; the
// best-validation parameters are returned.
inline TrainResult meta_train(const Graph& g, const ClassSplit& split,
                              const TrainConfig& cfg,
                              MetricsWriter* writer = nullptr) {
  cfg.validate();
  if (static_cast<int>(split.base.size()) < cfg.episode.train_n_way)
    throw InfeasibleEpisodeError("split has " + std::to_string(split.base.size()) +
                                 " base classes, need " +
                                 std::to_string(cfg.episode.train_n_way));

  ModelParams model = init_model(g.feature_dim(), cfg.hidden_dim, cfg.out_dim,
                                 cfg.dropout, static_cast<int>(split.base.size()),
                                 cfg.seed);
  std::map<int, int> base_remap;
  for (std::size_t i = 0; i < split.base.size(); ++i)
    base_remap[split.base[i]] = static_cast<int>(i);

  Adam optimizer(model, AdamConfig{cfg.learning_rate, cfg.weight_decay});
  EpisodeStream train_stream(g, split.base, cfg.episode.train_n_way,
                             cfg.episode.train_k_shot, cfg.episode.query_size,
                             Rng(cfg.seed, 0, Role::TrainStream).next_u64());
  const std::uint64_t val_seed = Rng(cfg.seed, 0, Role::ValStream).next_u64();

  TrainResult result{model, {}, {}};
  double best_val = -1.0, final_val = 0.0;
  bool validated = false;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const MetaTask task = train_stream.task(static_cast<std::uint64_t>(epoch - 1));
    Rng dropout_rng(cfg.seed, static_cast<std::uint64_t>(epoch - 1), Role::Dropout);
    ad::Tape t;
    ModelVars vars = load_model_vars(t, model, true);
    EpisodeOptions opt;
    opt.variant = cfg.variant;
    opt.mode = Mode::Train;
    opt.dropout_rng = &dropout_rng;
    opt.gamma = cfg.gamma;
    opt.base_remap = &base_remap;
    EpisodeResult res;
    try {
      res = run_episode(t, g, task, model, vars, opt);
      t.backward(res.loss);
      std::vector<Vec> grads;
      for (ad::Var v : vars.all()) grads.push_back(Vec(t.grad(v).col(0)));
      optimizer.step(model, grads);
    } catch (const Error& e) {
      throw Error(e.kind(), "epoch " + std::to_string(epoch) + ": " + e.what());
    }
    result.episode_losses.push_back(res.loss_value);
    if (writer)
      writer->event({{"event", "train_episode"},
                     {"epoch", epoch},
                     {"loss", res.loss_value},
                     {"accuracy", res.accuracy}});

    const bool validate = cfg.val_cadence > 0 &&
                          (epoch % cfg.val_cadence == 0 || epoch == cfg.epochs);
    if (validate) {
      const EvalSummary val = evaluate_stream(g, model, split.val, cfg,
                                              cfg.variant, val_seed, cfg.val_tasks);
      final_val = val.accuracy_mean;
      validated = true;
      if (val.accuracy_mean > best_val) {
        best_val = val.accuracy_mean;
        result.model = model;
      }
      if (writer)
        writer->event({{"event", "validation"},
                       {"epoch", epoch},
                       {"accuracy", val.accuracy_mean}});
    }
  }
  if (!validated) result.model = model;  // no validation rounds ran

  result.record.variant = variant_name(cfg.variant);
  result.record.seed = cfg.seed;
  result.record.config_fingerprint = config_fingerprint(cfg);
  result.record.epochs_trained = cfg.epochs;
  result.record.best_val_accuracy = std::max(best_val, 0.0);
  result.record.final_val_accuracy = final_val;
  result.record.final_train_loss =
      result.episode_losses.empty() ? 0.0 : result.episode_losses.back();
  return result;
}

// Meta-test on the novel classes; fills the test fields of `record`.
inline EvalSummary meta_eval(const Graph& g, const ClassSplit& split,
                             const ModelParams& model, const TrainConfig& cfg,
                             Variant variant, MetricsWriter* writer = nullptr) {
  if (static_cast<int>(split.novel.size()) < cfg.episode.n_way)
    throw InfeasibleEpisodeError("split has " + std::to_string(split.novel.size()) +
                                 " novel classes, need " +
                                 std::to_string(cfg.episode.n_way));
  const std::uint64_t test_seed = Rng(cfg.seed, 0, Role::TestStream).next_u64();
  const EvalSummary summary =
      evaluate_stream(g, model, split.novel, cfg, variant, test_seed, cfg.t_test);
  if (writer)
    writer->event({{"event", "meta_test"},
                   {"tasks", cfg.t_test},
                   {"accuracy_mean", summary.accuracy_mean},
                   {"accuracy_std", summary.accuracy_std}});
  return summary;
}

// Train + meta-test for one variant; the complete per-run record.
inline TrainResult run_variant(const Graph& g, const ClassSplit& split,
                               TrainConfig cfg, Variant variant,
                               MetricsWriter* writer = nullptr) {
  cfg.variant = variant;
  TrainResult result = meta_train(g, split, cfg, writer);
  const EvalSummary test = meta_eval(g, split, result.model, cfg, variant, writer);
  result.record.test_accuracy_mean = test.accuracy_mean;
  result.record.test_accuracy_std = test.accuracy_std;
  result.record.t_test = cfg.t_test;
  result.record.eval_stream_fingerprint = test.stream_fingerprint;
  return result;
}

inline void write_summary(const std::string& path, const MetricsRecord& r) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write summary: " + path);
  out << to_json(r).dump(2) << '\n';
}

inline MetricsRecord read_summary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open summary: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  MetricsRecord r;
  r.variant = j.value("variant", "");
  r.seed = j.value("seed", 0ULL);
  r.config_fingerprint = j.value("config_fingerprint", "");
  r.epochs_trained = j.value("epochs_trained", 0);
  r.best_val_accuracy = j.value("best_val_accuracy", 0.0);
  r.final_val_accuracy = j.value("final_val_accuracy", 0.0);
  r.test_accuracy_mean = j.value("test_accuracy_mean", 0.0);
  r.test_accuracy_std = j.value("test_accuracy_std", 0.0);
  r.final_train_loss = j.value("final_train_loss", 0.0);
  r.t_test = j.value("t_test", 0);
  r.eval_stream_fingerprint = j.value("eval_stream_fingerprint", "");
  return r;
}

// Paired ablation: every (variant, seed) run shares the seed's meta-test
// stream; fingerprints are checked, not assumed.
inline std::vector<MetricsRecord> run_ablation(
    const Graph& g, const ClassSplit& split, const TrainConfig& base_cfg,
    const std::vector<Variant>& variants, const std::vector<std::uint64_t>& seeds,
    const std::string& out_dir = "") {
  std::vector<MetricsRecord> records;
  for (std::uint64_t seed : seeds) {
    std::string first_fingerprint;
    for (Variant variant : variants) {
      TrainConfig cfg = base_cfg;
      cfg.seed = seed;
      cfg.variant = variant;
      MetricsWriter null_writer;
      MetricsWriter* writer = &null_writer;
      MetricsWriter file_writer;
      std::string run_dir;
      if (!out_dir.empty()) {
        run_dir = out_dir + "/" + variant_name(variant) + "_seed" +
                  std::to_string(seed);
        std::filesystem::create_directories(run_dir);
        file_writer = MetricsWriter(run_dir + "/metrics.jsonl");
        writer = &file_writer;
      }
      TrainResult result = run_variant(g, split, cfg, variant, writer);
      if (first_fingerprint.empty()) {
        first_fingerprint = result.record.eval_stream_fingerprint;
      } else if (result.record.eval_stream_fingerprint != first_fingerprint) {
        throw IntegrityError("meta-test streams diverged between variants for seed " +
                             std::to_string(seed));
      }
      if (!run_dir.empty()) {
        write_summary(run_dir + "/summary.json", result.record);
        save_checkpoint(run_dir + "/model.tentc", result.model);
      }
      records.push_back(result.record);
    }
  }
  return records;
}

// CSV of variant x seed accuracies plus per-variant mean/std over seeds.
inline std::string ablation_csv(const std::vector<MetricsRecord>& records) {
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  for (const auto& r : records) {
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end())
      variants.push_back(r.variant);
    if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end())
      seeds.push_back(r.seed);
  }
  auto find = [&](const std::string& v, std::uint64_t s) -> const MetricsRecord* {
    for (const auto& r : records)
      if (r.variant == v && r.seed == s) return &r;
    return nullptr;
  };
  std::string csv = "variant";
  for (std::uint64_t s : seeds) csv += ",seed" + std::to_string(s);
  csv += ",mean,std\n";
  char buf[64];
  for (const auto& v : variants) {
    csv += v;
    double sum = 0.0, sum_sq = 0.0;
    int n = 0;
    for (std::uint64_t s : seeds) {
      const MetricsRecord* r = find(v, s);
      if (r) {
        std::snprintf(buf, sizeof(buf), ",%.6f", r->test_accuracy_mean);
        csv += buf;
        sum += r->test_accuracy_mean;
        sum_sq += r->test_accuracy_mean * r->test_accuracy_mean;
        ++n;
      } else {
        csv += ",";
      }
    }
    const double mean = n ? sum / n : 0.0;
    const double var = n ? std::max(0.0, sum_sq / n - mean * mean) : 0.0;
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f\n", mean, std::sqrt(var));
    csv += buf;
  }
  return csv;
}

}  // namespace tent
