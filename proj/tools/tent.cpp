// tent: episodic few-shot node classification on graphs.
//
// Subcommands: gen (synthetic dataset), train, eval, ablate, report.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tent/graph_io.hpp"
#include "tent/harness.hpp"
#include "tent/sbm.hpp"

namespace {

using tent::TrainConfig;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<int> epochs, n_way, k_shot, query, train_n_way, train_k_shot;
  std::optional<int> t_test;
  std::optional<double> learning_rate, weight_decay, gamma, dropout;

  void apply(TrainConfig& cfg) const {
    if (seed) cfg.seed = *seed;
    if (variant) cfg.variant = tent::parse_variant(*variant);
    if (epochs) cfg.epochs = *epochs;
    if (n_way) {
      cfg.episode.n_way = *n_way;
      if (!train_n_way) cfg.episode.train_n_way = *n_way;
    }
    if (k_shot) {
      cfg.episode.k_shot = *k_shot;
      if (!train_k_shot) cfg.episode.train_k_shot = *k_shot;
    }
    if (query) cfg.episode.query_size = *query;
    if (train_n_way) cfg.episode.train_n_way = *train_n_way;
    if (train_k_shot) cfg.episode.train_k_shot = *train_k_shot;
    if (t_test) cfg.t_test = *t_test;
    if (learning_rate) cfg.learning_rate = *learning_rate;
    if (weight_decay) cfg.weight_decay = *weight_decay;
    if (gamma) cfg.gamma = *gamma;
    if (dropout) cfg.dropout = *dropout;
  }
};

void add_override_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--variant", o.variant,
                  "full | no_node | no_class | no_task | protonet");
  cmd->add_option("--epochs", o.epochs, "meta-training episodes");
  cmd->add_option("--n-way", o.n_way, "classes per meta-test task");
  cmd->add_option("--k-shot", o.k_shot, "support nodes per class");
  cmd->add_option("--query", o.query, "query nodes per task");
  cmd->add_option("--train-n-way", o.train_n_way, "classes per meta-training task");
  cmd->add_option("--train-k-shot", o.train_k_shot,
                  "support nodes per class during meta-training");
  cmd->add_option("--t-test", o.t_test, "meta-test task count");
  cmd->add_option("--lr", o.learning_rate, "learning rate");
  cmd->add_option("--weight-decay", o.weight_decay, "weight decay");
  cmd->add_option("--gamma", o.gamma, "auxiliary loss weight");
  cmd->add_option("--dropout", o.dropout, "dropout rate");
}

TrainConfig load_config(const std::string& config_path, const Overrides& o) {
  TrainConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw tent::FormatError("cannot open config: " + config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw tent::FormatError(config_path + ": " + e.what());
    }
    cfg = tent::train_config_from_json(j);
  }
  o.apply(cfg);
  cfg.validate();
  return cfg;
}

struct Dataset {
  tent::Graph graph;
  tent::ClassSplit split;
};

Dataset load(const std::string& dir) {
  tent::DatasetPaths paths(dir);
  return {tent::load_dataset(dir), tent::io::read_split_manifest(paths.split)};
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

int cmd_gen(const std::string& preset, tent::SbmConfig cfg,
            std::uint64_t seed, const std::string& out) {
  if (!preset.empty()) {
    if (preset != "sbm-small")
      throw tent::ArgumentError("unknown preset '" + preset + "'");
    cfg = tent::sbm_small_preset(seed);
  }
  cfg.seed = seed;
  tent::generate_sbm(cfg, out);
  std::cout << "wrote dataset (" << cfg.classes * cfg.nodes_per_class
            << " nodes, " << cfg.classes << " classes) to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& data, const std::string& config_path,
              const Overrides& o, const std::string& out) {
  const auto start = std::chrono::steady_clock::now();
  const TrainConfig cfg = load_config(config_path, o);
  Dataset ds = load(data);
  std::filesystem::create_directories(out);
  tent::MetricsWriter writer(out + "/metrics.jsonl");
  tent::TrainResult result =
      tent::run_variant(ds.graph, ds.split, cfg, cfg.variant, &writer);
  tent::write_summary(out + "/summary.json", result.record);
  tent::save_checkpoint(out + "/model.tentc", result.model);
  std::cerr << "wall_clock_sec " << seconds_since(start) << "\n";
  std::cout << "variant " << result.record.variant << " seed "
            << result.record.seed << " test_accuracy "
            << result.record.test_accuracy_mean << " +/- "
            << result.record.test_accuracy_std << "\n";
  return 0;
}

int cmd_eval(const std::string& data, const std::string& model_path,
             const Overrides& o, const std::string& out) {
  const auto start = std::chrono::steady_clock::now();
  const TrainConfig cfg = load_config("", o);
  Dataset ds = load(data);
  tent::ModelParams model = tent::load_checkpoint(model_path);
  std::filesystem::create_directories(out);
  tent::MetricsWriter writer(out + "/metrics.jsonl");
  const tent::EvalSummary summary =
      tent::meta_eval(ds.graph, ds.split, model, cfg, cfg.variant, &writer);
  tent::MetricsRecord record;
  record.variant = tent::variant_name(cfg.variant);
  record.seed = cfg.seed;
  record.config_fingerprint = tent::config_fingerprint(cfg);
  record.test_accuracy_mean = summary.accuracy_mean;
  record.test_accuracy_std = summary.accuracy_std;
  record.t_test = cfg.t_test;
  record.eval_stream_fingerprint = summary.stream_fingerprint;
  tent::write_summary(out + "/summary.json", record);
  std::cerr << "wall_clock_sec " << seconds_since(start) << "\n";
  std::cout << "test_accuracy " << summary.accuracy_mean << " +/- "
            << summary.accuracy_std << "\n";
  return 0;
}

int cmd_ablate(const std::string& data, const std::string& config_path,
               const Overrides& o, int seeds,
               const std::string& variants_csv, const std::string& out) {
  const auto start = std::chrono::steady_clock::now();
  TrainConfig cfg = load_config(config_path, o);
  Dataset ds = load(data);
  std::vector<tent::Variant> variants;
  std::stringstream ss(variants_csv);
  std::string name;
  while (std::getline(ss, name, ','))
    if (!name.empty()) variants.push_back(tent::parse_variant(name));
  std::vector<std::uint64_t> seed_list;
  for (int s = 0; s < seeds; ++s)
    seed_list.push_back(cfg.seed + static_cast<std::uint64_t>(s));
  std::filesystem::create_directories(out);
  const auto records =
      tent::run_ablation(ds.graph, ds.split, cfg, variants, seed_list, out);
  std::ofstream csv(out + "/ablation.csv");
  csv << tent::ablation_csv(records);
  std::cerr << "wall_clock_sec " << seconds_since(start) << "\n";
  std::cout << tent::ablation_csv(records);
  return 0;
}

int cmd_report(const std::string& in_dir, const std::string& out_file) {
  std::vector<tent::MetricsRecord> records;
  std::vector<std::filesystem::path> files;
  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(in_dir))
    if (entry.is_regular_file() && entry.path().filename() == "summary.json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) records.push_back(tent::read_summary(f.string()));
  if (records.empty())
    throw tent::ArgumentError("no summary.json files under " + in_dir);
  const std::string csv = tent::ablation_csv(records);
  if (out_file.empty() || out_file == "-") {
    std::cout << csv;
  } else {
    std::ofstream out(out_file);
    if (!out) throw tent::FormatError("cannot write " + out_file);
    out << csv;
    std::cout << "wrote " << out_file << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task-adaptive few-shot node classification"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic SBM dataset");
  std::string preset, gen_out = "data";
  std::uint64_t gen_seed = 0;
  tent::SbmConfig sbm;
  gen->add_option("--preset", preset, "named preset (sbm-small)");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--classes", sbm.classes, "number of classes");
  gen->add_option("--nodes-per-class", sbm.nodes_per_class, "nodes per class");
  gen->add_option("--p-in", sbm.p_in, "intra-class edge probability");
  gen->add_option("--p-out", sbm.p_out, "inter-class edge probability");
  gen->add_option("--dim", sbm.feature_dim, "feature dimension");
  gen->add_option("--noise", sbm.feature_noise, "feature noise scale");
  gen->add_option("--split", [&sbm](const std::vector<std::string>& vals) {
    return std::sscanf(vals[0].c_str(), "%d/%d/%d", &sbm.n_base, &sbm.n_val,
                       &sbm.n_novel) == 3;
  }, "base/val/novel class counts, e.g. 5/5/5");

  // train
  auto* train = app.add_subcommand("train", "meta-train and meta-test a model");
  std::string train_data, train_config, train_out = "run";
  Overrides train_o;
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--config", train_config, "JSON config file");
  train->add_option("--out", train_out, "output directory");
  add_override_flags(train, train_o);

  // eval
  auto* eval = app.add_subcommand("eval", "meta-test a saved checkpoint");
  std::string eval_data, eval_model, eval_out = "eval";
  Overrides eval_o;
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--model", eval_model, "checkpoint file")->required();
  eval->add_option("--out", eval_out, "output directory");
  add_override_flags(eval, eval_o);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "paired runs of all variants");
  std::string abl_data, abl_config, abl_out = "ablation";
  std::string abl_variants = "full,no_node,no_class,no_task,protonet";
  int abl_seeds = 5;
  Overrides abl_o;
  ablate->add_option("--data", abl_data, "dataset directory")->required();
  ablate->add_option("--config", abl_config, "JSON config file");
  ablate->add_option("--seeds", abl_seeds, "number of consecutive seeds");
  ablate->add_option("--variants", abl_variants, "comma-separated variant list");
  ablate->add_option("--out", abl_out, "output directory");
  add_override_flags(ablate, abl_o);

  // report
  auto* report = app.add_subcommand("report", "render a CSV accuracy table");
  std::string rep_in, rep_out;
  report->add_option("--in", rep_in, "directory containing run outputs")->required();
  report->add_option("--out", rep_out, "CSV output file ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage error
  }

  try {
    if (gen->parsed()) return cmd_gen(preset, sbm, gen_seed, gen_out);
    if (train->parsed()) return cmd_train(train_data, train_config, train_o, train_out);
    if (eval->parsed()) return cmd_eval(eval_data, eval_model, eval_o, eval_out);
    if (ablate->parsed())
      return cmd_ablate(abl_data, abl_config, abl_o, abl_seeds, abl_variants, abl_out);
    if (report->parsed()) return cmd_report(rep_in, rep_out);
  } catch (const tent::Error& e) {
    nlohmann::json err{{"type", e.kind()}, {"message", e.what()}};
    std::cerr << "error: " << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    nlohmann::json err{{"type", "internal"}, {"message", e.what()}};
    std::cerr << "error: " << err.dump() << "\n";
    return 1;
  }
  return 0;
}
