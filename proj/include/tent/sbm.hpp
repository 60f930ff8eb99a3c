#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tent/error.hpp"
#include "tent/graph.hpp"
#include "tent/graph_io.hpp"
#include "tent/rng.hpp"

namespace tent {

// Stochastic block model with class-coded features: each class mean is a
// distinct standard basis vector (orthogonal, unit norm) plus Gaussian noise.
struct SbmConfig {
  int classes = 15;
  int nodes_per_class = 50;
  double p_in = 0.2;
  double p_out = 0.01;
  int feature_dim = 32;
  double feature_noise = 0.3;
  int n_base = 5;
  int n_val = 5;
  int n_novel = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (classes < 3)
      throw ArgumentError("need at least 3 classes for a base/val/novel split");
    if (nodes_per_class < 1) throw ArgumentError("nodes_per_class must be >= 1");
    if (!(0.0 <= p_out && p_out <= p_in && p_in <= 1.0))
      throw ArgumentError("need 0 <= p_out <= p_in <= 1");
    if (feature_dim < classes)
      throw ArgumentError("feature_dim must be >= classes for orthogonal means");
    if (feature_noise < 0.0) throw ArgumentError("feature_noise must be >= 0");
    if (n_base < 1 || n_val < 1 || n_novel < 1 ||
        n_base + n_val + n_novel > classes)
      throw ArgumentError("infeasible split sizes");
  }
};

inline SbmConfig sbm_small_preset(std::uint64_t seed) {
  SbmConfig cfg;
  cfg.seed = seed;
  return cfg;  // defaults are the sbm-small preset
}

inline Graph generate_sbm_graph(const SbmConfig& cfg) {
  cfg.validate();
  const int n = cfg.classes * cfg.nodes_per_class;
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i / cfg.nodes_per_class;

  Rng edge_rng(cfg.seed, 0, Role::SbmEdges);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double p = labels[static_cast<std::size_t>(i)] ==
                               labels[static_cast<std::size_t>(j)]
                           ? cfg.p_in
                           : cfg.p_out;
      if (edge_rng.next_double() < p) edges.emplace_back(i, j);
    }

  Rng feat_rng(cfg.seed, 0, Role::SbmFeatures);
  Mat features(n, cfg.feature_dim);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < cfg.feature_dim; ++d)
      features(i, d) = cfg.feature_noise * feat_rng.next_gaussian();
    features(i, labels[static_cast<std::size_t>(i)]) += 1.0;
  }
  return Graph(n, edges, std::move(features), std::move(labels));
}

// Writes the four dataset files (edges, features, labels, split manifest).
inline void generate_sbm(const SbmConfig& cfg, const std::string& out_dir) {
  Graph g = generate_sbm_graph(cfg);
  ClassSplit split =
      make_class_split(g, cfg.n_base, cfg.n_val, cfg.n_novel, cfg.seed);
  save_dataset(out_dir, g, split);
}

}  // namespace tent
