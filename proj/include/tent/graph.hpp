#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "tent/error.hpp"
#include "tent/rng.hpp"

namespace tent {

using Mat = Eigen::MatrixXd;

// Local id of the virtual class node inside a class-ego subgraph; it has no
// counterpart in the parent graph.
inline constexpr int kVirtualNode = -1;

// Non-owning view of a CSR adjacency. Points at the underlying buffers, so it
// stays valid when the owning object itself is moved.
struct CsrView {
  const int* offsets = nullptr;
  const int* targets = nullptr;
  int nodes = 0;
  int node_count() const { return nodes; }
};

inline CsrView make_csr_view(const std::vector<int>& offsets,
                             const std::vector<int>& targets) {
  return {offsets.data(), targets.data(), static_cast<int>(offsets.size()) - 1};
}

// Immutable attributed graph in compressed sparse row form. Adjacency is
// undirected (both directions stored), deduplicated, self-loop free, and each
// neighbor list is sorted. Safe for concurrent reads once built.
class Graph {
 public:
  Graph(int node_count, const std::vector<std::pair<int, int>>& edges,
        Mat features, std::vector<int> labels)
      : node_count_(node_count),
        features_(std::move(features)),
        labels_(std::move(labels)) {
    if (node_count_ <= 0) throw IntegrityError("empty graph (0 nodes)");
    if (features_.rows() != node_count_)
      throw IntegrityError("feature rows (" + std::to_string(features_.rows()) +
                           ") != node count (" + std::to_string(node_count_) + ")");
    if (static_cast<int>(labels_.size()) != node_count_)
      throw IntegrityError("label count (" + std::to_string(labels_.size()) +
                           ") != node count (" + std::to_string(node_count_) + ")");
    for (int y : labels_)
      if (y < -1) throw IntegrityError("label " + std::to_string(y) + " < -1");
    build_adjacency(edges);
  }

  int node_count() const { return node_count_; }
  int feature_dim() const { return static_cast<int>(features_.cols()); }
  std::int64_t undirected_edge_count() const {
    return static_cast<std::int64_t>(targets_.size()) / 2;
  }
  const Mat& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  int label(int v) const { return labels_[check_node(v)]; }

  const std::vector<int>& edge_offsets() const { return offsets_; }
  const std::vector<int>& edge_targets() const { return targets_; }
  CsrView adjacency() const { return make_csr_view(offsets_, targets_); }

  // Sorted one-hop neighbor list of v.
  std::vector<int> neighbors(int v) const {
    check_node(v);
    return {targets_.begin() + offsets_[v], targets_.begin() + offsets_[v + 1]};
  }

  int degree(int v) const {
    check_node(v);
    return offsets_[v + 1] - offsets_[v];
  }

  // All nodes at shortest-path distance <= k from v (v included), sorted.
  std::vector<int> k_hop_neighborhood(int v, int k) const {
    check_node(v);
    if (k < 0) throw ArgumentError("k must be >= 0");
    std::vector<int> dist(node_count_, -1);
    std::vector<int> out{v};
    dist[v] = 0;
    std::queue<int> frontier;
    frontier.push(v);
    while (!frontier.empty()) {
      const int u = frontier.front();
      frontier.pop();
      if (dist[u] == k) continue;
      for (int i = offsets_[u]; i < offsets_[u + 1]; ++i) {
        const int w = targets_[i];
        if (dist[w] < 0) {
          dist[w] = dist[u] + 1;
          out.push_back(w);
          frontier.push(w);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  // Distinct non-negative label values, ascending.
  std::vector<int> observed_classes() const {
    std::vector<int> cs(labels_.begin(), labels_.end());
    std::sort(cs.begin(), cs.end());
    cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
    if (!cs.empty() && cs.front() < 0) cs.erase(cs.begin());
    return cs;
  }

  // Labeled node ids of class c, ascending.
  std::vector<int> nodes_of_class(int c) const {
    std::vector<int> out;
    for (int v = 0; v < node_count_; ++v)
      if (labels_[v] == c) out.push_back(v);
    return out;
  }

  int check_node(int v) const {
    if (v < 0 || v >= node_count_)
      throw BoundsError("node id " + std::to_string(v) + " out of range [0, " +
                        std::to_string(node_count_) + ")");
    return v;
  }

 private:
  void build_adjacency(const std::vector<std::pair<int, int>>& edges) {
    // Symmetrize, drop self-loops, dedup, sort.
    std::vector<std::pair<int, int>> dir;
    dir.reserve(edges.size() * 2);
    for (const auto& [u, v] : edges) {
      if (u < 0 || u >= node_count_ || v < 0 || v >= node_count_)
        throw IntegrityError("edge (" + std::to_string(u) + ", " +
                             std::to_string(v) + ") references a node id outside [0, " +
                             std::to_string(node_count_) + ")");
      if (u == v) continue;
      dir.emplace_back(u, v);
      dir.emplace_back(v, u);
    }
    std::sort(dir.begin(), dir.end());
    dir.erase(std::unique(dir.begin(), dir.end()), dir.end());
    offsets_.assign(node_count_ + 1, 0);
    for (const auto& [u, v] : dir) offsets_[u + 1]++;
    for (int i = 0; i < node_count_; ++i) offsets_[i + 1] += offsets_[i];
    targets_.resize(dir.size());
    for (std::size_t i = 0; i < dir.size(); ++i) targets_[i] = dir[i].second;
  }

  int node_count_;
  std::vector<int> offsets_;
  std::vector<int> targets_;
  Mat features_;
  std::vector<int> labels_;
};

// Node-induced subgraph over local indices. `nodes[i]` is the original id of
// local node i (kVirtualNode for a synthesized node). Local adjacency holds
// the parent edges induced on `nodes` plus any explicitly added virtual
// edges, symmetric and sorted like the parent.
struct Subgraph {
  std::vector<int> nodes;
  std::vector<int> offsets;
  std::vector<int> targets;
  Mat features;
  int centroid_index = 0;

  int size() const { return static_cast<int>(nodes.size()); }
  CsrView adjacency() const { return make_csr_view(offsets, targets); }
  std::int64_t undirected_edge_count() const {
    return static_cast<std::int64_t>(targets.size()) / 2;
  }
};

namespace detail {

// CSR from a symmetric local edge list (both directions present).
inline void csr_from_local_edges(int n, std::vector<std::pair<int, int>>& dir,
                                 std::vector<int>& offsets,
                                 std::vector<int>& targets) {
  std::sort(dir.begin(), dir.end());
  dir.erase(std::unique(dir.begin(), dir.end()), dir.end());
  offsets.assign(n + 1, 0);
  for (const auto& [u, v] : dir) offsets[u + 1]++;
  for (int i = 0; i < n; ++i) offsets[i + 1] += offsets[i];
  targets.resize(dir.size());
  for (std::size_t i = 0; i < dir.size(); ++i) targets[i] = dir[i].second;
}

// Local adjacency induced by `g` on sorted `nodes`, plus `extra` local edges.
inline void induced_adjacency(const Graph& g, const std::vector<int>& nodes,
                              const std::vector<std::pair<int, int>>& extra,
                              std::vector<int>& offsets,
                              std::vector<int>& targets) {
  const int n = static_cast<int>(nodes.size());
  std::vector<std::pair<int, int>> dir;
  for (int li = 0; li < n; ++li) {
    const int u = nodes[li];
    if (u == kVirtualNode) continue;
    for (int w : g.neighbors(u)) {
      const auto it = std::lower_bound(nodes.begin(), nodes.end(), w);
      if (it != nodes.end() && *it == w)
        dir.emplace_back(li, static_cast<int>(it - nodes.begin()));
    }
  }
  for (const auto& [a, b] : extra) {
    dir.emplace_back(a, b);
    dir.emplace_back(b, a);
  }
  csr_from_local_edges(n, dir, offsets, targets);
}

}  // namespace detail

// Subgraph of g induced on `nodes` with the parent's feature rows copied.
inline Subgraph induced_subgraph(const Graph& g, std::vector<int> nodes,
                                 int centroid) {
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  for (int v : nodes) g.check_node(v);
  const auto it = std::lower_bound(nodes.begin(), nodes.end(), centroid);
  if (it == nodes.end() || *it != centroid)
    throw ArgumentError("centroid " + std::to_string(centroid) +
                        " is not in the node set");
  Subgraph sg;
  sg.nodes = std::move(nodes);
  sg.centroid_index = static_cast<int>(it - sg.nodes.begin());
  detail::induced_adjacency(g, sg.nodes, {}, sg.offsets, sg.targets);
  sg.features.resize(sg.size(), g.feature_dim());
  for (int i = 0; i < sg.size(); ++i)
    sg.features.row(i) = g.features().row(sg.nodes[i]);
  return sg;
}

// Disjoint partition of class ids into base / validation / novel sets.
struct ClassSplit {
  std::vector<int> base;
  std::vector<int> val;
  std::vector<int> novel;
};

// Seeded shuffle of the observed classes, partitioned in order. Same seed,
// same split.
inline ClassSplit make_class_split(const Graph& g, int n_base, int n_val,
                                   int n_novel, std::uint64_t seed) {
  if (n_base < 1 || n_val < 1 || n_novel < 1)
    throw ArgumentError("each split part needs at least one class");
  std::vector<int> classes = g.observed_classes();
  const int want = n_base + n_val + n_novel;
  if (want > static_cast<int>(classes.size()))
    throw ArgumentError("split needs " + std::to_string(want) +
                        " classes but the graph has " +
                        std::to_string(classes.size()));
  Rng rng(seed, 0, Role::Split);
  classes = rng.sample_without_replacement(std::move(classes), classes.size());
  ClassSplit split;
  split.base.assign(classes.begin(), classes.begin() + n_base);
  split.val.assign(classes.begin() + n_base, classes.begin() + n_base + n_val);
  split.novel.assign(classes.begin() + n_base + n_val,
                     classes.begin() + want);
  std::sort(split.base.begin(), split.base.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.novel.begin(), split.novel.end());
  return split;
}

}  // namespace tent
