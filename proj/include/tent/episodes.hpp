#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tent/error.hpp"
#include "tent/graph.hpp"
#include "tent/rng.hpp"

namespace tent {

struct EpisodeConfig {
  int n_way = 5;
  int k_shot = 5;
  int query_size = 10;
  int train_n_way = 5;
  int train_k_shot = 5;

  void validate() const {
    if (n_way < 2 || train_n_way < 2)
      throw ArgumentError("n_way must be >= 2");
    if (k_shot < 1 || train_k_shot < 1)
      throw ArgumentError("k_shot must be >= 1");
    if (query_size < 1) throw ArgumentError("query_size must be >= 1");
  }
};

// One episode: a balanced support set (slot-major, K nodes per slot) and Q
// query nodes, slots repeating round-robin. class_map[slot] is the global
// class id behind each local slot.
struct MetaTask {
  std::vector<std::pair<int, int>> support;  // (node id, class slot)
  std::vector<std::pair<int, int>> query;
  std::vector<int> class_map;

  int n_way() const { return static_cast<int>(class_map.size()); }
  int k_shot() const {
    return n_way() ? static_cast<int>(support.size()) / n_way() : 0;
  }
  std::vector<int> support_nodes_of_slot(int slot) const {
    std::vector<int> out;
    for (const auto& [v, s] : support)
      if (s == slot) out.push_back(v);
    return out;
  }
  std::vector<int> all_support_nodes() const {
    std::vector<int> out;
    out.reserve(support.size());
    for (const auto& [v, s] : support) out.push_back(v);
    return out;
  }
};

// Labeled-node lists per class, precomputed once per (graph, class set).
class ClassIndex {
 public:
  ClassIndex(const Graph& g, const std::vector<int>& classes) {
    for (int c : classes) {
      auto nodes = g.nodes_of_class(c);
      members_.emplace(c, std::move(nodes));
    }
  }

  const std::vector<int>& members(int c) const { return members_.at(c); }
  std::size_t class_count() const { return members_.size(); }

 private:
  std::map<int, std::vector<int>> members_;
};

namespace detail {

inline int queries_for_slot(int q_total, int n_way, int slot) {
  return q_total / n_way + (slot < q_total % n_way ? 1 : 0);
}

}  // namespace detail

// Samples one N-way K-shot task from `split_classes`. Deterministic given
// (base_seed, task_index): class draw, support draw, and query draw each use
// their own keyed substream, so tasks can be materialized in any order.
// Classes with fewer than K + ceil(Q/N) labeled nodes are redrawn, up to 100
// attempts.
inline MetaTask sample_meta_task(const ClassIndex& index,
                                 const std::vector<int>& split_classes,
                                 int n_way, int k_shot, int query_size,
                                 std::uint64_t base_seed,
                                 std::uint64_t task_index) {
  if (n_way < 1 || k_shot < 1 || query_size < 1)
    throw ArgumentError("episode shape must be positive");
  if (static_cast<int>(split_classes.size()) < n_way)
    throw InfeasibleEpisodeError(
        "need " + std::to_string(n_way) + " classes but the split has " +
        std::to_string(split_classes.size()));

  const int need_per_class =
      k_shot + (query_size + n_way - 1) / n_way;  // K + ceil(Q/N)

  Rng class_rng(base_seed, task_index, Role::ClassDraw);
  std::vector<int> chosen;
  std::vector<int> deficient;
  constexpr int kMaxRedraws = 100;
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    chosen = class_rng.sample_without_replacement(split_classes,
                                                  static_cast<std::size_t>(n_way));
    deficient.clear();
    for (int c : chosen)
      if (static_cast<int>(index.members(c).size()) < need_per_class)
        deficient.push_back(c);
    if (deficient.empty()) break;
    chosen.clear();
  }
  if (chosen.empty()) {
    std::string names;
    for (int c : deficient) names += (names.empty() ? "" : ", ") + std::to_string(c);
    throw InfeasibleEpisodeError(
        "no feasible class subset after " + std::to_string(kMaxRedraws) +
        " redraws; deficient classes: " + names + " (need " +
        std::to_string(need_per_class) + " labeled nodes each)");
  }

  MetaTask task;
  task.class_map = chosen;

  Rng support_rng(base_seed, task_index, Role::Support);
  Rng query_rng(base_seed, task_index, Role::Query);
  std::vector<std::vector<int>> slot_queries(static_cast<std::size_t>(n_way));
  for (int slot = 0; slot < n_way; ++slot) {
    const auto& pool = index.members(chosen[static_cast<std::size_t>(slot)]);
    auto picked = support_rng.sample_without_replacement(
        pool, static_cast<std::size_t>(k_shot));
    std::sort(picked.begin(), picked.end());
    for (int v : picked) task.support.emplace_back(v, slot);

    std::vector<int> remaining;
    remaining.reserve(pool.size() - picked.size());
    for (int v : pool)
      if (!std::binary_search(picked.begin(), picked.end(), v))
        remaining.push_back(v);
    const int q_here = detail::queries_for_slot(query_size, n_way, slot);
    slot_queries[static_cast<std::size_t>(slot)] =
        query_rng.sample_without_replacement(remaining,
                                             static_cast<std::size_t>(q_here));
  }
  for (int t = 0; t < query_size; ++t) {
    const int slot = t % n_way;
    task.query.emplace_back(
        slot_queries[static_cast<std::size_t>(slot)][static_cast<std::size_t>(t / n_way)],
        slot);
  }
  return task;
}

// Reproducible sequence of tasks; task i depends only on (base_seed, i).
class EpisodeStream {
 public:
  EpisodeStream(const Graph& g, std::vector<int> split_classes, int n_way,
                int k_shot, int query_size, std::uint64_t base_seed)
      : index_(g, split_classes),
        classes_(std::move(split_classes)),
        n_way_(n_way),
        k_shot_(k_shot),
        query_size_(query_size),
        base_seed_(base_seed) {}

  MetaTask task(std::uint64_t i) const {
    return sample_meta_task(index_, classes_, n_way_, k_shot_, query_size_,
                            base_seed_, i);
  }

  std::vector<MetaTask> take(std::uint64_t count) const {
    std::vector<MetaTask> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) out.push_back(task(i));
    return out;
  }

 private:
  ClassIndex index_;
  std::vector<int> classes_;
  int n_way_, k_shot_, query_size_;
  std::uint64_t base_seed_;
};

// Debug dump: one JSON line per task.
inline std::string task_to_jsonl(const MetaTask& task,
                                 std::uint64_t task_index) {
  nlohmann::json j;
  j["task_index"] = task_index;
  j["class_map"] = task.class_map;
  auto pairs = [](const std::vector<std::pair<int, int>>& xs) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [v, s] : xs) a.push_back({{"node", v}, {"slot", s}});
    return a;
  };
  j["support"] = pairs(task.support);
  j["query"] = pairs(task.query);
  return j.dump();
}

}  // namespace tent
