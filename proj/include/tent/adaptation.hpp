#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tent/autodiff.hpp"
#include "tent/encoder.hpp"
#include "tent/error.hpp"
#include "tent/graph.hpp"
#include "tent/params.hpp"

namespace tent {

// Per-class subgraph: a virtual class node (local index 0) wired to the K
// support nodes, the supports' one-hop neighbors, and the parent edges
// induced on the real nodes. Features are first-step embedding rows; the
// virtual node starts from the support mean.
struct ClassEgoSubgraph {
  Subgraph sg;                      // nodes[0] == kVirtualNode, centroid 0
  std::vector<int> support_local;   // K local indices (all >= 1)
  std::vector<int> support_global;  // matching original node ids

  int k_shot() const { return static_cast<int>(support_local.size()); }
  Eigen::RowVectorXd virtual_feature() const { return sg.features.row(0); }
};

inline ClassEgoSubgraph build_class_ego_subgraph(const Graph& g,
                                                 const std::vector<int>& support,
                                                 const Mat& H) {
  if (support.empty())
    throw ArgumentError("class-ego subgraph needs at least one support node");
  if (H.rows() != g.node_count())
    throw ShapeError("first-step embeddings cover " + std::to_string(H.rows()) +
                     " of " + std::to_string(g.node_count()) + " nodes");

  // Real node set: supports plus their one-hop neighbors, deduplicated.
  std::vector<int> real;
  for (int v : support) {
    g.check_node(v);
    real.push_back(v);
    const auto nb = g.neighbors(v);
    real.insert(real.end(), nb.begin(), nb.end());
  }
  std::sort(real.begin(), real.end());
  real.erase(std::unique(real.begin(), real.end()), real.end());

  ClassEgoSubgraph ces;
  ces.sg.nodes.push_back(kVirtualNode);
  ces.sg.nodes.insert(ces.sg.nodes.end(), real.begin(), real.end());
  ces.sg.centroid_index = 0;

  std::vector<int> sorted_support(support);
  std::sort(sorted_support.begin(), sorted_support.end());
  if (std::adjacent_find(sorted_support.begin(), sorted_support.end()) !=
      sorted_support.end())
    throw ArgumentError("support nodes must be distinct");
  std::vector<std::pair<int, int>> virtual_edges;
  for (int v : sorted_support) {
    const auto it = std::lower_bound(real.begin(), real.end(), v);
    const int local = 1 + static_cast<int>(it - real.begin());
    ces.support_local.push_back(local);
    ces.support_global.push_back(v);
    virtual_edges.emplace_back(0, local);
  }

  // Build adjacency over [virtual | real...]: induced edges shift by one.
  std::vector<int> shifted_offsets, shifted_targets;
  detail::induced_adjacency(g, real, {}, shifted_offsets, shifted_targets);
  std::vector<std::pair<int, int>> dir;
  for (int li = 0; li < static_cast<int>(real.size()); ++li)
    for (int i = shifted_offsets[li]; i < shifted_offsets[li + 1]; ++i)
      dir.emplace_back(li + 1, shifted_targets[i] + 1);
  for (const auto& [a, b] : virtual_edges) {
    dir.emplace_back(a, b);
    dir.emplace_back(b, a);
  }
  detail::csr_from_local_edges(ces.sg.size(), dir, ces.sg.offsets,
                               ces.sg.targets);

  ces.sg.features.resize(ces.sg.size(), H.cols());
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(H.cols());
  for (int v : support) mean += H.row(v);
  ces.sg.features.row(0) = mean / static_cast<double>(support.size());
  for (std::size_t i = 0; i < real.size(); ++i)
    ces.sg.features.row(static_cast<Eigen::Index>(i) + 1) = H.row(real[i]);
  return ces;
}

// 2-hop induced subgraph around a query node; centroid is the query itself,
// no virtual node. Features are first-step embedding rows.
inline Subgraph build_query_subgraph(const Graph& g, int q, const Mat& H) {
  g.check_node(q);
  Subgraph sg;
  sg.nodes = g.k_hop_neighborhood(q, 2);
  const auto it = std::lower_bound(sg.nodes.begin(), sg.nodes.end(), q);
  sg.centroid_index = static_cast<int>(it - sg.nodes.begin());
  detail::induced_adjacency(g, sg.nodes, {}, sg.offsets, sg.targets);
  sg.features.resize(sg.size(), H.cols());
  for (int i = 0; i < sg.size(); ++i)
    sg.features.row(i) = H.row(sg.nodes[i]);
  return sg;
}

// Tape-side assembly of the same feature matrices, so gradients reach the
// first-step encoder through every subgraph row.
inline ad::Var class_ego_features(ad::Tape& t, ad::Var H,
                                  const ClassEgoSubgraph& ces) {
  ad::Var support_rows = t.gather_rows(H, ces.support_global);
  ad::Var virtual_row = t.mean_rows(support_rows);
  std::vector<int> real(ces.sg.nodes.begin() + 1, ces.sg.nodes.end());
  return t.vstack({virtual_row, t.gather_rows(H, real)});
}

inline ad::Var query_features(ad::Tape& t, ad::Var H, const Subgraph& qsg) {
  return t.gather_rows(H, qsg.nodes);
}

// One FiLM adapter network (alpha or beta): d_h -> d_h (ReLU) -> d_theta,
// output layer zero-initialized so adaptation starts at the identity.
struct FilmAdapterVars {
  ad::Var alpha_flat;
  ad::Var beta_flat;
  const ParamSchema* schema = nullptr;
};

namespace detail {

inline ad::Var adapter_forward(ad::Tape& t, ad::Var flat,
                               const ParamSchema& schema, ad::Var ctx) {
  ad::Var w1 = schema_tensor(t, flat, schema, "w1");
  ad::Var b1 = schema_tensor(t, flat, schema, "b1");
  ad::Var w2 = schema_tensor(t, flat, schema, "w2");
  ad::Var b2 = schema_tensor(t, flat, schema, "b2");
  ad::Var hidden = t.relu(t.add_row_broadcast(t.matmul(ctx, w1), b1));
  return t.add_row_broadcast(t.matmul(hidden, w2), b2);
}

}  // namespace detail

// theta_adapted = (alpha + 1) o theta + beta, with alpha/beta produced from
// the mean of `context_rows` (class support rows, or the whole support set
// for queries).
inline ad::Var film_adapt(ad::Tape& t, ad::Var theta, ad::Var context_rows,
                          const FilmAdapterVars& adapter) {
  if (t.value(context_rows).rows() < 1)
    throw ArgumentError("film_adapt: empty context");
  ad::Var ctx = t.mean_rows(context_rows);
  ad::Var alpha = detail::adapter_forward(t, adapter.alpha_flat, *adapter.schema, ctx);
  ad::Var beta = detail::adapter_forward(t, adapter.beta_flat, *adapter.schema, ctx);
  if (t.value(alpha).cols() != t.value(theta).rows())
    throw ShapeError("adapter output dim " +
                     std::to_string(t.value(alpha).cols()) +
                     " != parameter count " +
                     std::to_string(t.value(theta).rows()));
  ad::Var scale = t.transpose(t.shift(alpha, 1.0));
  return t.add(t.mul(scale, theta), t.transpose(beta));
}

// Prototype s_i plus the K support-node rows from the same pass (the rows
// feeding the temperature computation).
struct PrototypeOutput {
  ad::Var prototype;     // 1 x d_s
  ad::Var support_rows;  // K x d_s
};

inline PrototypeOutput class_prototype(ad::Tape& t, ad::Var theta_i,
                                       const GinConfig& cfg,
                                       const ClassEgoSubgraph& ces,
                                       ad::Var features, Mode mode = Mode::Eval,
                                       Rng* dropout_rng = nullptr) {
  ad::Var emb = gin_forward(t, theta_i, cfg, ces.sg.adjacency(), features,
                            mode, dropout_rng);
  return {centroid_readout(t, emb, ces.sg),
          t.gather_rows(emb, ces.support_local)};
}

inline ad::Var query_embedding(ad::Tape& t, ad::Var theta_q,
                               const GinConfig& cfg, const Subgraph& qsg,
                               ad::Var features, Mode mode = Mode::Eval,
                               Rng* dropout_rng = nullptr) {
  ad::Var emb = gin_forward(t, theta_q, cfg, qsg.adjacency(), features, mode,
                            dropout_rng);
  return centroid_readout(t, emb, qsg);
}

// Debug dump (nodes, edges, virtual edges, centroid).
inline std::string class_ego_to_json(const ClassEgoSubgraph& ces) {
  nlohmann::json j;
  j["nodes"] = ces.sg.nodes;
  j["centroid_index"] = ces.sg.centroid_index;
  nlohmann::json edges = nlohmann::json::array();
  nlohmann::json virtual_edges = nlohmann::json::array();
  for (int u = 0; u < ces.sg.size(); ++u)
    for (int i = ces.sg.offsets[u]; i < ces.sg.offsets[u + 1]; ++i) {
      const int v = ces.sg.targets[i];
      if (u < v) (u == 0 ? virtual_edges : edges).push_back({u, v});
    }
  j["edges"] = edges;
  j["virtual_edges"] = virtual_edges;
  j["support_local"] = ces.support_local;
  return j.dump();
}

}  // namespace tent
