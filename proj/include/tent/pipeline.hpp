#pragma once

#include <map>
#include <string>
#include <vector>

#include "tent/adaptation.hpp"
#include "tent/autodiff.hpp"
#include "tent/encoder.hpp"
#include "tent/episodes.hpp"
#include "tent/error.hpp"
#include "tent/graph.hpp"
#include "tent/matching.hpp"
#include "tent/model.hpp"

namespace tent {

enum class Variant { Full, NoNode, NoClass, NoTask, ProtoNet };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoNode: return "no_node";
    case Variant::NoClass: return "no_class";
    case Variant::NoTask: return "no_task";
    case Variant::ProtoNet: return "protonet";
  }
  throw ArgumentError("unknown variant");
}

inline Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::Full;
  if (s == "no_node") return Variant::NoNode;
  if (s == "no_class") return Variant::NoClass;
  if (s == "no_task") return Variant::NoTask;
  if (s == "protonet") return Variant::ProtoNet;
  throw ArgumentError("unknown variant '" + s +
                      "' (expected full, no_node, no_class, no_task, protonet)");
}

struct VariantTraits {
  bool class_ego;   // node-level adaptation (class-ego subgraphs)
  bool film;        // class-level adaptation (FiLM on theta)
  bool cosine_tau;  // task-level matching (cosine / adaptive temperatures)
  bool aux_ce;      // base-class auxiliary loss during meta-training
};

inline VariantTraits variant_traits(Variant v) {
  switch (v) {
    case Variant::Full: return {true, true, true, true};
    case Variant::NoNode: return {false, true, true, true};
    case Variant::NoClass: return {true, false, true, true};
    case Variant::NoTask: return {true, true, false, true};
    case Variant::ProtoNet: return {false, false, false, false};
  }
  throw ArgumentError("unknown variant");
}

// Model leaves on a tape.
struct ModelVars {
  ad::Var phi, theta, alpha_net, beta_net, head;
  std::vector<ad::Var> all() const { return {phi, theta, alpha_net, beta_net, head}; }
};

inline ModelVars load_model_vars(ad::Tape& t, const ModelParams& m,
                                 bool requires_grad) {
  auto col = [&](const ParamGroup& g) {
    return t.leaf(Mat(g.values), requires_grad);
  };
  return {col(m.phi), col(m.theta), col(m.alpha_net), col(m.beta_net),
          col(m.head)};
}

struct EpisodeResult {
  Mat logits;  // Q x N matching logits
  std::vector<int> predictions;
  double accuracy = 0.0;
  ad::Var loss{-1};  // valid only for Mode::Train
  double loss_value = 0.0;

  // Owned subgraph structures. Tape closures hold views into these, so the
  // result must outlive any backward() on the same tape.
  std::vector<ClassEgoSubgraph> class_subgraphs;
  std::vector<std::vector<Subgraph>> support_node_subgraphs;
  std::vector<Subgraph> query_subgraphs;
};

struct EpisodeOptions {
  Variant variant = Variant::Full;
  Mode mode = Mode::Eval;
  Rng* dropout_rng = nullptr;      // consumed only in Train mode
  const Mat* h_cache = nullptr;    // frozen phi evaluation cache
  double gamma = 1.0;
  // Global class id -> [0, |C_b|) for the auxiliary loss; required in Train
  // mode for variants with aux_ce.
  const std::map<int, int>* base_remap = nullptr;
};

// One meta-task, end to end: first-step embeddings, per-class adaptation,
// prototypes, query embeddings, matching logits, and (in Train mode) the
// meta-training loss on the tape.
inline EpisodeResult run_episode(ad::Tape& t, const Graph& g,
                                 const MetaTask& task, const ModelParams& m,
                                 ModelVars vars, const EpisodeOptions& opt) {
  const VariantTraits traits = variant_traits(opt.variant);
  const bool train = opt.mode == Mode::Train;
  const int n_way = task.n_way();
  Rng* drop = train ? opt.dropout_rng : nullptr;

  // First-step embeddings over the whole graph (Mode::Train recomputes so
  // gradients reach phi; the cache is only for frozen-phi evaluation).
  ad::Var h_full = opt.h_cache && !train
                       ? t.constant(*opt.h_cache)
                       : gin_forward(t, vars.phi, m.phi_cfg, g.adjacency(),
                                     t.constant(g.features()), opt.mode, drop);
  const Mat& h_value = t.value(h_full);

  EpisodeResult res;

  // All subgraph structures are built into the result before the adapted
  // passes run; the tape references them by view.
  std::vector<std::vector<int>> slot_supports(static_cast<std::size_t>(n_way));
  for (int i = 0; i < n_way; ++i)
    slot_supports[static_cast<std::size_t>(i)] = task.support_nodes_of_slot(i);

  std::vector<ClassEgoSubgraph>& class_subgraphs = res.class_subgraphs;
  std::vector<std::vector<Subgraph>>& support_node_subgraphs =
      res.support_node_subgraphs;
  if (traits.class_ego) {
    for (int i = 0; i < n_way; ++i)
      class_subgraphs.push_back(build_class_ego_subgraph(
          g, slot_supports[static_cast<std::size_t>(i)], h_value));
  } else if (opt.variant != Variant::ProtoNet) {
    for (int i = 0; i < n_way; ++i) {
      std::vector<Subgraph> per_node;
      for (int v : slot_supports[static_cast<std::size_t>(i)])
        per_node.push_back(build_query_subgraph(g, v, h_value));
      support_node_subgraphs.push_back(std::move(per_node));
    }
  }
  std::vector<Subgraph>& query_subgraphs = res.query_subgraphs;
  std::vector<int> query_nodes, query_slots;
  for (const auto& [v, slot] : task.query) {
    query_nodes.push_back(v);
    query_slots.push_back(slot);
  }
  if (opt.variant != Variant::ProtoNet)
    for (int v : query_nodes)
      query_subgraphs.push_back(build_query_subgraph(g, v, h_value));

  FilmAdapterVars adapter{vars.alpha_net, vars.beta_net,
                          &m.alpha_net.schema};

  std::vector<ad::Var> prototypes, support_rows;
  ad::Var query_embs;
  if (opt.variant == Variant::ProtoNet) {
    // Class means of first-step embeddings; queries matched in the same space.
    for (int i = 0; i < n_way; ++i) {
      ad::Var rows = t.gather_rows(h_full, slot_supports[static_cast<std::size_t>(i)]);
      prototypes.push_back(t.mean_rows(rows));
      support_rows.push_back(rows);
    }
    query_embs = t.gather_rows(h_full, query_nodes);
  } else {
    for (int i = 0; i < n_way; ++i) {
      const auto& sup = slot_supports[static_cast<std::size_t>(i)];
      ad::Var context = t.gather_rows(h_full, sup);
      ad::Var theta_i = traits.film ? film_adapt(t, vars.theta, context, adapter)
                                    : vars.theta;
      if (traits.class_ego) {
        const ClassEgoSubgraph& ces = class_subgraphs[static_cast<std::size_t>(i)];
        ad::Var feats = class_ego_features(t, h_full, ces);
        PrototypeOutput out =
            class_prototype(t, theta_i, m.theta_cfg, ces, feats, opt.mode, drop);
        prototypes.push_back(out.prototype);
        support_rows.push_back(out.support_rows);
      } else {
        // Per-support-node 2-hop subgraphs, averaged into the prototype.
        std::vector<ad::Var> node_embs;
        for (std::size_t k = 0; k < sup.size(); ++k) {
          const Subgraph& sg = support_node_subgraphs[static_cast<std::size_t>(i)][k];
          node_embs.push_back(query_embedding(t, theta_i, m.theta_cfg, sg,
                                              query_features(t, h_full, sg),
                                              opt.mode, drop));
        }
        ad::Var rows = t.vstack(node_embs);
        prototypes.push_back(t.mean_rows(rows));
        support_rows.push_back(rows);
      }
    }
    ad::Var all_support_context = t.gather_rows(h_full, task.all_support_nodes());
    ad::Var theta_q = traits.film
                          ? film_adapt(t, vars.theta, all_support_context, adapter)
                          : vars.theta;
    std::vector<ad::Var> q_embs;
    for (const Subgraph& sg : query_subgraphs)
      q_embs.push_back(query_embedding(t, theta_q, m.theta_cfg, sg,
                                       query_features(t, h_full, sg), opt.mode,
                                       drop));
    query_embs = t.vstack(q_embs);
  }

  ad::Var proto_matrix = t.vstack(prototypes);
  ad::Var logits = traits.cosine_tau
                       ? matching_logits(t, query_embs, proto_matrix,
                                         adaptive_temperatures(t, support_rows,
                                                               prototypes))
                       : euclidean_logits(t, query_embs, proto_matrix);

  res.logits = t.value(logits);
  if (!res.logits.allFinite())
    throw NumericError("non-finite matching logits");
  res.predictions = argmax_rows(res.logits);
  int correct = 0;
  for (std::size_t i = 0; i < query_slots.size(); ++i)
    correct += res.predictions[i] == query_slots[static_cast<std::size_t>(i)];
  res.accuracy = static_cast<double>(correct) /
                 static_cast<double>(query_slots.size());

  if (train) {
    ad::Var loss = t.softmax_nll(logits, query_slots);
    if (traits.aux_ce && opt.gamma > 0.0) {
      if (!opt.base_remap)
        throw ArgumentError("meta-training with aux loss needs a base-class remap");
      std::vector<int> base_labels;
      for (int slot : query_slots) {
        const int global = task.class_map[static_cast<std::size_t>(slot)];
        const auto it = opt.base_remap->find(global);
        if (it == opt.base_remap->end())
          throw ArgumentError("class " + std::to_string(global) +
                              " is not a base class");
        base_labels.push_back(it->second);
      }
      ad::Var h_query = t.gather_rows(h_full, query_nodes);
      ad::Var l_ce =
          base_class_ce(t, vars.head, m.head.schema, h_query, base_labels);
      loss = total_loss(t, loss, l_ce, opt.gamma);
    }
    res.loss = loss;
    res.loss_value = t.scalar_value(loss);
    if (!std::isfinite(res.loss_value))
      throw NumericError("non-finite episode loss");
  }
  return res;
}

}  // namespace tent
