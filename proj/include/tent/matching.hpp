#pragma once

#include <vector>

#include "tent/autodiff.hpp"
#include "tent/encoder.hpp"
#include "tent/error.hpp"
#include "tent/params.hpp"

namespace tent {

// Minimum total within-class spread below which the adaptive temperatures
// collapse to the uniform fallback.
inline constexpr double kTemperatureFloor = 1e-12;

// Per-class temperatures: tau_i = N * D_i / sum_j D_j with
// D_i = sum_k ||s_i^k - s_i||_2, computed on raw (pre-normalization)
// embeddings. Degenerate episodes (all supports equal their prototypes) fall
// back to tau = 1. A single collapsed class must not zero its temperature
// (all tau_i stay strictly positive, mean exactly 1), so each spread carries
// a tiny additive floor.
inline ad::Var adaptive_temperatures(ad::Tape& t,
                                     const std::vector<ad::Var>& support_rows,
                                     const std::vector<ad::Var>& prototypes) {
  if (support_rows.empty() || support_rows.size() != prototypes.size())
    throw ArgumentError("adaptive_temperatures: need one support block per class");
  const int n_way = static_cast<int>(support_rows.size());
  std::vector<ad::Var> spreads;
  spreads.reserve(support_rows.size());
  for (int i = 0; i < n_way; ++i) {
    ad::Var centered = t.sub_row_broadcast(support_rows[static_cast<std::size_t>(i)],
                                           prototypes[static_cast<std::size_t>(i)]);
    spreads.push_back(t.total_sum(t.row_norms(centered)));
  }
  ad::Var d = t.concat_scalars(spreads);
  ad::Var d_total = t.total_sum(d);
  if (t.scalar_value(d_total) < kTemperatureFloor)
    return t.constant(Mat::Ones(1, n_way));
  ad::Var d_floored = t.shift(d, kTemperatureFloor);
  ad::Var total_floored =
      t.shift(d_total, kTemperatureFloor * static_cast<double>(n_way));
  return t.scale(t.div_by_scalar(d_floored, total_floored),
                 static_cast<double>(n_way));
}

// Cosine logits Q x N: l2-normalized dot products divided per class by tau_j.
inline ad::Var matching_logits(ad::Tape& t, ad::Var query_embs,
                               ad::Var prototypes, ad::Var tau) {
  ad::Var qn = t.l2_normalize_rows(query_embs);
  ad::Var sn = t.l2_normalize_rows(prototypes);
  ad::Var dots = t.matmul(qn, t.transpose(sn));
  return t.div_col_broadcast(dots, tau);
}

// Mutual-information matching loss: sum_i -log softmax(logits_i)[slot_i].
inline ad::Var info_loss(ad::Tape& t, ad::Var query_embs, ad::Var prototypes,
                         ad::Var tau, const std::vector<int>& query_slots) {
  ad::Var logits = matching_logits(t, query_embs, prototypes, tau);
  return t.softmax_nll(logits, query_slots);
}

// Auxiliary base-class objective: single linear head on first-step
// embeddings, softmax cross-entropy summed over query nodes.
inline ad::Var base_class_ce(ad::Tape& t, ad::Var head_flat,
                             const ParamSchema& head, ad::Var h_query,
                             const std::vector<int>& base_labels) {
  ad::Var w = detail::schema_tensor(t, head_flat, head, "w");
  ad::Var b = detail::schema_tensor(t, head_flat, head, "b");
  ad::Var logits = t.add_row_broadcast(t.matmul(h_query, w), b);
  return t.softmax_nll(logits, base_labels);
}

inline ad::Var total_loss(ad::Tape& t, ad::Var l_n, ad::Var l_ce,
                          double gamma) {
  if (gamma < 0.0) throw ArgumentError("gamma must be >= 0");
  return t.add(l_n, t.scale(l_ce, gamma));
}

// Negative squared Euclidean logits, the matching rule of the no_task and
// protonet variants (raw embeddings, no temperatures).
inline ad::Var euclidean_logits(ad::Tape& t, ad::Var query_embs,
                                ad::Var prototypes) {
  ad::Var cross = t.scale(t.matmul(query_embs, t.transpose(prototypes)), 2.0);
  ad::Var q_sq = t.row_sum(t.mul(query_embs, query_embs));        // Q x 1
  ad::Var s_sq = t.row_sum(t.mul(prototypes, prototypes));        // N x 1
  ad::Var shifted = t.sub_col_broadcast(cross, q_sq);
  return t.sub_row_broadcast(shifted, t.transpose(s_sq));
}

// Argmax per row, ties broken toward the lowest slot index.
inline std::vector<int> argmax_rows(const Mat& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (Eigen::Index j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = static_cast<int>(j);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

// Prediction rule: slot of the largest temperature-scaled cosine logit.
inline std::vector<int> predict(const Mat& query_embs, const Mat& prototypes,
                                const Mat& tau) {
  ad::Tape t;
  ad::Var logits = matching_logits(t, t.constant(query_embs),
                                   t.constant(prototypes), t.constant(tau));
  return argmax_rows(t.value(logits));
}

}  // namespace tent
