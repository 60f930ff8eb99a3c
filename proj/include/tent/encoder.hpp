#pragma once

#include <string>
#include <vector>

#include "tent/autodiff.hpp"
#include "tent/error.hpp"
#include "tent/graph.hpp"
#include "tent/params.hpp"
#include "tent/rng.hpp"

namespace tent {

enum class Mode { Train, Eval };

namespace detail {

// W and b tensors of `flat` as tape views.
inline ad::Var schema_tensor(ad::Tape& t, ad::Var flat,
                             const ParamSchema& schema,
                             std::string_view name) {
  const TensorSpec& spec = schema.at(name);
  ad::Var sliced = t.block(flat, spec.offset, 0, spec.size(), 1);
  return t.reshape(sliced, spec.rows, spec.cols);
}

inline ad::Var dropout(ad::Tape& t, ad::Var a, double rate, Rng& rng) {
  const Mat& v = t.value(a);
  const double keep = 1.0 - rate;
  Mat mask(v.rows(), v.cols());
  for (Eigen::Index c = 0; c < v.cols(); ++c)
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      mask(r, c) = rng.next_double() < keep ? 1.0 / keep : 0.0;
  return t.mul_constant(a, std::move(mask));
}

}  // namespace detail

// Two-layer GIN forward pass over an adjacency view. `flat_params` is the
// group's flat vector as a d x 1 tape value (FiLM-modulated vectors plug in
// unchanged). Dropout masks come from `dropout_rng` and are drawn in a fixed
// order; pass nullptr (or Eval) to disable.
inline ad::Var gin_forward(ad::Tape& t, ad::Var flat_params,
                           const GinConfig& cfg, CsrView adj, ad::Var features,
                           Mode mode = Mode::Eval, Rng* dropout_rng = nullptr) {
  const ParamSchema schema = gin_schema(cfg);
  if (t.value(flat_params).rows() != schema.total() ||
      t.value(flat_params).cols() != 1)
    throw SchemaError("gin_forward: parameter vector has " +
                      std::to_string(t.value(flat_params).rows()) +
                      " values, schema wants " + std::to_string(schema.total()));
  if (t.value(features).cols() != cfg.in_dim)
    throw ShapeError("gin_forward: feature dim " +
                     std::to_string(t.value(features).cols()) + " != in_dim " +
                     std::to_string(cfg.in_dim));
  const bool drop = mode == Mode::Train && dropout_rng != nullptr &&
                    cfg.dropout_rate > 0.0;

  ad::Var h = features;
  for (int layer = 1; layer <= 2; ++layer) {
    const std::string p = "l" + std::to_string(layer) + ".";
    ad::Var eps = detail::schema_tensor(t, flat_params, schema, p + "eps");
    ad::Var w1 = detail::schema_tensor(t, flat_params, schema, p + "w1");
    ad::Var b1 = detail::schema_tensor(t, flat_params, schema, p + "b1");
    ad::Var w2 = detail::schema_tensor(t, flat_params, schema, p + "w2");
    ad::Var b2 = detail::schema_tensor(t, flat_params, schema, p + "b2");

    ad::Var z = t.csr_aggregate(h, adj, eps);
    ad::Var a = t.relu(t.add_row_broadcast(t.matmul(z, w1), b1));
    if (drop) a = detail::dropout(t, a, cfg.dropout_rate, *dropout_rng);
    ad::Var o = t.add_row_broadcast(t.matmul(a, w2), b2);
    if (layer == 1) {
      o = t.relu(o);
      if (drop) o = detail::dropout(t, o, cfg.dropout_rate, *dropout_rng);
    }
    if (!t.value(o).allFinite())
      throw NumericError("non-finite embedding after GIN layer " +
                         std::to_string(layer));
    h = o;
  }
  return h;
}

// Row of the designated centroid node.
inline ad::Var centroid_readout(ad::Tape& t, ad::Var embeddings,
                                const Subgraph& sg) {
  if (t.value(embeddings).rows() != sg.size())
    throw ShapeError("centroid_readout: " +
                     std::to_string(t.value(embeddings).rows()) +
                     " embedding rows for " + std::to_string(sg.size()) +
                     " nodes");
  return t.gather_rows(embeddings, {sg.centroid_index});
}

inline ParamGroup init_gin_params(const GinConfig& cfg, std::uint64_t seed,
                                  std::uint64_t stream = 0) {
  return init_group(gin_schema(cfg), Rng(seed, stream, Role::Init));
}

}  // namespace tent
