#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tent/error.hpp"
#include "tent/rng.hpp"

namespace tent {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Bump when the flat layout of any parameter group changes; checkpoints echo
// it so stale files are rejected instead of silently misread.
inline constexpr int kParamLayoutVersion = 1;

struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  int offset = 0;
  int size() const { return rows * cols; }
};

// Ordered layout of a flat parameter vector. Tensors are stored back to back,
// each in column-major element order (Eigen's native order), so
// flatten/unflatten are Map round-trips.
class ParamSchema {
 public:
  void add(std::string name, int rows, int cols) {
    specs_.push_back({std::move(name), rows, cols, total_});
    total_ += rows * cols;
  }

  const std::vector<TensorSpec>& specs() const { return specs_; }
  int total() const { return total_; }

  const TensorSpec& at(std::string_view name) const {
    for (const auto& s : specs_)
      if (s.name == name) return s;
    throw SchemaError("no tensor named '" + std::string(name) + "' in schema");
  }

 private:
  std::vector<TensorSpec> specs_;
  int total_ = 0;
};

// Two-layer GIN. Each layer: (1 + eps) self term + neighbor sum, then a
// two-linear perceptron with ReLU between.
struct GinConfig {
  int in_dim = 16;
  int hidden_dim = 16;
  int out_dim = 16;
  double dropout_rate = 0.2;

  void validate() const {
    if (in_dim < 1 || hidden_dim < 1 || out_dim < 1)
      throw ArgumentError("GIN dims must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ArgumentError("dropout must be in [0, 1)");
  }
};

inline ParamSchema gin_schema(const GinConfig& cfg) {
  cfg.validate();
  ParamSchema s;
  s.add("l1.eps", 1, 1);
  s.add("l1.w1", cfg.in_dim, cfg.hidden_dim);
  s.add("l1.b1", 1, cfg.hidden_dim);
  s.add("l1.w2", cfg.hidden_dim, cfg.hidden_dim);
  s.add("l1.b2", 1, cfg.hidden_dim);
  s.add("l2.eps", 1, 1);
  s.add("l2.w1", cfg.hidden_dim, cfg.hidden_dim);
  s.add("l2.b1", 1, cfg.hidden_dim);
  s.add("l2.w2", cfg.hidden_dim, cfg.out_dim);
  s.add("l2.b2", 1, cfg.out_dim);
  return s;
}

// FiLM adapter net: in -> hidden (ReLU) -> out.
inline ParamSchema mlp_schema(int in, int hidden, int out) {
  ParamSchema s;
  s.add("w1", in, hidden);
  s.add("b1", 1, hidden);
  s.add("w2", hidden, out);
  s.add("b2", 1, out);
  return s;
}

inline ParamSchema head_schema(int in, int classes) {
  ParamSchema s;
  s.add("w", in, classes);
  s.add("b", 1, classes);
  return s;
}

// A flat parameter vector plus its layout.
struct ParamGroup {
  ParamSchema schema;
  Vec values;

  Eigen::Map<const Mat> tensor(std::string_view name) const {
    const TensorSpec& t = schema.at(name);
    return Eigen::Map<const Mat>(values.data() + t.offset, t.rows, t.cols);
  }
  Eigen::Map<Mat> tensor(std::string_view name) {
    const TensorSpec& t = schema.at(name);
    return Eigen::Map<Mat>(values.data() + t.offset, t.rows, t.cols);
  }
};

inline std::map<std::string, Mat> unflatten(const ParamSchema& schema,
                                            const Vec& flat) {
  if (flat.size() != schema.total())
    throw SchemaError("flat vector has " + std::to_string(flat.size()) +
                      " values, schema wants " + std::to_string(schema.total()));
  std::map<std::string, Mat> out;
  for (const auto& t : schema.specs())
    out[t.name] = Eigen::Map<const Mat>(flat.data() + t.offset, t.rows, t.cols);
  return out;
}

inline Vec flatten(const ParamSchema& schema,
                   const std::map<std::string, Mat>& tensors) {
  Vec flat(schema.total());
  for (const auto& t : schema.specs()) {
    const auto it = tensors.find(t.name);
    if (it == tensors.end())
      throw SchemaError("missing tensor '" + t.name + "'");
    if (it->second.rows() != t.rows || it->second.cols() != t.cols)
      throw SchemaError("tensor '" + t.name + "' has wrong shape");
    Eigen::Map<Mat>(flat.data() + t.offset, t.rows, t.cols) = it->second;
  }
  if (tensors.size() != schema.specs().size())
    throw SchemaError("extra tensors not in schema");
  return flat;
}

namespace detail {

inline void xavier_fill(Eigen::Map<Mat> w, Rng& rng) {
  const double bound =
      std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  // Column-major fill order, matching the flat layout.
  for (Eigen::Index c = 0; c < w.cols(); ++c)
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      w(r, c) = rng.next_uniform(-bound, bound);
}

}  // namespace detail

// Xavier-uniform weights, zero biases, zero GIN eps. Tensors whose name
// contains ".w" or equals "w"/"w1"/"w2" are treated as weight matrices.
inline ParamGroup init_group(ParamSchema schema, Rng rng,
                             bool zero_output_layer = false) {
  ParamGroup g{std::move(schema), Vec::Zero(0)};
  g.values = Vec::Zero(g.schema.total());
  for (const auto& t : g.schema.specs()) {
    const bool is_weight = t.name == "w" || t.name == "w1" || t.name == "w2" ||
                           t.name.find(".w") != std::string::npos;
    const bool zeroed =
        zero_output_layer && (t.name == "w2" || t.name == "b2");
    if (is_weight && !zeroed) {
      Eigen::Map<Mat> w(g.values.data() + t.offset, t.rows, t.cols);
      detail::xavier_fill(w, rng);
    }
    // biases and eps stay zero
  }
  return g;
}

}  // namespace tent
