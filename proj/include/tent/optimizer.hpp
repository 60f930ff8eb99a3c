#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tent/error.hpp"
#include "tent/model.hpp"
#include "tent/params.hpp"

namespace tent {

struct AdamConfig {
  double learning_rate = 0.05;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with coupled L2 weight decay: the lambda * param term is added to the
// gradient before the moment updates.
class Adam {
 public:
  Adam(const ModelParams& model, AdamConfig cfg) : cfg_(cfg) {
    for (const ParamGroup* g : model.groups()) {
      m_.push_back(Vec::Zero(g->values.size()));
      v_.push_back(Vec::Zero(g->values.size()));
    }
  }

  int step_count() const { return step_; }

  void step(ModelParams& model, const std::vector<Vec>& grads) {
    auto groups = model.groups();
    if (grads.size() != groups.size())
      throw ArgumentError("optimizer_step: expected " +
                          std::to_string(groups.size()) + " gradient groups");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
    for (std::size_t i = 0; i < groups.size(); ++i) {
      Vec& p = groups[i]->values;
      if (grads[i].size() != p.size())
        throw ArgumentError("optimizer_step: gradient length " +
                            std::to_string(grads[i].size()) + " != " +
                            std::to_string(p.size()) + " for group '" +
                            ModelParams::group_names()[i] + "'");
      if (!grads[i].allFinite())
        throw NumericError("non-finite gradient in group '" +
                           ModelParams::group_names()[i] + "'");
      const Vec g = grads[i] + cfg_.weight_decay * p;
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      const Vec m_hat = m_[i] / bc1;
      const Vec v_hat = v_[i] / bc2;
      p -= cfg_.learning_rate *
           (m_hat.array() / (v_hat.array().sqrt() + cfg_.eps)).matrix();
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<Vec> m_, v_;
  int step_ = 0;
};

}  // namespace tent
