#pragma once

#include <cmath>
#include <vector>

#include "a2bfr/common.hpp"
#include "a2bfr/nn.hpp"

namespace a2bfr {

// Momentum-free adaptive step: per-parameter RMS scaling with a fixed
// learning rate. State is plain doubles so checkpoints resume bit-exactly.
class RmsProp {
 public:
  explicit RmsProp(Scalar lr = 1e-3, Scalar beta = 0.99, Scalar eps = 1e-8)
      : lr_(lr), beta_(beta), eps_(eps) {}

  void attach(const std::vector<ParamTensor*>& params) {
    params_ = params;
    state_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) state_[i].assign(params[i]->value.size(), 0.0);
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      auto& s = state_[i];
      for (size_t j = 0; j < p.value.size(); ++j) {
        Scalar g = p.grad[j];
        require_runtime(std::isfinite(g), "optimizer: non-finite gradient in " + p.name);
        s[j] = beta_ * s[j] + (1.0 - beta_) * g * g;
        p.value[j] -= lr_ * g / (std::sqrt(s[j]) + eps_);
      }
    }
  }

  Scalar learning_rate() const { return lr_; }

  std::vector<std::vector<Scalar>>& state() { return state_; }
  const std::vector<std::vector<Scalar>>& state() const { return state_; }

 private:
  Scalar lr_, beta_, eps_;
  std::vector<ParamTensor*> params_;
  std::vector<std::vector<Scalar>> state_;
};

}  // namespace a2bfr
