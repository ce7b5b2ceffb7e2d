#pragma once

#include <cmath>
#include <vector>

#include "toder/models/layers.hpp"

namespace toder::nn {

struct AdamConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Adam without weight decay. Moments are stored per parameter tensor in registration order.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Var> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    require(cfg.lr > 0, "adam: learning rate must be positive");
    require(cfg.beta1 >= 0 && cfg.beta1 < 1 && cfg.beta2 >= 0 && cfg.beta2 < 1, "adam: betas must lie in [0,1)");
    for (const auto& p : params_) {
      m_.emplace_back(p->value.shape);
      v_.emplace_back(p->value.shape);
    }
  }

  /// Applies one update from the accumulated gradients, then clears them. Parameters
  /// without a gradient this step are left untouched (their moments do not decay).
  void step() {
    ++steps_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), steps_);
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), steps_);
    const float step_size = static_cast<float>(cfg_.lr / bc1);
    const float inv_bc2 = static_cast<float>(1.0 / bc2);
    for (size_t i = 0; i < params_.size(); ++i) {
      Node& p = *params_[i];
      if (p.grad.empty()) continue;
      float* w = p.value.data.data();
      const float* g = p.grad.data.data();
      float* m = m_[i].data.data();
      float* v = v_[i].data.data();
      for (size_t k = 0; k < p.value.size(); ++k) {
        m[k] = cfg_.beta1 * m[k] + (1.0f - cfg_.beta1) * g[k];
        v[k] = cfg_.beta2 * v[k] + (1.0f - cfg_.beta2) * g[k] * g[k];
        w[k] -= step_size * m[k] / (std::sqrt(v[k] * inv_bc2) + cfg_.eps);
      }
      p.grad = Tensor();
    }
  }

  void zero_grad() {
    for (auto& p : params_) p->grad = Tensor();
  }

  [[nodiscard]] long steps() const { return steps_; }
  [[nodiscard]] const AdamConfig& config() const { return cfg_; }
  [[nodiscard]] std::vector<Tensor>& first_moments() { return m_; }
  [[nodiscard]] std::vector<Tensor>& second_moments() { return v_; }
  [[nodiscard]] const std::vector<Var>& params() const { return params_; }
  void set_steps(long s) { steps_ = s; }

 private:
  std::vector<Var> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  long steps_ = 0;
};

/// Parameter handles of several modules, in order.
inline std::vector<Var> parameters_of(std::initializer_list<const Module*> modules) {
  std::vector<Var> out;
  for (const Module* m : modules)
    for (const auto& p : m->parameters()) out.push_back(p.var);
  return out;
}

}  // namespace toder::nn
