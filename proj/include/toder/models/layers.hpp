#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "toder/core/rng.hpp"
#include "toder/models/ops.hpp"

namespace toder::nn {

inline uint64_t hash_bytes(const void* data, size_t n, uint64_t h) {
  return toder::fnv1a(std::string_view(static_cast<const char*>(data), n), h);
}

inline std::string hex64(uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

struct NamedParam {
  std::string name;
  Var var;
};

struct Conv {
  Var weight, bias;
  int stride = 1;

  Var operator()(const Var& x) const { return conv2d(x, weight, bias, stride); }
};

struct Dense {
  Var weight, bias;

  Var operator()(const Var& x) const { return linear(x, weight, bias); }
};

/// A network: a named, ordered parameter list plus a descriptor of its architecture.
class Module {
 public:
  Module(std::string kind, uint64_t seed) : kind_(std::move(kind)), seed_(seed) {}
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  Module(Module&&) = default;
  Module& operator=(Module&&) = default;

  /// Architecture description; two modules with equal descriptors accept each other's weights.
  [[nodiscard]] virtual std::string descriptor() const = 0;

  [[nodiscard]] const std::string& kind() const { return kind_; }
  [[nodiscard]] uint64_t seed() const { return seed_; }
  [[nodiscard]] std::vector<NamedParam>& parameters() { return params_; }
  [[nodiscard]] const std::vector<NamedParam>& parameters() const { return params_; }

  [[nodiscard]] std::string spec_hash() const {
    uint64_t h = toder::fnv1a(descriptor());
    for (const auto& p : params_) {
      h = toder::fnv1a(p.name, h);
      h = toder::fnv1a(p.var->shape().str(), h);
    }
    return hex64(h);
  }

  /// Hash of the current parameter values (bit patterns).
  [[nodiscard]] std::string value_hash() const {
    uint64_t h = 1469598103934665603ull;
    for (const auto& p : params_) h = hash_bytes(p.var->value.data.data(), p.var->value.size() * sizeof(float), h);
    return hex64(h);
  }

  [[nodiscard]] size_t parameter_count() const {
    size_t n = 0;
    for (const auto& p : params_) n += p.var->value.size();
    return n;
  }

  void set_trainable(bool on) {
    for (auto& p : params_) p.var->requires_grad = on;
  }

  void zero_grad() {
    for (auto& p : params_) p.var->grad = Tensor();
  }

  /// Copies parameter values from a module with the same spec.
  void copy_from(const Module& other) {
    require(other.spec_hash() == spec_hash(), "copy_from: architectures differ");
    for (size_t i = 0; i < params_.size(); ++i) params_[i].var->value = other.params_[i].var->value;
  }

 protected:
  /// He-normal weights (scaled by `gain`), zero bias.
  Conv make_conv(const std::string& name, int in_c, int out_c, int k, int stride = 1, float gain = 1.0f) {
    Conv c = make_unbiased_conv(name, in_c, out_c, k, stride, gain);
    c.bias = add_param(name + ".bias", Shape{out_c, 1, 1, 1}, 0.0f);
    return c;
  }

  /// For convolutions feeding a normalization, where a bias would be cancelled.
  Conv make_unbiased_conv(const std::string& name, int in_c, int out_c, int k, int stride = 1, float gain = 1.0f) {
    Conv c;
    c.stride = stride;
    c.weight = add_param(name + ".weight", Shape{out_c, in_c, k, k}, std::sqrt(2.0f / (in_c * k * k)) * gain);
    return c;
  }

  Dense make_dense(const std::string& name, int in_c, int out_c, float gain = 1.0f) {
    Dense d;
    d.weight = add_param(name + ".weight", Shape{out_c, in_c, 1, 1}, std::sqrt(2.0f / in_c) * gain);
    d.bias = add_param(name + ".bias", Shape{out_c, 1, 1, 1}, 0.0f);
    return d;
  }

  Var add_param(const std::string& name, Shape shape, float stddev) {
    Tensor t(shape);
    if (stddev > 0) {
      Rng rng = keyed_rng(seed_, "models", kind_ + "/" + name);
      for (float& v : t.data) v = static_cast<float>(gaussian(rng) * stddev);
    }
    Var v = parameter(std::move(t));
    params_.push_back({name, v});
    return v;
  }

 private:
  std::string kind_;
  uint64_t seed_;
  std::vector<NamedParam> params_;
};

}  // namespace toder::nn
