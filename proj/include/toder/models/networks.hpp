#pragma once

#include <cmath>
#include <string>

#include "toder/core/se3.hpp"
#include "toder/core/types.hpp"
#include "toder/models/layers.hpp"

namespace toder::nn {

namespace detail {
inline void require_divisible(int height, int width, int factor, const std::string& what) {
  require(height > 0 && width > 0, what + ": image size must be positive");
  if (height % factor != 0 || width % factor != 0)
    throw ValidationError(what + ": image size " + std::to_string(width) + "x" + std::to_string(height) +
                          " is not divisible by the downsampling factor " + std::to_string(factor));
}

inline void require_input(const Var& x, int channels, int height, int width, const std::string& what) {
  const Shape s = x->shape();
  if (s.c != channels || s.h != height || s.w != width)
    throw ValidationError(what + ": expected input (N," + std::to_string(channels) + "," + std::to_string(height) + "," +
                          std::to_string(width) + "), got " + s.str());
}

inline Var act(const Var& x) { return leaky_relu(x, 0.1f); }
}  // namespace detail

struct DepthNetSpec {
  int height = 96;
  int width = 96;
  int base_width = 16;
  float min_depth = 0.01f;
  float max_depth = 20.0f;
  /// Depth produced by the untrained network for any input, roughly.
  float initial_depth = 1.0f;

  static constexpr int kDownsampling = 8;
};

/// Encoder-decoder with skip connections over three scales; positive bounded depth output.
class DepthNet : public Module {
 public:
  DepthNet(const DepthNetSpec& spec, uint64_t seed) : Module("depthnet", seed), spec_(spec) {
    detail::require_divisible(spec.height, spec.width, DepthNetSpec::kDownsampling, "depthnet");
    require(spec.base_width >= 1, "depthnet: base width must be >= 1");
    require(spec.min_depth > 0 && spec.max_depth > spec.min_depth, "depthnet: need 0 < min_depth < max_depth");
    require(spec.initial_depth > spec.min_depth && spec.initial_depth < spec.max_depth,
            "depthnet: initial depth must lie inside the depth range");
    const int b = spec.base_width;
    enc0_ = make_conv("enc0", 3, b, 3);
    enc1a_ = make_conv("enc1a", b, 2 * b, 3, 2);
    enc1b_ = make_conv("enc1b", 2 * b, 2 * b, 3);
    enc2a_ = make_conv("enc2a", 2 * b, 4 * b, 3, 2);
    enc2b_ = make_conv("enc2b", 4 * b, 4 * b, 3);
    enc3a_ = make_conv("enc3a", 4 * b, 8 * b, 3, 2);
    enc3b_ = make_conv("enc3b", 8 * b, 8 * b, 3);
    red2_ = make_conv("reduce2", 8 * b, 4 * b, 1);
    dec2_ = make_conv("dec2", 8 * b, 4 * b, 3);
    red1_ = make_conv("reduce1", 4 * b, 2 * b, 1);
    dec1_ = make_conv("dec1", 4 * b, 2 * b, 3);
    red0_ = make_conv("reduce0", 2 * b, b, 1);
    dec0_ = make_conv("dec0", 2 * b, b, 3);
    head_ = make_conv("head", b, 1, 3, 1, 0.1f);
    const float s = (spec.initial_depth - spec.min_depth) / (spec.max_depth - spec.min_depth);
    head_.bias->value.data[0] = std::log(s / (1.0f - s));
  }

  [[nodiscard]] std::string descriptor() const override {
    return "depthnet/unet3 " + std::to_string(spec_.width) + "x" + std::to_string(spec_.height) + " base=" +
           std::to_string(spec_.base_width) + " range=" + std::to_string(spec_.min_depth) + ":" +
           std::to_string(spec_.max_depth);
  }

  [[nodiscard]] const DepthNetSpec& spec() const { return spec_; }

  /// RGB (N,3,H,W) in [0,1] -> depth (N,1,H,W) in meters.
  Var operator()(const Var& rgb) const {
    using detail::act;
    detail::require_input(rgb, 3, spec_.height, spec_.width, "depthnet");
    const Var e0 = act(enc0_(rgb));
    const Var e1 = act(enc1b_(act(enc1a_(e0))));
    const Var e2 = act(enc2b_(act(enc2a_(e1))));
    const Var e3 = act(enc3b_(act(enc3a_(e2))));
    const Var d2 = act(dec2_(concat(upsample2x(act(red2_(e3))), e2)));
    const Var d1 = act(dec1_(concat(upsample2x(act(red1_(d2))), e1)));
    const Var d0 = act(dec0_(concat(upsample2x(act(red0_(d1))), e0)));
    return bounded_depth(head_(d0), spec_.min_depth, spec_.max_depth);
  }

 private:
  DepthNetSpec spec_;
  Conv enc0_, enc1a_, enc1b_, enc2a_, enc2b_, enc3a_, enc3b_, red2_, dec2_, red1_, dec1_, red0_, dec0_, head_;
};

struct TranslatorSpec {
  int height = 96;
  int width = 96;
  int base_width = 16;
  int residual_blocks = 4;

  static constexpr int kGeneratorDownsampling = 4;
  static constexpr int kDiscriminatorDownsampling = 8;
};

/// Style translator: two stride-2 stages, residual blocks at quarter resolution, nearest-
/// neighbour upsampling decoder with a full-resolution skip, sigmoid output.
class Generator : public Module {
 public:
  Generator(const TranslatorSpec& spec, uint64_t seed) : Module("generator", seed), spec_(spec) {
    detail::require_divisible(spec.height, spec.width, TranslatorSpec::kGeneratorDownsampling, "generator");
    require(spec.base_width >= 1 && spec.residual_blocks >= 0, "generator: invalid widths");
    const int c = spec.base_width;
    stem_ = make_unbiased_conv("stem", 3, c, 3);
    down1_ = make_unbiased_conv("down1", c, 2 * c, 3, 2);
    down2_ = make_unbiased_conv("down2", 2 * c, 2 * c, 3, 2);
    for (int i = 0; i < spec.residual_blocks; ++i) {
      res_.push_back({make_unbiased_conv("res" + std::to_string(i) + "a", 2 * c, 2 * c, 3),
                      make_unbiased_conv("res" + std::to_string(i) + "b", 2 * c, 2 * c, 3)});
    }
    up1_ = make_unbiased_conv("up1", 2 * c, c, 3);
    out_ = make_conv("out", 2 * c, 3, 3, 1, 0.1f);
  }

  [[nodiscard]] std::string descriptor() const override {
    return "generator/res " + std::to_string(spec_.width) + "x" + std::to_string(spec_.height) + " base=" +
           std::to_string(spec_.base_width) + " blocks=" + std::to_string(spec_.residual_blocks);
  }

  Var operator()(const Var& rgb) const {
    detail::require_input(rgb, 3, spec_.height, spec_.width, "generator");
    const Var s = relu(instance_norm(stem_(rgb)));
    Var h = relu(instance_norm(down2_(relu(instance_norm(down1_(s))))));
    for (const auto& [a, b] : res_) h = add(h, instance_norm(b(relu(instance_norm(a(h))))));
    h = relu(instance_norm(up1_(upsample2x(h))));
    return sigmoid(out_(concat(upsample2x(h), s)));
  }

 private:
  TranslatorSpec spec_;
  Conv stem_, down1_, down2_, up1_, out_;
  std::vector<std::pair<Conv, Conv>> res_;
};

/// Patch discriminator: real/fake score per (H/8 x W/8) patch.
class Discriminator : public Module {
 public:
  Discriminator(const TranslatorSpec& spec, uint64_t seed) : Module("discriminator", seed), spec_(spec) {
    detail::require_divisible(spec.height, spec.width, TranslatorSpec::kDiscriminatorDownsampling, "discriminator");
    const int c = spec.base_width;
    c1_ = make_conv("c1", 3, c, 3, 2);
    c2_ = make_unbiased_conv("c2", c, 2 * c, 3, 2);
    c3_ = make_unbiased_conv("c3", 2 * c, 4 * c, 3, 2);
    score_ = make_conv("score", 4 * c, 1, 3);
  }

  [[nodiscard]] std::string descriptor() const override {
    return "discriminator/patch " + std::to_string(spec_.width) + "x" + std::to_string(spec_.height) + " base=" +
           std::to_string(spec_.base_width);
  }

  Var operator()(const Var& rgb) const {
    detail::require_input(rgb, 3, spec_.height, spec_.width, "discriminator");
    Var h = leaky_relu(c1_(rgb), 0.2f);
    h = leaky_relu(instance_norm(c2_(h)), 0.2f);
    h = leaky_relu(instance_norm(c3_(h)), 0.2f);
    return score_(h);
  }

 private:
  TranslatorSpec spec_;
  Conv c1_, c2_, c3_, score_;
};

struct TNetSpec {
  int height = 96;
  int width = 96;
  int base_width = 16;
  /// Multiplier from raw head outputs to axis-angle radians and translation.
  float output_scale = 0.01f;

  static constexpr int kDownsampling = 16;
};

/// Relative pose regressor on two channel-stacked frames: residual stride-2 encoder,
/// global pooling, zero-initialized linear head.
class TNet : public Module {
 public:
  TNet(const TNetSpec& spec, uint64_t seed) : Module("tnet", seed), spec_(spec) {
    detail::require_divisible(spec.height, spec.width, TNetSpec::kDownsampling, "tnet");
    require(spec.output_scale > 0, "tnet: output scale must be positive");
    const int c = spec.base_width;
    stem_ = make_conv("stem", 6, c, 3, 2);
    const int widths[4] = {c, 2 * c, 4 * c, 4 * c};
    for (int i = 0; i < 3; ++i) {
      const std::string n = "stage" + std::to_string(i);
      stages_.push_back({make_conv(n + ".a", widths[i], widths[i + 1], 3, 2),
                         make_conv(n + ".b", widths[i + 1], widths[i + 1], 3),
                         make_conv(n + ".skip", widths[i], widths[i + 1], 1, 2)});
    }
    head_ = make_dense("head", 4 * c, 6, 0.0f);
  }

  [[nodiscard]] std::string descriptor() const override {
    return "tnet/res " + std::to_string(spec_.width) + "x" + std::to_string(spec_.height) + " base=" +
           std::to_string(spec_.base_width) + " scale=" + std::to_string(spec_.output_scale);
  }

  /// Two frames (N,3,H,W) each -> (N,6,1,1): axis-angle then translation of the a-to-b motion.
  Var operator()(const Var& frame_a, const Var& frame_b) const {
    detail::require_input(frame_a, 3, spec_.height, spec_.width, "tnet");
    detail::require_input(frame_b, 3, spec_.height, spec_.width, "tnet");
    Var h = relu(stem_(concat(frame_a, frame_b)));
    for (const auto& s : stages_) h = relu(add(s.b(relu(s.a(h))), s.skip(h)));
    return scale(head_(global_avg_pool(h)), spec_.output_scale);
  }

 private:
  struct Stage {
    Conv a, b, skip;
  };
  TNetSpec spec_;
  Conv stem_;
  std::vector<Stage> stages_;
  Dense head_;
};

/// Reads sample n of a (N,6,1,1) pose output.
inline SixDof sixdof_from_output(const Tensor& t, int n) {
  require(t.shape.c == 6, "pose output must have 6 channels");
  SixDof v;
  for (int i = 0; i < 3; ++i) {
    v.axis_angle[i] = t.at(n, i, 0, 0);
    v.translation[i] = t.at(n, 3 + i, 0, 0);
  }
  return v;
}

inline DepthNet build_depthnet(const DepthNetSpec& spec, uint64_t seed) { return DepthNet(spec, seed); }

inline std::pair<Generator, Discriminator> build_translator(const TranslatorSpec& spec, uint64_t seed) {
  return {Generator(spec, seed), Discriminator(spec, seed ^ 0x9e3779b97f4a7c15ull)};
}

inline TNet build_tnet(const TNetSpec& spec, uint64_t seed) { return TNet(spec, seed); }

}  // namespace toder::nn
