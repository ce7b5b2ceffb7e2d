#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

#include "toder/models/autograd.hpp"

namespace toder::nn {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXf>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXf>;

namespace detail {

inline MapVec vec(Tensor& t) { return {t.data.data(), static_cast<Eigen::Index>(t.size())}; }
inline ConstMapVec vec(const Tensor& t) { return {t.data.data(), static_cast<Eigen::Index>(t.size())}; }

inline void accumulate(const Var& p, const Tensor& g) {
  if (!p->requires_grad) return;
  vec(p->grad_buffer()) += vec(g);
}

struct ConvGeometry {
  int in_c, in_h, in_w, k, stride, pad, out_h, out_w;
  [[nodiscard]] int rows() const { return in_c * k * k; }
  [[nodiscard]] int cols() const { return out_h * out_w; }
};

/// Unfolds one sample into a (in_c*k*k) x (out_h*out_w) matrix.
inline void im2col(const float* x, const ConvGeometry& g, float* cols) {
  const int ow = g.out_w, oh = g.out_h;
  for (int c = 0; c < g.in_c; ++c) {
    const float* plane = x + static_cast<size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        float* row = cols + (static_cast<size_t>((c * g.k + ky) * g.k + kx)) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          float* out = row + static_cast<size_t>(oy) * ow;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(out, out + ow, 0.0f);
            continue;
          }
          const float* in_row = plane + static_cast<size_t>(iy) * g.in_w;
          if (g.stride == 1) {
            const int x0 = kx - g.pad;
            const int lo = std::max(0, -x0), hi = std::min(ow, g.in_w - x0);
            std::fill(out, out + lo, 0.0f);
            std::copy(in_row + lo + x0, in_row + hi + x0, out + lo);
            std::fill(out + std::max(hi, lo), out + ow, 0.0f);
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              out[ox] = (ix >= 0 && ix < g.in_w) ? in_row[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters column gradients back into the input sample.
inline void col2im(const float* cols, const ConvGeometry& g, float* x) {
  const int ow = g.out_w, oh = g.out_h;
  for (int c = 0; c < g.in_c; ++c) {
    float* plane = x + static_cast<size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const float* row = cols + (static_cast<size_t>((c * g.k + ky) * g.k + kx)) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          float* in_row = plane + static_cast<size_t>(iy) * g.in_w;
          const float* src = row + static_cast<size_t>(oy) * ow;
          if (g.stride == 1) {
            const int x0 = kx - g.pad;
            const int lo = std::max(0, -x0), hi = std::min(ow, g.in_w - x0);
            for (int ox = lo; ox < hi; ++ox) in_row[ox + x0] += src[ox];
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) in_row[ix] += src[ox];
          }
        }
      }
    }
  }
}

inline FloatBuffer& scratch(int slot) {
  thread_local FloatBuffer buffers[2];
  return buffers[slot];
}

template <typename F>
Var unary(const Var& x, F&& f, std::function<float(float, float)> df) {
  Tensor out(x->shape());
  for (size_t i = 0; i < out.size(); ++i) out.data[i] = f(x->value.data[i]);
  return make_node(std::move(out), {x}, [x, df](Node& self) {
    Tensor g(x->shape());
    for (size_t i = 0; i < g.size(); ++i) g.data[i] = self.grad.data[i] * df(x->value.data[i], self.value.data[i]);
    accumulate(x, g);
  });
}

}  // namespace detail

/// 2D convolution with zero padding k/2. Weight (out_c, in_c, k, k), bias (out_c) or null.
inline Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride = 1) {
  const Shape xs = x->shape(), ws = weight->shape();
  require(ws.c == xs.c && ws.h == ws.w, "conv2d: weight does not match input channels");
  require(!bias || bias->value.size() == static_cast<size_t>(ws.n), "conv2d: bias size mismatch");
  const int k = ws.h, pad = k / 2;
  detail::ConvGeometry g{xs.c, xs.h, xs.w, k, stride, pad, (xs.h + 2 * pad - k) / stride + 1,
                         (xs.w + 2 * pad - k) / stride + 1};
  const int out_c = ws.n;
  Tensor out(Shape{xs.n, out_c, g.out_h, g.out_w});
  const bool direct = k == 1 && stride == 1;
  auto& cols = detail::scratch(0);
  if (!direct) cols.resize(static_cast<size_t>(g.rows()) * g.cols());
  const ConstMapMat w(weight->value.data.data(), out_c, g.rows());
  for (int n = 0; n < xs.n; ++n) {
    const float* src = x->value.sample(n);
    if (!direct) detail::im2col(src, g, cols.data());
    const ConstMapMat in(direct ? src : cols.data(), g.rows(), g.cols());
    MapMat o(out.sample(n), out_c, g.cols());
    o.noalias() = w * in;
    if (bias) o.colwise() += ConstMapVec(bias->value.data.data(), out_c);
  }
  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_node(std::move(out), std::move(parents), [x, weight, bias, g, out_c, direct](Node& self) {
    const Shape xs = x->shape();
    auto& cols = detail::scratch(0);
    auto& dcols = detail::scratch(1);
    if (!direct) cols.resize(static_cast<size_t>(g.rows()) * g.cols());
    dcols.resize(static_cast<size_t>(g.rows()) * g.cols());
    const ConstMapMat w(weight->value.data.data(), out_c, g.rows());
    Tensor* dx = x->requires_grad ? &x->grad_buffer() : nullptr;
    for (int n = 0; n < xs.n; ++n) {
      const ConstMapMat dout(self.grad.sample(n), out_c, g.cols());
      if (weight->requires_grad) {
        const float* src = x->value.sample(n);
        if (!direct) detail::im2col(src, g, cols.data());
        const ConstMapMat in(direct ? src : cols.data(), g.rows(), g.cols());
        MapMat(weight->grad_buffer().data.data(), out_c, g.rows()).noalias() += dout * in.transpose();
      }
      if (bias && bias->requires_grad) MapVec(bias->grad_buffer().data.data(), out_c) += dout.rowwise().sum();
      if (dx) {
        if (direct) {
          MapMat(dx->sample(n), g.rows(), g.cols()).noalias() += w.transpose() * dout;
        } else {
          MapMat dc(dcols.data(), g.rows(), g.cols());
          dc.noalias() = w.transpose() * dout;
          detail::col2im(dcols.data(), g, dx->sample(n));
        }
      }
    }
  });
}

inline Var leaky_relu(const Var& x, float slope) {
  return detail::unary(
      x, [slope](float v) { return v > 0 ? v : slope * v; },
      [slope](float v, float) { return v > 0 ? 1.0f : slope; });
}

inline Var relu(const Var& x) { return leaky_relu(x, 0.0f); }

inline Var sigmoid(const Var& x) {
  return detail::unary(
      x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); }, [](float, float y) { return y * (1.0f - y); });
}

inline Var tanh(const Var& x) {
  return detail::unary(x, [](float v) { return std::tanh(v); }, [](float, float y) { return 1.0f - y * y; });
}

/// Positive depth bounded to [lo, hi]: lo + (hi - lo) * (1 - exp(-softplus(x))).
/// The bracket simplifies to the logistic function of x.
inline Var bounded_depth(const Var& x, float lo, float hi) {
  const float span = hi - lo;
  return detail::unary(
      x, [lo, span](float v) { return lo + span / (1.0f + std::exp(-v)); },
      [lo, span](float, float y) {
        const float s = (y - lo) / span;
        return span * s * (1.0f - s);
      });
}

/// Per-sample, per-channel normalization over the spatial axes (no affine terms).
inline Var instance_norm(const Var& x, float eps = 1e-5f) {
  const Shape s = x->shape();
  const auto hw = static_cast<Eigen::Index>(s.plane());
  Tensor out(s);
  std::vector<float> inv_std(static_cast<size_t>(s.n) * s.c);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const ConstMapVec in(x->value.channel(n, c), hw);
      const float mean = in.mean();
      const float var = (in.array() - mean).square().mean();
      const float is = 1.0f / std::sqrt(var + eps);
      inv_std[static_cast<size_t>(n) * s.c + c] = is;
      MapVec(out.channel(n, c), hw) = (in.array() - mean) * is;
    }
  }
  return make_node(std::move(out), {x}, [x, inv_std](Node& self) {
    const Shape s = x->shape();
    const auto hw = static_cast<Eigen::Index>(s.plane());
    Tensor g(s);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const ConstMapVec y(self.value.channel(n, c), hw), dy(self.grad.channel(n, c), hw);
        const float mean_dy = dy.mean();
        const float mean_dyy = dy.dot(y) / static_cast<float>(hw);
        MapVec(g.channel(n, c), hw) =
            inv_std[static_cast<size_t>(n) * s.c + c] * (dy.array() - mean_dy - y.array() * mean_dyy);
      }
    }
    detail::accumulate(x, g);
  });
}

inline Var upsample2x(const Var& x) {
  const Shape s = x->shape();
  Tensor out(Shape{s.n, s.c, s.h * 2, s.w * 2});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* in = x->value.channel(n, c);
      float* o = out.channel(n, c);
      for (int y = 0; y < 2 * s.h; ++y)
        for (int xx = 0; xx < 2 * s.w; ++xx) o[y * 2 * s.w + xx] = in[(y / 2) * s.w + xx / 2];
    }
  return make_node(std::move(out), {x}, [x](Node& self) {
    const Shape s = x->shape();
    Tensor g(s);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const float* d = self.grad.channel(n, c);
        float* o = g.channel(n, c);
        for (int y = 0; y < 2 * s.h; ++y)
          for (int xx = 0; xx < 2 * s.w; ++xx) o[(y / 2) * s.w + xx / 2] += d[y * 2 * s.w + xx];
      }
    detail::accumulate(x, g);
  });
}

/// Channel-axis concatenation.
inline Var concat(const Var& a, const Var& b) {
  const Shape sa = a->shape(), sb = b->shape();
  require(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w, "concat: spatial shapes differ");
  Tensor out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  for (int n = 0; n < sa.n; ++n) {
    std::copy(a->value.sample(n), a->value.sample(n) + sa.sample(), out.sample(n));
    std::copy(b->value.sample(n), b->value.sample(n) + sb.sample(), out.sample(n) + sa.sample());
  }
  return make_node(std::move(out), {a, b}, [a, b](Node& self) {
    const Shape sa = a->shape(), sb = b->shape();
    Tensor ga(sa), gb(sb);
    for (int n = 0; n < sa.n; ++n) {
      const float* g = self.grad.sample(n);
      std::copy(g, g + sa.sample(), ga.sample(n));
      std::copy(g + sa.sample(), g + sa.sample() + sb.sample(), gb.sample(n));
    }
    detail::accumulate(a, ga);
    detail::accumulate(b, gb);
  });
}

inline Var add(const Var& a, const Var& b) {
  require_same_shape(a->shape(), b->shape(), "add");
  Tensor out(a->shape());
  detail::vec(out) = detail::vec(a->value) + detail::vec(b->value);
  return make_node(std::move(out), {a, b}, [a, b](Node& self) {
    detail::accumulate(a, self.grad);
    detail::accumulate(b, self.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  require_same_shape(a->shape(), b->shape(), "sub");
  Tensor out(a->shape());
  detail::vec(out) = detail::vec(a->value) - detail::vec(b->value);
  return make_node(std::move(out), {a, b}, [a, b](Node& self) {
    detail::accumulate(a, self.grad);
    Tensor neg(self.grad.shape);
    detail::vec(neg) = -detail::vec(self.grad);
    detail::accumulate(b, neg);
  });
}

inline Var scale(const Var& x, float s) {
  Tensor out(x->shape());
  detail::vec(out) = detail::vec(x->value) * s;
  return make_node(std::move(out), {x}, [x, s](Node& self) {
    Tensor g(self.grad.shape);
    detail::vec(g) = detail::vec(self.grad) * s;
    detail::accumulate(x, g);
  });
}

/// Elementwise mean of two tensors.
inline Var average(const Var& a, const Var& b) { return scale(add(a, b), 0.5f); }

/// (N, C, H, W) -> (N, C, 1, 1).
inline Var global_avg_pool(const Var& x) {
  const Shape s = x->shape();
  const auto hw = static_cast<Eigen::Index>(s.plane());
  Tensor out(Shape{s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) out.at(n, c, 0, 0) = ConstMapVec(x->value.channel(n, c), hw).mean();
  return make_node(std::move(out), {x}, [x](Node& self) {
    const Shape s = x->shape();
    const auto hw = static_cast<Eigen::Index>(s.plane());
    Tensor g(s);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) MapVec(g.channel(n, c), hw).setConstant(self.grad.at(n, c, 0, 0) / static_cast<float>(hw));
    detail::accumulate(x, g);
  });
}

/// Fully connected layer on (N, in, 1, 1); weight (out, in, 1, 1).
inline Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Shape s = x->shape(), ws = weight->shape();
  require(s.h == 1 && s.w == 1 && ws.c == s.c, "linear: expects (N, in, 1, 1) input matching the weight");
  const int out_c = ws.n;
  Tensor out(Shape{s.n, out_c, 1, 1});
  const ConstMapMat w(weight->value.data.data(), out_c, s.c);
  const ConstMapMat in(x->value.data.data(), s.n, s.c);
  MapMat o(out.data.data(), s.n, out_c);
  o.noalias() = in * w.transpose();
  o.rowwise() += ConstMapVec(bias->value.data.data(), out_c).transpose();
  return make_node(std::move(out), {x, weight, bias}, [x, weight, bias, out_c](Node& self) {
    const Shape s = x->shape();
    const ConstMapMat dout(self.grad.data.data(), s.n, out_c);
    const ConstMapMat in(x->value.data.data(), s.n, s.c);
    const ConstMapMat w(weight->value.data.data(), out_c, s.c);
    if (weight->requires_grad) MapMat(weight->grad_buffer().data.data(), out_c, s.c).noalias() += dout.transpose() * in;
    if (bias->requires_grad) MapVec(bias->grad_buffer().data.data(), out_c) += dout.colwise().sum().transpose();
    if (x->requires_grad) MapMat(x->grad_buffer().data.data(), s.n, s.c).noalias() += dout * w;
  });
}

/// Mean absolute difference, optionally restricted to positions where `weight` is nonzero
/// (weights are used as multipliers; normalization is by their sum). `target` gets no gradient
/// unless it requires one.
inline Var l1_loss(const Var& pred, const Var& target, const Tensor* weight = nullptr) {
  require_same_shape(pred->shape(), target->shape(), "l1_loss");
  if (weight) require_same_shape(pred->shape(), weight->shape, "l1_loss weight");
  double total = 0.0, norm = 0.0;
  for (size_t i = 0; i < pred->value.size(); ++i) {
    const float w = weight ? weight->data[i] : 1.0f;
    total += w * std::abs(pred->value.data[i] - target->value.data[i]);
    norm += w;
  }
  const float denom = norm > 0 ? static_cast<float>(norm) : 1.0f;
  Tensor mask = weight ? *weight : Tensor();
  return make_node(Tensor::scalar(static_cast<float>(total / denom)), {pred, target},
                   [pred, target, mask, denom](Node& self) {
                     const float g0 = self.grad.data[0] / denom;
                     Tensor g(pred->shape());
                     for (size_t i = 0; i < g.size(); ++i) {
                       const float d = pred->value.data[i] - target->value.data[i];
                       const float w = mask.empty() ? 1.0f : mask.data[i];
                       g.data[i] = g0 * w * (d > 0 ? 1.0f : (d < 0 ? -1.0f : 0.0f));
                     }
                     detail::accumulate(pred, g);
                     if (target->requires_grad) {
                       detail::vec(g) = -detail::vec(g);
                       detail::accumulate(target, g);
                     }
                   });
}

/// Mean of (x - target)^2 for a constant target (least-squares adversarial loss).
inline Var mse_to(const Var& x, float target) {
  const float n = static_cast<float>(x->value.size());
  const float value = (detail::vec(x->value).array() - target).square().sum() / n;
  return make_node(Tensor::scalar(value), {x}, [x, target, n](Node& self) {
    Tensor g(x->shape());
    detail::vec(g) = (detail::vec(x->value).array() - target) * (2.0f * self.grad.data[0] / n);
    detail::accumulate(x, g);
  });
}

inline Var mean(const Var& x) {
  const float n = static_cast<float>(x->value.size());
  return make_node(Tensor::scalar(detail::vec(x->value).sum() / n), {x}, [x, n](Node& self) {
    Tensor g(x->shape(), self.grad.data[0] / n);
    detail::accumulate(x, g);
  });
}

/// Weighted sum of scalars.
inline Var weighted_sum(const std::vector<std::pair<float, Var>>& terms) {
  require(!terms.empty(), "weighted_sum: no terms");
  double total = 0.0;
  std::vector<Var> parents;
  std::vector<float> weights;
  for (const auto& [w, v] : terms) {
    require(v->value.size() == 1, "weighted_sum: terms must be scalars");
    total += static_cast<double>(w) * v->value.data[0];
    parents.push_back(v);
    weights.push_back(w);
  }
  return make_node(Tensor::scalar(static_cast<float>(total)), parents, [parents, weights](Node& self) {
    for (size_t i = 0; i < parents.size(); ++i) detail::accumulate(parents[i], Tensor::scalar(weights[i] * self.grad.data[0]));
  });
}

/// Hook for losses with hand-written adjoints: `value` is precomputed, and `input_grads`
/// holds d value / d input for each input (empty tensor for inputs without a gradient).
inline Var custom_scalar(float value, const std::vector<Var>& inputs, std::vector<Tensor> input_grads) {
  require(inputs.size() == input_grads.size(), "custom_scalar: one gradient per input");
  return make_node(Tensor::scalar(value), inputs, [inputs, input_grads](Node& self) {
    const float g0 = self.grad.data[0];
    for (size_t i = 0; i < inputs.size(); ++i) {
      if (input_grads[i].empty()) continue;
      Tensor g(input_grads[i].shape);
      detail::vec(g) = detail::vec(input_grads[i]) * g0;
      detail::accumulate(inputs[i], g);
    }
  });
}

}  // namespace toder::nn
