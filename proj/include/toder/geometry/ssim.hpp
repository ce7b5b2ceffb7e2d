#pragma once

#include "toder/core/types.hpp"

namespace toder::geometry {

struct SsimParams {
  int window = 7;
  double c1 = 1e-4;
  double c2 = 9e-4;
};

/// Sum over the (2r+1)^2 window around each pixel, clipped at the border.
/// The clipped window is symmetric, so this operator is its own adjoint.
template <typename T>
Plane<T> box_sum(const Plane<T>& a, int radius) {
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Plane<T> horiz(rows, cols), out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      T s = T(0);
      for (Eigen::Index k = std::max<Eigen::Index>(0, c - radius); k <= std::min(cols - 1, c + radius); ++k) s += a(r, k);
      horiz(r, c) = s;
    }
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      T s = T(0);
      for (Eigen::Index k = std::max<Eigen::Index>(0, r - radius); k <= std::min(rows - 1, r + radius); ++k) s += horiz(k, c);
      out(r, c) = s;
    }
  }
  return out;
}

/// Number of pixels inside each clipped window.
template <typename T>
Plane<T> window_count(Eigen::Index rows, Eigen::Index cols, int radius) {
  return box_sum<T>(Plane<T>::Ones(rows, cols), radius);
}

/// Local window statistics shared by the forward and backward passes.
template <typename T>
struct SsimTerms {
  Plane<T> count, mx, my, a1, a2, b1, b2, value;
};

template <typename T>
SsimTerms<T> ssim_terms(const Plane<T>& x, const Plane<T>& y, const SsimParams& p) {
  require(x.rows() == y.rows() && x.cols() == y.cols(), "ssim: image shapes differ");
  require(p.window >= 1 && p.window % 2 == 1, "ssim: window must be a positive odd size");
  const int rad = p.window / 2;
  SsimTerms<T> t;
  t.count = window_count<T>(x.rows(), x.cols(), rad);
  t.mx = box_sum<T>(x, rad) / t.count;
  t.my = box_sum<T>(y, rad) / t.count;
  const Plane<T> exx = box_sum<T>(x * x, rad) / t.count;
  const Plane<T> eyy = box_sum<T>(y * y, rad) / t.count;
  const Plane<T> exy = box_sum<T>(x * y, rad) / t.count;
  const T c1 = T(p.c1), c2 = T(p.c2);
  t.a1 = T(2) * t.mx * t.my + c1;
  t.a2 = T(2) * (exy - t.mx * t.my) + c2;
  t.b1 = t.mx * t.mx + t.my * t.my + c1;
  t.b2 = (exx - t.mx * t.mx) + (eyy - t.my * t.my) + c2;
  t.value = (t.a1 * t.a2) / (t.b1 * t.b2);
  return t;
}

/// Per-pixel SSIM of two single-channel images with box-window statistics.
template <typename T>
Plane<T> ssim(const Plane<T>& x, const Plane<T>& y, const SsimParams& p = {}) {
  return ssim_terms(x, y, p).value;
}

/// Channel-averaged SSIM map.
template <typename T>
Plane<T> ssim(const std::vector<Plane<T>>& x, const std::vector<Plane<T>>& y, const SsimParams& p = {}) {
  require(x.size() == y.size() && !x.empty(), "ssim: channel counts differ");
  Plane<T> acc = ssim(x[0], y[0], p);
  for (size_t c = 1; c < x.size(); ++c) acc += ssim(x[c], y[c], p);
  return acc / T(x.size());
}

/// Pulls an upstream gradient on the SSIM map back to both images (accumulated into gx, gy).
template <typename T>
void ssim_backward(const Plane<T>& x, const Plane<T>& y, const Plane<T>& upstream, const SsimParams& p, Plane<T>& gx,
                   Plane<T>& gy) {
  const SsimTerms<T> t = ssim_terms(x, y, p);
  const int rad = p.window / 2;
  const Plane<T> denom = t.b1 * t.b2;
  const Plane<T> g = upstream / denom;
  // Partials of S with respect to the window means and second moments, already divided
  // by the window size so they act on raw box sums.
  const Plane<T> d_mx = (g * (T(2) * t.my * t.a2 - T(2) * t.my * t.a1) -
                         upstream * t.value * (T(2) * t.mx / t.b1 - T(2) * t.mx / t.b2)) / t.count;
  const Plane<T> d_my = (g * (T(2) * t.mx * t.a2 - T(2) * t.mx * t.a1) -
                         upstream * t.value * (T(2) * t.my / t.b1 - T(2) * t.my / t.b2)) / t.count;
  const Plane<T> d_exy = g * T(2) * t.a1 / t.count;
  const Plane<T> d_esq = -upstream * t.value / t.b2 / t.count;
  const Plane<T> s_mx = box_sum<T>(d_mx, rad), s_my = box_sum<T>(d_my, rad);
  const Plane<T> s_exy = box_sum<T>(d_exy, rad), s_esq = box_sum<T>(d_esq, rad);
  gx += s_mx + T(2) * x * s_esq + y * s_exy;
  gy += s_my + T(2) * y * s_esq + x * s_exy;
}

}  // namespace toder::geometry
