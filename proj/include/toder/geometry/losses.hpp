#pragma once

#include <string>
#include <vector>

#include "toder/geometry/ssim.hpp"
#include "toder/geometry/warp.hpp"

namespace toder::geometry {

struct LossWeights {
  double lambda_i = 0.15;
  double lambda_s = 0.85;
  double w_photo = 0.1;
  double w_cons = 0.5;
  double w_gan = 1.0;
  double w_cycle = 10.0;
  double w_sup = 1.0;
  double w_self = 0.1;
  /// Supervised pose term on translated source pairs.
  double w_pose = 1.0;

  void validate() const {
    for (double w : {lambda_i, lambda_s, w_photo, w_cons, w_gan, w_cycle, w_sup, w_self, w_pose})
      require(w >= 0.0 && std::isfinite(w), "loss weights must be finite and non-negative");
  }
};

/// How the two depths of a correspondence are compared by the consistency loss.
enum class ConsistencyMode {
  /// a's depth transformed into b's camera vs b's depth sampled at the warped pixel.
  warped_z,
  /// a's depth as predicted vs b's sampled depth.
  raw,
};

inline std::string to_string(ConsistencyMode m) { return m == ConsistencyMode::raw ? "raw" : "warped_z"; }

inline ConsistencyMode consistency_mode_from_string(const std::string& s) {
  if (s == "warped_z") return ConsistencyMode::warped_z;
  if (s == "raw") return ConsistencyMode::raw;
  throw ValidationError("unknown consistency mode '" + s + "' (expected warped_z or raw)");
}

template <typename T>
using Vec6 = Eigen::Matrix<T, 6, 1>;

/// Motion from stacked (axis-angle, translation) parameters.
template <typename T>
Rigid<T> rigid_from_params(const Vec6<T>& p) {
  return {so3_exp<T>(Vec3<T>(p.template head<3>())), Vec3<T>(p.template tail<3>())};
}

template <typename T>
Vec6<T> params_from_sixdof(const SixDof& v) {
  Vec6<T> p;
  p << v.axis_angle.cast<T>(), v.translation.cast<T>();
  return p;
}

/// Mean over `valid` of lambda_i*|I - I'| + lambda_s*(1 - SSIM)/2, both channel-averaged.
template <typename T>
T photometric_loss(const std::vector<Plane<T>>& image, const std::vector<Plane<T>>& warped, const Mask& valid,
                   double lambda_i, double lambda_s, const SsimParams& sp = {}) {
  require(image.size() == warped.size() && !image.empty(), "photometric loss: channel counts differ");
  for (size_t c = 0; c < image.size(); ++c)
    require(image[c].rows() == warped[c].rows() && image[c].cols() == warped[c].cols() &&
                image[c].rows() == valid.rows() && image[c].cols() == valid.cols(),
            "photometric loss: shapes differ");
  const long n = valid.count();
  require(n > 0, "photometric loss: no valid pixels");
  const T channels = T(image.size());
  Plane<T> l1 = Plane<T>::Zero(valid.rows(), valid.cols());
  for (size_t c = 0; c < image.size(); ++c) l1 += (image[c] - warped[c]).abs();
  const Plane<T> per_pixel =
      T(lambda_i) * l1 / channels + T(lambda_s) * (T(1) - ssim(image, warped, sp)) / T(2);
  return valid.select(per_pixel, T(0)).sum() / T(n);
}

template <typename T>
T photometric_loss(const Image<T>& image, const Image<T>& warped, const Mask& valid, double lambda_i,
                   double lambda_s) {
  return photometric_loss(image.channels, warped.channels, valid, lambda_i, lambda_s);
}

/// Per-correspondence relative depth difference |a - b| / (a + b).
template <typename T>
T consistency_term(T a, T b) {
  using std::abs;
  return abs(a - b) / (a + b);
}

/// Depths compared at the correspondences of `warp_ab`: mean of |M_a - M_b|/(M_a + M_b).
/// M_b is depth_b sampled bilinearly at the warped coordinates; M_a depends on `mode`.
template <typename T>
T depth_consistency_loss(const Plane<T>& depth_a, const Plane<T>& depth_b, const Mask& valid_b,
                         const WarpResult<T>& warp_ab, ConsistencyMode mode = ConsistencyMode::warped_z) {
  const Sampled<T> mb = bilinear_sample<T>({depth_b}, warp_ab.u, warp_ab.v, &valid_b);
  T sum = T(0);
  long n = 0;
  for (Eigen::Index r = 0; r < depth_a.rows(); ++r) {
    for (Eigen::Index c = 0; c < depth_a.cols(); ++c) {
      if (!warp_ab.valid(r, c) || !mb.valid(r, c)) continue;
      const T ma = mode == ConsistencyMode::warped_z ? warp_ab.warped_depth(r, c) : depth_a(r, c);
      sum += consistency_term(ma, mb.channels[0](r, c));
      ++n;
    }
  }
  require(n > 0, "depth consistency loss: no valid correspondences");
  return sum / T(n);
}

inline double depth_consistency_loss(const DepthMap& m_a, const DepthMap& m_b, const WarpResult<double>& warp_ab,
                                     ConsistencyMode mode = ConsistencyMode::warped_z) {
  return depth_consistency_loss<double>(m_a.values, m_b.values, m_b.valid, warp_ab, mode);
}

// Differentiable forms used for training. Pose parameters are (axis-angle, translation)
// of the a-to-b motion; gradients are of the returned value.

template <typename T>
struct PhotometricGrad {
  T value = T(0);
  long n_valid = 0;
  Plane<T> d_depth_a;
  Vec6<T> d_pose = Vec6<T>::Zero();
  std::vector<Plane<T>> d_image_a, d_image_b;
};

template <typename T>
struct ConsistencyGrad {
  T value = T(0);
  long n_valid = 0;
  Plane<T> d_depth_a, d_depth_b;
  Vec6<T> d_pose = Vec6<T>::Zero();
};

namespace detail {

/// Accumulates a gradient on the b-camera point of pixel (r, c) into depth and pose gradients.
template <typename T>
void pull_point_grad(const Vec3<T>& g_point, const Vec3<T>& rotated, const Vec3<T>& rotated_ray, const Mat3<T>& jl_t,
                     T& d_depth, Vec6<T>& d_pose) {
  d_depth += g_point.dot(rotated_ray);
  d_pose.template head<3>() += jl_t * rotated.cross(g_point);
  d_pose.template tail<3>() += g_point;
}

template <typename T>
Vec3<T> point_grad_from_pixel(const Vec3<T>& p, T du, T dv, const CameraIntrinsics& k) {
  const T iz = T(1) / p.z();
  return {du * T(k.fx) * iz, dv * T(k.fy) * iz, -(du * T(k.fx) * p.x() + dv * T(k.fy) * p.y()) * iz * iz};
}

template <typename T>
Vec3<T> pixel_ray(Eigen::Index r, Eigen::Index c, const CameraIntrinsics& k) {
  return {T((c - k.cx) / k.fx), T((r - k.cy) / k.fy), T(1)};
}

}  // namespace detail

/// Photometric loss between image_a and image_b sampled at a's pixels warped into b.
/// Returns n_valid = 0 (value 0, zero gradients) when nothing projects.
template <typename T>
PhotometricGrad<T> photometric_warp_loss(const std::vector<Plane<T>>& image_a, const std::vector<Plane<T>>& image_b,
                                         const Plane<T>& depth_a, const Mask& valid_a, const Vec6<T>& pose,
                                         const CameraIntrinsics& k, double lambda_i, double lambda_s,
                                         const SsimParams& sp = {}) {
  require(image_a.size() == image_b.size() && !image_a.empty(), "photometric loss: channel counts differ");
  const Eigen::Index rows = depth_a.rows(), cols = depth_a.cols();
  const size_t nc = image_a.size();
  PhotometricGrad<T> out;
  out.d_depth_a = Plane<T>::Zero(rows, cols);
  out.d_image_a.assign(nc, Plane<T>::Zero(rows, cols));
  out.d_image_b.assign(nc, Plane<T>::Zero(image_b[0].rows(), image_b[0].cols()));

  const Rigid<T> motion = rigid_from_params(pose);
  const WarpResult<T> w = warp(depth_a, valid_a, motion, k);
  Sampled<T> warped = bilinear_sample(image_b, w.u, w.v);
  const Mask valid = w.valid && warped.valid;
  for (auto& ch : warped.channels) ch = valid.select(ch, T(0));
  out.n_valid = valid.count();
  if (out.n_valid == 0) return out;
  const T inv_n = T(1) / T(out.n_valid);
  const T channels = T(nc);

  Plane<T> l1 = Plane<T>::Zero(rows, cols);
  for (size_t c = 0; c < nc; ++c) l1 += (image_a[c] - warped.channels[c]).abs();
  const Plane<T> s = ssim(image_a, warped.channels, sp);
  out.value = valid.select(T(lambda_i) * l1 / channels + T(lambda_s) * (T(1) - s) / T(2), T(0)).sum() * inv_n;

  // Gradient on the warped image, per channel.
  std::vector<Plane<T>> g_warped(nc, Plane<T>::Zero(rows, cols));
  const Plane<T> ssim_up = valid.select(Plane<T>::Constant(rows, cols, -T(lambda_s) / (T(2) * channels) * inv_n), T(0));
  for (size_t c = 0; c < nc; ++c) {
    const Plane<T> diff = image_a[c] - warped.channels[c];
    const Plane<T> sign = diff.sign();
    const Plane<T> g_l1 = valid.select(T(lambda_i) / channels * inv_n * sign, T(0));
    out.d_image_a[c] += g_l1;
    g_warped[c] -= g_l1;
    ssim_backward(image_a[c], warped.channels[c], ssim_up, sp, out.d_image_a[c], g_warped[c]);
  }

  const Mat3<T> jl_t = so3_left_jacobian<T>(Vec3<T>(pose.template head<3>())).transpose();
  const Eigen::Index src_rows = image_b[0].rows(), src_cols = image_b[0].cols();
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!valid(r, c)) continue;
      const BilinearStencil<T> st(w.u(r, c), w.v(r, c), src_cols, src_rows);
      T du = T(0), dv = T(0);
      for (size_t ch = 0; ch < nc; ++ch) {
        const T g = g_warped[ch](r, c);
        st.scatter(out.d_image_b[ch], g);
        const auto sl = st.slope(image_b[ch]);
        du += g * sl[0];
        dv += g * sl[1];
      }
      const Vec3<T> rotated_ray = motion.rotation * detail::pixel_ray<T>(r, c, k);
      const Vec3<T> rotated = depth_a(r, c) * rotated_ray;
      const Vec3<T> p = rotated + motion.translation;
      detail::pull_point_grad(detail::point_grad_from_pixel(p, du, dv, k), rotated, rotated_ray, jl_t,
                              out.d_depth_a(r, c), out.d_pose);
    }
  }
  return out;
}

/// Depth consistency between depth_a warped into b and depth_b, with gradients.
/// Returns n_valid = 0 (value 0, zero gradients) when nothing projects.
template <typename T>
ConsistencyGrad<T> consistency_warp_loss(const Plane<T>& depth_a, const Mask& valid_a, const Plane<T>& depth_b,
                                         const Mask& valid_b, const Vec6<T>& pose, const CameraIntrinsics& k,
                                         ConsistencyMode mode = ConsistencyMode::warped_z) {
  const Eigen::Index rows = depth_a.rows(), cols = depth_a.cols();
  ConsistencyGrad<T> out;
  out.d_depth_a = Plane<T>::Zero(rows, cols);
  out.d_depth_b = Plane<T>::Zero(depth_b.rows(), depth_b.cols());

  const Rigid<T> motion = rigid_from_params(pose);
  const WarpResult<T> w = warp(depth_a, valid_a, motion, k);
  const Sampled<T> mb = bilinear_sample<T>({depth_b}, w.u, w.v, &valid_b);
  const Mask valid = w.valid && mb.valid;
  out.n_valid = valid.count();
  if (out.n_valid == 0) return out;
  const T inv_n = T(1) / T(out.n_valid);

  const Mat3<T> jl_t = so3_left_jacobian<T>(Vec3<T>(pose.template head<3>())).transpose();
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!valid(r, c)) continue;
      const T ma = mode == ConsistencyMode::warped_z ? w.warped_depth(r, c) : depth_a(r, c);
      const T b = mb.channels[0](r, c);
      out.value += consistency_term(ma, b) * inv_n;
      const T diff = ma - b;
      const T sign = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
      const T sum2 = (ma + b) * (ma + b);
      const T g_ma = sign * T(2) * b / sum2 * inv_n;
      const T g_mb = -sign * T(2) * ma / sum2 * inv_n;

      const BilinearStencil<T> st(w.u(r, c), w.v(r, c), depth_b.cols(), depth_b.rows());
      st.scatter(out.d_depth_b, g_mb);
      const auto sl = st.slope(depth_b);
      const Vec3<T> rotated_ray = motion.rotation * detail::pixel_ray<T>(r, c, k);
      const Vec3<T> rotated = depth_a(r, c) * rotated_ray;
      const Vec3<T> p = rotated + motion.translation;
      Vec3<T> g_point = detail::point_grad_from_pixel(p, g_mb * sl[0], g_mb * sl[1], k);
      if (mode == ConsistencyMode::warped_z) {
        g_point.z() += g_ma;
      } else {
        out.d_depth_a(r, c) += g_ma;
      }
      detail::pull_point_grad(g_point, rotated, rotated_ray, jl_t, out.d_depth_a(r, c), out.d_pose);
    }
  }
  return out;
}

}  // namespace toder::geometry
