#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "toder/core/se3.hpp"
#include "toder/core/types.hpp"

namespace toder::geometry {

template <typename T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
template <typename T>
using Mat3 = Eigen::Matrix<T, 3, 3>;

/// Rigid motion in scalar type T: x -> rotation * x + translation.
template <typename T>
struct Rigid {
  Mat3<T> rotation = Mat3<T>::Identity();
  Vec3<T> translation = Vec3<T>::Zero();

  static Rigid from(const Pose& p) {
    return {p.rotation_matrix().template cast<T>(), p.translation.template cast<T>()};
  }
  static Rigid from(const SixDof& v) {
    return {so3_exp<T>(v.axis_angle.template cast<T>()), v.translation.template cast<T>()};
  }
};

/// Camera-space points stored per coordinate.
template <typename T>
struct PointPlanes {
  Plane<T> x, y, z;
};

template <typename T>
struct WarpResult {
  /// Continuous pixel coordinates in the target frame.
  Plane<T> u, v;
  Mask valid;
  /// Source depth expressed as z in the target camera.
  Plane<T> warped_depth;
};

template <typename T>
PointPlanes<T> backproject(const Plane<T>& depth, const CameraIntrinsics& k) {
  const Eigen::Index rows = depth.rows(), cols = depth.cols();
  PointPlanes<T> out{Plane<T>(rows, cols), Plane<T>(rows, cols), depth};
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      out.x(r, c) = depth(r, c) * T((c - k.cx) / k.fx);
      out.y(r, c) = depth(r, c) * T((r - k.cy) / k.fy);
    }
  }
  return out;
}

inline PointPlanes<double> backproject(const DepthMap& depth, const CameraIntrinsics& k) {
  require(depth.valid_count() > 0, "backproject: depth map has no valid pixels");
  return backproject<double>(depth.values, k);
}

/// Pinhole projection; returns (u, v) planes. Points with z <= 0 yield non-finite coordinates.
template <typename T>
std::array<Plane<T>, 2> project(const PointPlanes<T>& p, const CameraIntrinsics& k) {
  return {T(k.fx) * p.x / p.z + T(k.cx), T(k.fy) * p.y / p.z + T(k.cy)};
}

/// Inside [0, cols-1] x [0, rows-1], allowing for projection round-off at the border.
template <typename T>
bool in_image(T u, T v, Eigen::Index cols, Eigen::Index rows) {
  const T slack = T(1e-6);
  return u >= -slack && v >= -slack && u <= T(cols - 1) + slack && v <= T(rows - 1) + slack;
}

/// Inverse warp of frame a into frame b using a's depth and the a-to-b motion.
template <typename T>
WarpResult<T> warp(const Plane<T>& depth_a, const Mask& valid_a, const Rigid<T>& a_to_b, const CameraIntrinsics& k) {
  const Eigen::Index rows = depth_a.rows(), cols = depth_a.cols();
  WarpResult<T> out{Plane<T>(rows, cols), Plane<T>(rows, cols), Mask::Constant(rows, cols, false),
                    Plane<T>(rows, cols)};
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const T d = depth_a(r, c);
      const Vec3<T> ray(T((c - k.cx) / k.fx), T((r - k.cy) / k.fy), T(1));
      const Vec3<T> p = a_to_b.rotation * (d * ray) + a_to_b.translation;
      out.warped_depth(r, c) = p.z();
      out.u(r, c) = T(k.fx) * p.x() / p.z() + T(k.cx);
      out.v(r, c) = T(k.fy) * p.y() / p.z() + T(k.cy);
      out.valid(r, c) = valid_a(r, c) && p.z() > T(0) && std::isfinite(out.u(r, c)) &&
                        std::isfinite(out.v(r, c)) && in_image(out.u(r, c), out.v(r, c), cols, rows);
    }
  }
  return out;
}

inline WarpResult<double> warp(const DepthMap& depth_a, const Pose& a_to_b, const CameraIntrinsics& k) {
  return warp<double>(depth_a.values, depth_a.valid, Rigid<double>::from(a_to_b), k);
}

/// The four lattice neighbours of a continuous coordinate and their weights.
template <typename T>
struct BilinearStencil {
  Eigen::Index r0, c0;
  T fu, fv;

  BilinearStencil(T u, T v, Eigen::Index cols, Eigen::Index rows) {
    using std::floor;
    c0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(floor(u)), cols - 2);
    r0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(floor(v)), rows - 2);
    c0 = std::max<Eigen::Index>(c0, 0);
    r0 = std::max<Eigen::Index>(r0, 0);
    u = std::clamp(u, T(0), T(cols - 1));
    v = std::clamp(v, T(0), T(rows - 1));
    fu = u - T(c0);
    fv = v - T(r0);
  }

  template <typename Plane_>
  [[nodiscard]] T sample(const Plane_& img) const {
    const Eigen::Index c1 = std::min(c0 + 1, img.cols() - 1), r1 = std::min(r0 + 1, img.rows() - 1);
    return (T(1) - fv) * ((T(1) - fu) * img(r0, c0) + fu * img(r0, c1)) + fv * ((T(1) - fu) * img(r1, c0) + fu * img(r1, c1));
  }

  /// d sample / du and d sample / dv.
  template <typename Plane_>
  [[nodiscard]] std::array<T, 2> slope(const Plane_& img) const {
    const Eigen::Index c1 = std::min(c0 + 1, img.cols() - 1), r1 = std::min(r0 + 1, img.rows() - 1);
    const T du = (T(1) - fv) * (img(r0, c1) - img(r0, c0)) + fv * (img(r1, c1) - img(r1, c0));
    const T dv = (T(1) - fu) * (img(r1, c0) - img(r0, c0)) + fu * (img(r1, c1) - img(r0, c1));
    return {du, dv};
  }

  /// Accumulates `g` times the interpolation weights into `grad`.
  void scatter(Plane<T>& grad, T g) const {
    const Eigen::Index c1 = std::min(c0 + 1, grad.cols() - 1), r1 = std::min(r0 + 1, grad.rows() - 1);
    grad(r0, c0) += g * (T(1) - fu) * (T(1) - fv);
    grad(r0, c1) += g * fu * (T(1) - fv);
    grad(r1, c0) += g * (T(1) - fu) * fv;
    grad(r1, c1) += g * fu * fv;
  }

  [[nodiscard]] bool all_valid(const Mask& m) const {
    const Eigen::Index c1 = std::min(c0 + 1, m.cols() - 1), r1 = std::min(r0 + 1, m.rows() - 1);
    return m(r0, c0) && m(r0, c1) && m(r1, c0) && m(r1, c1);
  }
};

template <typename T>
struct Sampled {
  std::vector<Plane<T>> channels;
  Mask valid;
};

/// Bilinear lookup of every channel at (u, v). Coordinates outside the image, or whose
/// stencil touches a pixel with source_valid=false, give 0 and valid=false.
template <typename T>
Sampled<T> bilinear_sample(const std::vector<Plane<T>>& image, const Plane<T>& u, const Plane<T>& v,
                           const Mask* source_valid = nullptr) {
  require(!image.empty(), "bilinear_sample: image has no channels");
  const Eigen::Index rows = u.rows(), cols = u.cols();
  const Eigen::Index src_rows = image[0].rows(), src_cols = image[0].cols();
  Sampled<T> out;
  out.channels.assign(image.size(), Plane<T>::Zero(rows, cols));
  out.valid = Mask::Constant(rows, cols, false);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const T uu = u(r, c), vv = v(r, c);
      if (!std::isfinite(uu) || !std::isfinite(vv) || !in_image(uu, vv, src_cols, src_rows)) continue;
      const BilinearStencil<T> st(uu, vv, src_cols, src_rows);
      if (source_valid && !st.all_valid(*source_valid)) continue;
      out.valid(r, c) = true;
      for (size_t ch = 0; ch < image.size(); ++ch) out.channels[ch](r, c) = st.sample(image[ch]);
    }
  }
  return out;
}

template <typename T>
Sampled<T> bilinear_sample(const Image<T>& image, const Plane<T>& u, const Plane<T>& v) {
  return bilinear_sample(image.channels, u, v);
}

}  // namespace toder::geometry
