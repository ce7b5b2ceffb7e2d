#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <string>
#include <vector>

#include "toder/core/error.hpp"

namespace toder {

/// Row-major 2D array; the storage for every per-pixel quantity.
template <typename T>
using Plane = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Mask = Plane<bool>;

/// Pinhole camera with optional two-term radial distortion.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  double k1 = 0.0;
  double k2 = 0.0;

  void validate() const {
    require(fx > 0 && fy > 0, "intrinsics: focal lengths must be positive");
    require(width > 0 && height > 0, "intrinsics: image size must be positive");
    require(cx >= 0 && cx < width && cy >= 0 && cy < height,
            "intrinsics: principal point must lie inside the image");
  }

  /// Symmetric camera with the given horizontal field of view.
  static CameraIntrinsics from_fov(int width, int height, double hfov_rad) {
    CameraIntrinsics k;
    k.width = width;
    k.height = height;
    k.fx = k.fy = 0.5 * width / std::tan(0.5 * hfov_rad);
    k.cx = 0.5 * (width - 1);
    k.cy = 0.5 * (height - 1);
    return k;
  }
};

/// Rigid transform. Stored rotation is always a unit quaternion.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Pose() = default;
  Pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& t) : rotation(q.normalized()), translation(t) {}
  Pose(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) : rotation(Eigen::Quaterniond(r).normalized()), translation(t) {}

  static Pose identity() { return {}; }

  [[nodiscard]] Eigen::Matrix3d rotation_matrix() const { return rotation.toRotationMatrix(); }

  [[nodiscard]] Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_matrix();
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  [[nodiscard]] Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  /// Composition: (a * b) applies b first, then a.
  [[nodiscard]] Pose operator*(const Pose& b) const {
    Pose out;
    out.rotation = (rotation * b.rotation).normalized();
    out.translation = rotation * b.translation + translation;
    return out;
  }

  [[nodiscard]] Pose inverse() const {
    Pose out;
    out.rotation = rotation.conjugate().normalized();
    out.translation = -(out.rotation * translation);
    return out;
  }
};

inline Pose pose_compose(const Pose& a, const Pose& b) { return a * b; }
inline Pose pose_inverse(const Pose& p) { return p.inverse(); }

/// Relative motion taking camera-a coordinates into camera-b coordinates,
/// for camera-to-world poses a and b.
inline Pose relative_pose(const Pose& world_from_a, const Pose& world_from_b) {
  return world_from_b.inverse() * world_from_a;
}

/// Axis-angle rotation plus translation; the parameterization a pose network emits.
struct SixDof {
  Eigen::Vector3d axis_angle = Eigen::Vector3d::Zero();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

/// Metric depth per pixel; invalid pixels carry mask=false.
struct DepthMap {
  Plane<double> values;
  Mask valid;

  DepthMap() = default;
  DepthMap(int rows, int cols) : values(Plane<double>::Zero(rows, cols)), valid(Mask::Constant(rows, cols, false)) {}
  explicit DepthMap(Plane<double> v) : values(std::move(v)) {
    valid = values.unaryExpr([](double d) { return std::isfinite(d) && d > 0.0; });
  }

  [[nodiscard]] int rows() const { return static_cast<int>(values.rows()); }
  [[nodiscard]] int cols() const { return static_cast<int>(values.cols()); }
  [[nodiscard]] long valid_count() const { return valid.count(); }
};

/// Planar multi-channel image.
template <typename T>
struct Image {
  std::vector<Plane<T>> channels;

  Image() = default;
  Image(int n_channels, int rows, int cols, T fill = T(0))
      : channels(static_cast<size_t>(n_channels), Plane<T>::Constant(rows, cols, fill)) {}

  [[nodiscard]] int rows() const { return channels.empty() ? 0 : static_cast<int>(channels[0].rows()); }
  [[nodiscard]] int cols() const { return channels.empty() ? 0 : static_cast<int>(channels[0].cols()); }
  [[nodiscard]] int n_channels() const { return static_cast<int>(channels.size()); }

  template <typename U>
  [[nodiscard]] Image<U> cast() const {
    Image<U> out;
    out.channels.reserve(channels.size());
    for (const auto& c : channels) out.channels.push_back(c.template cast<U>());
    return out;
  }
};

using RgbImage = Image<float>;

struct Frame {
  RgbImage rgb;
  double timestamp = 0.0;
};

struct FrameSample {
  Frame frame;
  DepthMap depth;
  Pose pose;  // camera-to-world
};

struct TimedPose {
  double timestamp = 0.0;
  Pose pose;
};

}  // namespace toder
