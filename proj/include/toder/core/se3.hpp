#pragma once

#include <cmath>

#include "toder/core/types.hpp"

namespace toder {

template <typename T>
Eigen::Matrix<T, 3, 3> skew(const Eigen::Matrix<T, 3, 1>& w) {
  Eigen::Matrix<T, 3, 3> m;
  m << T(0), -w.z(), w.y(),
       w.z(), T(0), -w.x(),
       -w.y(), w.x(), T(0);
  return m;
}

/// Rotation matrix of an axis-angle vector (exponential map of so(3)).
template <typename T>
Eigen::Matrix<T, 3, 3> so3_exp(const Eigen::Matrix<T, 3, 1>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T theta2 = w.squaredNorm();
  const Eigen::Matrix<T, 3, 3> k = skew(w);
  T a, b;
  if (theta2 < T(1e-12)) {
    a = T(1) - theta2 / T(6);
    b = T(0.5) - theta2 / T(24);
  } else {
    const T theta = sqrt(theta2);
    a = sin(theta) / theta;
    b = (T(1) - cos(theta)) / theta2;
  }
  return Eigen::Matrix<T, 3, 3>::Identity() + a * k + b * k * k;
}

/// Left Jacobian of SO(3): exp(w + d) ~= exp(J(w) d) exp(w) for small d.
template <typename T>
Eigen::Matrix<T, 3, 3> so3_left_jacobian(const Eigen::Matrix<T, 3, 1>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T theta2 = w.squaredNorm();
  const Eigen::Matrix<T, 3, 3> k = skew(w);
  T b, c;
  if (theta2 < T(1e-10)) {
    b = T(0.5) - theta2 / T(24);
    c = T(1) / T(6) - theta2 / T(120);
  } else {
    const T theta = sqrt(theta2);
    b = (T(1) - cos(theta)) / theta2;
    c = (theta - sin(theta)) / (theta2 * theta);
  }
  return Eigen::Matrix<T, 3, 3>::Identity() + b * k + c * k * k;
}

/// Pose whose rotation is the axis-angle rotation and whose translation is taken verbatim.
inline Pose pose_from_6dof(const SixDof& v) {
  return Pose(Eigen::Matrix3d(so3_exp<double>(v.axis_angle)), v.translation);
}

/// Inverse of pose_from_6dof (log map on the rotation); angles land in [0, pi].
inline SixDof sixdof_from_pose(const Pose& p) {
  Eigen::Quaterniond q = p.rotation.normalized();
  if (q.w() < 0) q.coeffs() *= -1.0;
  const Eigen::Vector3d v = q.vec();
  const double s = v.norm();
  SixDof out;
  out.translation = p.translation;
  if (s < 1e-12) {
    out.axis_angle = 2.0 * v / q.w();
  } else {
    const double angle = 2.0 * std::atan2(s, q.w());
    out.axis_angle = v * (angle / s);
  }
  return out;
}

/// Geodesic rotation angle between two poses, radians.
inline double rotation_angle_between(const Pose& a, const Pose& b) {
  return a.rotation.angularDistance(b.rotation);
}

}  // namespace toder
