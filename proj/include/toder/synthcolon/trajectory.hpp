#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "toder/core/rng.hpp"
#include "toder/core/se3.hpp"
#include "toder/core/types.hpp"
#include "toder/synthcolon/colon.hpp"

namespace toder::synthcolon {

struct TrajectoryOptions {
  /// Maximum lateral offset from the centerline, as a fraction of the radius.
  double max_offset = 0.3;
  /// Maximum angle between the viewing direction and the local tangent.
  double max_jitter_deg = 10.0;
  double max_roll_deg = 15.0;
  double fps = 30.0;
  /// Arc length kept free before the first camera; negative means one radius.
  double start_margin = -1.0;
  /// Arc length kept ahead of the last camera; negative means min(12 radii, 40% of the tube).
  double lookahead = -1.0;
};

namespace detail {

/// Band-limited noise in [-1, 1] over a normalized coordinate.
class SmoothNoise {
 public:
  SmoothNoise(Rng& rng, double base_cycles) {
    double total = 0.0;
    for (int k = 0; k < 3; ++k) {
      freq_[k] = base_cycles * (k + 1) * uniform(rng, 0.7, 1.3);
      phase_[k] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      amp_[k] = 1.0 / (k + 1);
      total += amp_[k];
    }
    for (double& a : amp_) a /= total;
  }

  [[nodiscard]] double operator()(double x) const {
    double v = 0.0;
    for (int k = 0; k < 3; ++k) v += amp_[k] * std::sin(2.0 * std::numbers::pi * freq_[k] * x + phase_[k]);
    return v;
  }

 private:
  double freq_[3], phase_[3], amp_[3];
};

}  // namespace detail

/// Camera path along the lumen: uniform arc-length spacing, smooth lateral offset and
/// view jitter, 30 fps timestamps. Camera axes: x right, y down, z forward.
inline std::vector<TimedPose> sample_trajectory(const ColonSdf& colon, int n_frames, uint64_t seed,
                                                const TrajectoryOptions& opt = {}) {
  require(n_frames >= 2, "trajectory: at least two frames are required");
  require(opt.max_offset >= 0 && opt.max_offset <= 0.3, "trajectory: max offset must lie in [0, 0.3]");
  require(opt.max_jitter_deg >= 0 && opt.max_jitter_deg <= 10.0, "trajectory: jitter must lie in [0, 10] degrees");
  const double radius = colon.spec().radius;
  const double start = opt.start_margin >= 0 ? opt.start_margin : radius;
  const double ahead = opt.lookahead >= 0 ? opt.lookahead : std::min(12.0 * radius, 0.4 * colon.length());
  const double end = colon.length() - ahead;
  require(end > start, "trajectory: tube too short for the requested margins");

  Rng rng = keyed_rng(seed, "synthcolon", "trajectory");
  const detail::SmoothNoise offset_mag(rng, 1.0), offset_dir(rng, 0.7), yaw(rng, 1.5), pitch(rng, 1.5),
      roll(rng, 0.8);
  const double deg = std::numbers::pi / 180.0;

  std::vector<TimedPose> out;
  out.reserve(static_cast<size_t>(n_frames));
  for (int i = 0; i < n_frames; ++i) {
    const double x = static_cast<double>(i) / (n_frames - 1);
    const double s = start + x * (end - start);
    const CenterlineFrame f = colon.frame_at(s);

    const double mag = opt.max_offset * radius * 0.5 * (1.0 + offset_mag(x)) * (1.0 - 1e-9);
    const double phi = std::numbers::pi * offset_dir(x);
    const Eigen::Vector3d position = f.position + mag * (std::cos(phi) * f.normal + std::sin(phi) * f.binormal);

    Eigen::Vector3d tilt(pitch(x), yaw(x), 0.0);
    tilt *= opt.max_jitter_deg * deg;
    if (tilt.norm() > opt.max_jitter_deg * deg) tilt *= opt.max_jitter_deg * deg / tilt.norm();
    Eigen::Matrix3d base;
    base.col(0) = f.normal;
    base.col(1) = f.binormal;
    base.col(2) = f.tangent;
    const Eigen::Matrix3d jitter =
        so3_exp<double>(tilt) * Eigen::AngleAxisd(opt.max_roll_deg * deg * roll(x), Eigen::Vector3d::UnitZ())
                                    .toRotationMatrix();
    out.push_back({i / opt.fps, Pose(Eigen::Matrix3d(base * jitter), position)});
  }
  return out;
}

inline std::vector<TimedPose> sample_trajectory(const ColonSpec& spec, int n_frames, uint64_t seed,
                                                const TrajectoryOptions& opt = {}) {
  return sample_trajectory(ColonSdf(spec), n_frames, seed, opt);
}

}  // namespace toder::synthcolon
