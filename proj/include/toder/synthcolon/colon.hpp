#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "toder/core/rng.hpp"
#include "toder/core/types.hpp"

namespace toder::synthcolon {

/// Procedural colon: a tube of modulated radius swept along a smooth centerline.
struct ColonSpec {
  std::vector<Eigen::Vector3d> control_points;
  double radius = 0.5;
  /// Inward depth of the haustral folds, meters. At most half the radius.
  double fold_amplitude = 0.0;
  /// Folds per radius-length of arc.
  double fold_frequency = 0.0;
  uint64_t seed = 0;

  void validate() const {
    require(control_points.size() >= 2, "colon: at least two control points required");
    require(radius > 0, "colon: radius must be positive");
    require(fold_amplitude >= 0 && fold_amplitude <= 0.5 * radius,
            "colon: fold amplitude must lie in [0, 0.5*radius]");
    require(fold_frequency >= 0, "colon: fold frequency must be non-negative");
  }

  static ColonSpec straight(double length, double radius) {
    ColonSpec s;
    s.control_points = {Eigen::Vector3d::Zero(), Eigen::Vector3d(0, 0, length)};
    s.radius = radius;
    return s;
  }

  /// Gently bending random walk along +z; bend radius stays well above the tube radius.
  static ColonSpec procedural(double length, double radius, double fold_amplitude, double fold_frequency,
                              uint64_t seed) {
    ColonSpec s;
    s.radius = radius;
    s.fold_amplitude = fold_amplitude;
    s.fold_frequency = fold_frequency;
    s.seed = seed;
    Rng rng = keyed_rng(seed, "synthcolon", "centerline");
    const int n = std::max(3, static_cast<int>(std::ceil(length / (4.0 * radius))) + 1);
    const double step = length / (n - 1);
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    Eigen::Vector3d dir = Eigen::Vector3d::UnitZ();
    for (int i = 0; i < n; ++i) {
      s.control_points.push_back(p);
      const Eigen::Vector3d bend(uniform(rng, -0.25, 0.25), uniform(rng, -0.25, 0.25), 0.0);
      dir = (dir + bend).normalized();
      if (dir.z() < 0.7) dir = (dir + Eigen::Vector3d(0, 0, 0.5)).normalized();
      p += step * dir;
    }
    return s;
  }
};

/// Arc-length parameterized point on the centerline with its local frame.
struct CenterlineFrame {
  Eigen::Vector3d position;
  Eigen::Vector3d tangent;
  Eigen::Vector3d normal;
  Eigen::Vector3d binormal;
};

/// Location of the nearest centerline point to a query; reused as a search hint.
struct TubeHint {
  int segment = -1;
};

/// Surface parameterization used for texturing: arc length and angle around the tube.
struct TubeCoords {
  double arc = 0.0;
  double angle = 0.0;
};

/// Signed distance to the tube wall. Interior points are negative.
///
/// The centerline is a dense polyline (Catmull-Rom samples), so the distance term is exact
/// for the piecewise-capsule geometry; the fold modulation makes the raw value
/// over-estimate, which is corrected by dividing by its Lipschitz bound.
class ColonSdf {
 public:
  using Hint = TubeHint;

  explicit ColonSdf(const ColonSpec& spec) : spec_(spec) {
    spec_.validate();
    build_polyline();
    const double fold_slope = spec_.fold_amplitude * std::numbers::pi * spec_.fold_frequency / spec_.radius;
    const double bend = std::clamp(1.0 - max_curvature_ * spec_.radius, 0.25, 1.0);
    lipschitz_ = std::sqrt(1.0 + (fold_slope / bend) * (fold_slope / bend));
  }

  [[nodiscard]] const ColonSpec& spec() const { return spec_; }
  [[nodiscard]] double length() const { return arc_.back(); }
  [[nodiscard]] int n_segments() const { return static_cast<int>(points_.size()) - 1; }
  [[nodiscard]] double lipschitz() const { return lipschitz_; }
  [[nodiscard]] double min_segment_length() const { return min_segment_; }

  /// Local tube radius at arc length s.
  [[nodiscard]] double radius_at(double s) const {
    if (spec_.fold_amplitude == 0.0) return spec_.radius;
    const double phase = 2.0 * std::numbers::pi * spec_.fold_frequency * s / spec_.radius;
    return spec_.radius - spec_.fold_amplitude * 0.5 * (1.0 - std::cos(phase));
  }

  [[nodiscard]] double operator()(const Eigen::Vector3d& p) const {
    TubeHint hint;
    return evaluate(p, hint);
  }

  /// Evaluates the SDF. With a valid hint only segments near the hinted one are
  /// searched; the window grows with `max_move`, the distance travelled since the
  /// hint was produced. The hint is updated to the new nearest segment.
  double evaluate(const Eigen::Vector3d& p, TubeHint& hint, double max_move = -1.0) const {
    int lo = 0, hi = n_segments() - 1;
    if (hint.segment >= 0 && max_move >= 0.0) {
      const int window = 2 + static_cast<int>(std::ceil(2.0 * max_move / min_segment_));
      lo = std::max(0, hint.segment - window);
      hi = std::min(n_segments() - 1, hint.segment + window);
    }
    double best = std::numeric_limits<double>::infinity();
    double best_t = 0.0;
    int best_seg = lo;
    for (int j = lo; j <= hi; ++j) {
      double t;
      const double d2 = segment_distance2(p, j, t);
      if (d2 < best) {
        best = d2;
        best_t = t;
        best_seg = j;
      }
    }
    hint.segment = best_seg;
    const double s = arc_[best_seg] + best_t * (arc_[best_seg + 1] - arc_[best_seg]);
    return (std::sqrt(best) - radius_at(s)) / lipschitz_;
  }

  /// Closest centerline parameter and angular position around it.
  [[nodiscard]] TubeCoords coords(const Eigen::Vector3d& p, TubeHint& hint) const {
    evaluate(p, hint, hint.segment >= 0 ? 0.0 : -1.0);
    const int j = hint.segment;
    double t;
    segment_distance2(p, j, t);
    const Eigen::Vector3d c = points_[j] + t * (points_[j + 1] - points_[j]);
    const Eigen::Vector3d off = p - c;
    TubeCoords out;
    out.arc = arc_[j] + t * (arc_[j + 1] - arc_[j]);
    out.angle = std::atan2(off.dot(binormals_[j]), off.dot(normals_[j]));
    return out;
  }

  /// Frame at arc length s (clamped to the centerline).
  [[nodiscard]] CenterlineFrame frame_at(double s) const {
    s = std::clamp(s, 0.0, length());
    const auto it = std::upper_bound(arc_.begin(), arc_.end(), s);
    int j = static_cast<int>(std::distance(arc_.begin(), it)) - 1;
    j = std::clamp(j, 0, n_segments() - 1);
    const double seg = arc_[j + 1] - arc_[j];
    const double t = seg > 0 ? (s - arc_[j]) / seg : 0.0;
    CenterlineFrame f;
    f.position = points_[j] + t * (points_[j + 1] - points_[j]);
    f.tangent = tangents_[j];
    f.normal = normals_[j];
    f.binormal = binormals_[j];
    return f;
  }

  /// Surface point at (arc, angle), on the modulated swept circle.
  [[nodiscard]] Eigen::Vector3d surface_point(double s, double angle) const {
    const CenterlineFrame f = frame_at(s);
    return f.position + radius_at(s) * (std::cos(angle) * f.normal + std::sin(angle) * f.binormal);
  }

  [[nodiscard]] const std::vector<Eigen::Vector3d>& polyline() const { return points_; }
  [[nodiscard]] const std::vector<double>& arc_lengths() const { return arc_; }

 private:
  double segment_distance2(const Eigen::Vector3d& p, int j, double& t) const {
    const Eigen::Vector3d& a = points_[j];
    const Eigen::Vector3d ab = points_[j + 1] - a;
    const double len2 = ab.squaredNorm();
    t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (a + t * ab - p).squaredNorm();
  }

  static Eigen::Vector3d catmull_rom(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1, const Eigen::Vector3d& p2,
                                     const Eigen::Vector3d& p3, double t) {
    const double t2 = t * t, t3 = t2 * t;
    return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                  (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
  }

  void build_polyline() {
    const auto& cp = spec_.control_points;
    const int n = static_cast<int>(cp.size());
    auto at = [&](int i) -> Eigen::Vector3d {
      if (i < 0) return 2.0 * cp[0] - cp[1];
      if (i >= n) return 2.0 * cp[n - 1] - cp[n - 2];
      return cp[i];
    };
    const double target = spec_.radius / 8.0;
    points_.push_back(cp[0]);
    for (int i = 0; i + 1 < n; ++i) {
      const int samples = std::max(1, static_cast<int>(std::ceil((cp[i + 1] - cp[i]).norm() / target)));
      for (int k = 1; k <= samples; ++k) {
        points_.push_back(catmull_rom(at(i - 1), at(i), at(i + 1), at(i + 2), static_cast<double>(k) / samples));
      }
    }
    arc_.assign(points_.size(), 0.0);
    min_segment_ = std::numeric_limits<double>::infinity();
    for (size_t i = 1; i < points_.size(); ++i) {
      const double seg = (points_[i] - points_[i - 1]).norm();
      arc_[i] = arc_[i - 1] + seg;
      min_segment_ = std::min(min_segment_, seg);
    }
    require(arc_.back() > 0, "colon: degenerate centerline");

    // Parallel-transported frames per segment.
    const int segs = n_segments();
    tangents_.resize(segs);
    normals_.resize(segs);
    binormals_.resize(segs);
    max_curvature_ = 0.0;
    for (int j = 0; j < segs; ++j) tangents_[j] = (points_[j + 1] - points_[j]).normalized();
    Eigen::Vector3d ref = std::abs(tangents_[0].x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
    normals_[0] = (ref - ref.dot(tangents_[0]) * tangents_[0]).normalized();
    for (int j = 1; j < segs; ++j) {
      const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(tangents_[j - 1], tangents_[j]);
      Eigen::Vector3d nrm = q * normals_[j - 1];
      normals_[j] = (nrm - nrm.dot(tangents_[j]) * tangents_[j]).normalized();
      const double turn = std::acos(std::clamp(tangents_[j - 1].dot(tangents_[j]), -1.0, 1.0));
      const double seg = 0.5 * ((arc_[j + 1] - arc_[j]) + (arc_[j] - arc_[j - 1]));
      if (seg > 0) max_curvature_ = std::max(max_curvature_, turn / seg);
    }
    for (int j = 0; j < segs; ++j) binormals_[j] = tangents_[j].cross(normals_[j]);
  }

  ColonSpec spec_;
  std::vector<Eigen::Vector3d> points_;
  std::vector<double> arc_;
  std::vector<Eigen::Vector3d> tangents_, normals_, binormals_;
  double min_segment_ = 0.0;
  double max_curvature_ = 0.0;
  double lipschitz_ = 1.0;
};

}  // namespace toder::synthcolon
