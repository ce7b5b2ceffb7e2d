#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Geometry>

#include "toder/core/parallel.hpp"
#include "toder/core/types.hpp"
#include "toder/reconstruction/mesh.hpp"

namespace toder::recon {

/// Exact nearest-neighbor search over a fixed point set.
class KdTree {
 public:
  explicit KdTree(std::vector<Eigen::Vector3d> points) : pts_(std::move(points)) {
    idx_.resize(pts_.size());
    std::iota(idx_.begin(), idx_.end(), 0);
    if (!pts_.empty()) root_ = build(0, static_cast<int>(idx_.size()));
  }

  [[nodiscard]] size_t size() const { return pts_.size(); }
  [[nodiscard]] const Eigen::Vector3d& point(int i) const { return pts_[static_cast<size_t>(i)]; }

  /// Index of the closest point and its squared distance. Ties resolve to the lower index.
  [[nodiscard]] std::pair<int, double> nearest(const Eigen::Vector3d& q) const {
    require(!pts_.empty(), "kd-tree: empty point set");
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    search(root_, q, best, best_d2);
    return {best, best_d2};
  }

 private:
  struct Node {
    int point = -1, axis = 0, left = -1, right = -1;
  };

  int build(int lo, int hi) {
    if (lo >= hi) return -1;
    Eigen::Vector3d mn = pts_[idx_[lo]], mx = mn;
    for (int i = lo + 1; i < hi; ++i) {
      mn = mn.cwiseMin(pts_[idx_[i]]);
      mx = mx.cwiseMax(pts_[idx_[i]]);
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    const int mid = (lo + hi) / 2;
    std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi, [&](int a, int b) {
      const double pa = pts_[a][axis], pb = pts_[b][axis];
      return pa < pb || (pa == pb && a < b);
    });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({idx_[mid], axis, -1, -1});
    const int l = build(lo, mid);
    const int r = build(mid + 1, hi);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void search(int n, const Eigen::Vector3d& q, int& best, double& best_d2) const {
    if (n < 0) return;
    const Node& node = nodes_[n];
    const Eigen::Vector3d& p = pts_[node.point];
    const double d2 = (p - q).squaredNorm();
    if (d2 < best_d2 || (d2 == best_d2 && node.point < best)) {
      best_d2 = d2;
      best = node.point;
    }
    const double diff = q[node.axis] - p[node.axis];
    const int near = diff < 0 ? node.left : node.right, far = diff < 0 ? node.right : node.left;
    search(near, q, best, best_d2);
    if (diff * diff <= best_d2) search(far, q, best, best_d2);
  }

  std::vector<Eigen::Vector3d> pts_;
  std::vector<int> idx_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

struct IcpOptions {
  int max_iterations = 100;
  /// Stop once the RMS residual changes by less than this between iterations.
  double rms_tolerance = 1e-6;
  /// Pairs farther apart are dropped; infinity keeps every pair.
  double max_pair_distance = std::numeric_limits<double>::infinity();
  int min_pairs = 10;
};

struct IcpResult {
  Pose cloud_to_reference;
  double rms = 0;
  int iterations = 0;
  bool converged = false;
  /// RMS of the nearest-neighbor residual before each update, then after the last one.
  std::vector<double> rms_history;
};

/// Point-to-point ICP with nearest-neighbor correspondences and a closed-form rigid fit per
/// iteration. Returns the transform taking `cloud` onto `reference`.
inline IcpResult icp_register(const PointCloud& cloud, const PointCloud& reference, const IcpOptions& opt = {},
                              const Pose& initial = Pose::identity()) {
  require(cloud.size() >= 100 && reference.size() >= 100, "icp: both clouds need at least 100 points");
  require(opt.max_iterations >= 1, "icp: max_iterations must be >= 1");
  const KdTree tree(reference.points);
  const int n = static_cast<int>(cloud.size());
  std::vector<int> match(static_cast<size_t>(n));
  std::vector<double> dist2(static_cast<size_t>(n));

  IcpResult res;
  res.cloud_to_reference = initial;
  auto correspond = [&](const Pose& pose, Eigen::Matrix3Xd* src, Eigen::Matrix3Xd* dst) {
    parallel_for(n, [&](int i) {
      const auto [j, d2] = tree.nearest(pose * cloud.points[static_cast<size_t>(i)]);
      match[static_cast<size_t>(i)] = j;
      dist2[static_cast<size_t>(i)] = d2;
    });
    const double max_d2 = opt.max_pair_distance * opt.max_pair_distance;
    int kept = 0;
    double sum = 0;
    for (int i = 0; i < n; ++i)
      if (dist2[static_cast<size_t>(i)] <= max_d2) {
        ++kept;
        sum += dist2[static_cast<size_t>(i)];
      }
    if (kept < opt.min_pairs)
      throw Error("icp: correspondence collapse, only " + std::to_string(kept) + " pairs within range");
    if (src) {
      src->resize(3, kept);
      dst->resize(3, kept);
      int c = 0;
      for (int i = 0; i < n; ++i)
        if (dist2[static_cast<size_t>(i)] <= max_d2) {
          src->col(c) = cloud.points[static_cast<size_t>(i)];
          dst->col(c) = tree.point(match[static_cast<size_t>(i)]);
          ++c;
        }
    }
    return std::sqrt(sum / kept);
  };

  Eigen::Matrix3Xd src, dst;
  double prev = correspond(res.cloud_to_reference, &src, &dst);
  res.rms_history.push_back(prev);
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Eigen::Matrix4d t = Eigen::umeyama(src, dst, false);
    const Pose next(Eigen::Matrix3d(t.topLeftCorner<3, 3>()), Eigen::Vector3d(t.topRightCorner<3, 1>()));
    const double rms = correspond(next, &src, &dst);
    res.cloud_to_reference = next;
    res.rms_history.push_back(rms);
    res.iterations = it + 1;
    if (std::abs(prev - rms) < opt.rms_tolerance) {
      res.converged = true;
      prev = rms;
      break;
    }
    prev = rms;
  }
  res.rms = prev;
  return res;
}

}  // namespace toder::recon
