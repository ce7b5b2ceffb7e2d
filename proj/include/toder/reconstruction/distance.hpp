#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "toder/core/parallel.hpp"
#include "toder/reconstruction/mesh.hpp"

namespace toder::recon {

/// Closest point on triangle abc to p (region classification over the Voronoi regions of the
/// vertices, edges and face).
inline Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                                 const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = va + vb + vc;
  if (!(std::abs(denom) > 0)) {
    // Degenerate triangle: fall back to its edges.
    auto on_segment = [&](const Eigen::Vector3d& s, const Eigen::Vector3d& e) {
      const Eigen::Vector3d d = e - s;
      const double len2 = d.squaredNorm();
      const double t = len2 > 0 ? std::clamp((p - s).dot(d) / len2, 0.0, 1.0) : 0.0;
      return Eigen::Vector3d(s + t * d);
    };
    Eigen::Vector3d best = on_segment(a, b);
    for (const Eigen::Vector3d& q : {on_segment(b, c), on_segment(c, a)})
      if ((q - p).squaredNorm() < (best - p).squaredNorm()) best = q;
    return best;
  }
  const double v = vb / denom, w = vc / denom;
  return a + v * ab + w * ac;
}

inline double point_triangle_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                      const Eigen::Vector3d& c) {
  return (closest_point_on_triangle(p, a, b, c) - p).norm();
}

/// Bounding-volume hierarchy over a mesh's triangles for exact nearest-surface queries.
class TriangleTree {
 public:
  explicit TriangleTree(const TriangleMesh& mesh) : mesh_(mesh) {
    mesh.validate();
    const int n = static_cast<int>(mesh.triangles.size());
    order_.resize(static_cast<size_t>(n));
    std::iota(order_.begin(), order_.end(), 0);
    centroid_.reserve(static_cast<size_t>(n));
    for (const auto& t : mesh.triangles)
      centroid_.push_back((mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0);
    if (n > 0) build(0, n);
  }

  /// Distance from p to the nearest triangle.
  [[nodiscard]] double distance(const Eigen::Vector3d& p) const {
    require(!nodes_.empty(), "triangle tree: mesh has no triangles");
    double best2 = std::numeric_limits<double>::infinity();
    std::vector<int> stack{0};
    while (!stack.empty()) {
      const Node& node = nodes_[static_cast<size_t>(stack.back())];
      stack.pop_back();
      if (box_distance2(node, p) > best2) continue;
      if (node.count > 0) {
        for (int i = node.first; i < node.first + node.count; ++i) {
          const auto& t = mesh_.triangles[static_cast<size_t>(order_[static_cast<size_t>(i)])];
          const double d2 = (closest_point_on_triangle(p, mesh_.vertices[t[0]], mesh_.vertices[t[1]],
                                                       mesh_.vertices[t[2]]) - p).squaredNorm();
          best2 = std::min(best2, d2);
        }
        continue;
      }
      // Visit the nearer child first.
      const double dl = box_distance2(nodes_[static_cast<size_t>(node.left)], p);
      const double dr = box_distance2(nodes_[static_cast<size_t>(node.right)], p);
      if (dl < dr) {
        stack.push_back(node.right);
        stack.push_back(node.left);
      } else {
        stack.push_back(node.left);
        stack.push_back(node.right);
      }
    }
    return std::sqrt(best2);
  }

 private:
  static constexpr int kLeafSize = 4;

  struct Node {
    Eigen::Vector3d lo, hi;
    int left = -1, right = -1, first = 0, count = 0;
  };

  static double box_distance2(const Node& n, const Eigen::Vector3d& p) {
    const Eigen::Vector3d d = (n.lo - p).cwiseMax(p - n.hi).cwiseMax(0.0);
    return d.squaredNorm();
  }

  int build(int lo, int hi) {
    Node node;
    node.lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    node.hi = -node.lo;
    for (int i = lo; i < hi; ++i) {
      const auto& t = mesh_.triangles[static_cast<size_t>(order_[static_cast<size_t>(i)])];
      for (int v : t) {
        node.lo = node.lo.cwiseMin(mesh_.vertices[static_cast<size_t>(v)]);
        node.hi = node.hi.cwiseMax(mesh_.vertices[static_cast<size_t>(v)]);
      }
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (hi - lo <= kLeafSize) {
      nodes_[static_cast<size_t>(id)].first = lo;
      nodes_[static_cast<size_t>(id)].count = hi - lo;
      return id;
    }
    int axis = 0;
    (node.hi - node.lo).maxCoeff(&axis);
    const int mid = (lo + hi) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi, [&](int a, int b) {
      const double ca = centroid_[static_cast<size_t>(a)][axis], cb = centroid_[static_cast<size_t>(b)][axis];
      return ca < cb || (ca == cb && a < b);
    });
    const int l = build(lo, mid);
    const int r = build(mid, hi);
    nodes_[static_cast<size_t>(id)].left = l;
    nodes_[static_cast<size_t>(id)].right = r;
    return id;
  }

  const TriangleMesh& mesh_;
  std::vector<int> order_;
  std::vector<Eigen::Vector3d> centroid_;
  std::vector<Node> nodes_;
};

struct ReconMetrics {
  double mean = 0;
  double std = 0;
  size_t n_points = 0;
};

/// Per-point distances from a cloud to the nearest triangle.
inline std::vector<double> cloud_mesh_distances(const PointCloud& cloud, const TriangleMesh& mesh) {
  require(!cloud.empty(), "cloud_mesh_distance: empty cloud");
  require(!mesh.empty(), "cloud_mesh_distance: mesh has no triangles");
  const TriangleTree tree(mesh);
  std::vector<double> d(cloud.size());
  parallel_for(static_cast<int>(cloud.size()),
               [&](int i) { d[static_cast<size_t>(i)] = tree.distance(cloud.points[static_cast<size_t>(i)]); });
  return d;
}

/// Mean and (population) standard deviation of the cloud-to-mesh distances.
inline ReconMetrics summarize_distances(const std::vector<double>& d) {
  ReconMetrics m;
  m.n_points = d.size();
  if (d.empty()) return m;
  const double n = static_cast<double>(d.size());
  m.mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0;
  for (double v : d) ss += (v - m.mean) * (v - m.mean);
  m.std = std::sqrt(ss / n);
  return m;
}

inline ReconMetrics cloud_mesh_distance(const PointCloud& cloud, const TriangleMesh& mesh) {
  return summarize_distances(cloud_mesh_distances(cloud, mesh));
}

}  // namespace toder::recon
