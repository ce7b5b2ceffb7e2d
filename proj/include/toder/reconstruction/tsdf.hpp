#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "toder/core/parallel.hpp"
#include "toder/core/types.hpp"
#include "toder/reconstruction/mesh.hpp"

namespace toder::recon {

/// Regular voxel grid of truncated signed distances (positive in front of the surface).
struct TsdfVolume {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();  // center of voxel (0,0,0)
  double voxel_size = 0.01;
  Eigen::Vector3i dims = Eigen::Vector3i::Zero();
  double truncation = 0.04;
  std::vector<double> distance;
  std::vector<double> weight;

  TsdfVolume() = default;
  TsdfVolume(const Eigen::Vector3d& origin_, double voxel, const Eigen::Vector3i& dims_, double trunc)
      : origin(origin_), voxel_size(voxel), dims(dims_), truncation(trunc) {
    require(voxel > 0, "tsdf: voxel size must be positive");
    require(trunc > 0, "tsdf: truncation must be positive");
    require(dims.minCoeff() >= 2, "tsdf: grid needs at least 2 voxels per axis");
    require(static_cast<double>(dims.x()) * dims.y() * dims.z() < 2e8, "tsdf: grid too large; raise the voxel size");
    distance.assign(size(), trunc);
    weight.assign(size(), 0.0);
  }

  /// Grid covering an axis-aligned box (corners inclusive).
  static TsdfVolume covering(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, double voxel, double trunc) {
    const Eigen::Vector3d extent = hi - lo;
    Eigen::Vector3i n;
    for (int a = 0; a < 3; ++a) n[a] = std::max(2, static_cast<int>(std::ceil(extent[a] / voxel)) + 1);
    return {lo, voxel, n, trunc};
  }

  [[nodiscard]] size_t size() const {
    return static_cast<size_t>(dims.x()) * static_cast<size_t>(dims.y()) * static_cast<size_t>(dims.z());
  }
  [[nodiscard]] size_t index(int i, int j, int k) const {
    return (static_cast<size_t>(k) * static_cast<size_t>(dims.y()) + static_cast<size_t>(j)) *
               static_cast<size_t>(dims.x()) + static_cast<size_t>(i);
  }
  [[nodiscard]] Eigen::Vector3d center(int i, int j, int k) const {
    return origin + voxel_size * Eigen::Vector3d(i, j, k);
  }
};

/// Projective update with one depth frame. Voxels outside the frustum, with no valid depth at
/// their pixel, or more than one truncation distance behind the surface are left alone.
inline void tsdf_integrate(TsdfVolume& vol, const DepthMap& depth, const Pose& camera_to_world,
                           const CameraIntrinsics& k) {
  require(depth.rows() == k.height && depth.cols() == k.width, "tsdf: depth map does not match the intrinsics");
  const Pose world_to_camera = camera_to_world.inverse();
  const Eigen::Matrix3d r = world_to_camera.rotation_matrix();
  const Eigen::Vector3d t = world_to_camera.translation;
  parallel_for(vol.dims.z(), [&](int kz) {
    for (int j = 0; j < vol.dims.y(); ++j)
      for (int i = 0; i < vol.dims.x(); ++i) {
        const Eigen::Vector3d p = r * vol.center(i, j, kz) + t;
        if (p.z() <= 0) continue;
        const long u = std::lround(k.fx * p.x() / p.z() + k.cx);
        const long v = std::lround(k.fy * p.y() / p.z() + k.cy);
        if (u < 0 || v < 0 || u >= k.width || v >= k.height) continue;
        if (!depth.valid(v, u)) continue;
        const double sdf = depth.values(v, u) - p.z();
        if (sdf < -vol.truncation) continue;
        const double d = std::min(sdf, vol.truncation);
        const size_t idx = vol.index(i, j, kz);
        const double w = vol.weight[idx];
        vol.distance[idx] = (vol.distance[idx] * w + d) / (w + 1.0);
        vol.weight[idx] = w + 1.0;
      }
  });
}

namespace detail {

// Kuhn subdivision of a cube into six tetrahedra around the (0,0,0)-(1,1,1) diagonal.
// Neighboring cubes split shared faces along the same diagonal, so the surface is crack-free.
inline constexpr std::array<std::array<int, 3>, 8> kCorner{
    {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};
inline constexpr std::array<std::array<int, 4>, 6> kTetra{
    {{0, 5, 1, 6}, {0, 1, 2, 6}, {0, 2, 3, 6}, {0, 3, 7, 6}, {0, 7, 4, 6}, {0, 4, 5, 6}}};

}  // namespace detail

/// Zero level set of the observed part of the volume. A cell is meshed only when all eight
/// corners have been observed and none sits at the truncation limit.
inline TriangleMesh extract_mesh(const TsdfVolume& vol, double min_area = 1e-12) {
  TriangleMesh mesh;
  std::unordered_map<uint64_t, int> edge_vertex;
  const double limit = vol.truncation * (1.0 - 1e-9);

  auto node = [&](int i, int j, int k) { return static_cast<uint64_t>(vol.index(i, j, k)); };
  for (int kz = 0; kz + 1 < vol.dims.z(); ++kz)
    for (int j = 0; j + 1 < vol.dims.y(); ++j)
      for (int i = 0; i + 1 < vol.dims.x(); ++i) {
        std::array<uint64_t, 8> id{};
        std::array<double, 8> s{};
        std::array<Eigen::Vector3d, 8> pos;
        bool usable = true, neg = false, posv = false;
        for (int c = 0; c < 8 && usable; ++c) {
          const auto& o = detail::kCorner[c];
          id[c] = node(i + o[0], j + o[1], kz + o[2]);
          s[c] = vol.distance[id[c]];
          usable = vol.weight[id[c]] > 0 && std::abs(s[c]) < limit;
          pos[c] = vol.center(i + o[0], j + o[1], kz + o[2]);
          (s[c] < 0 ? neg : posv) = true;
        }
        if (!usable || !neg || !posv) continue;

        auto vertex_on = [&](int a, int b) {
          const uint64_t lo = std::min(id[a], id[b]), hi = std::max(id[a], id[b]);
          const uint64_t key = lo * static_cast<uint64_t>(vol.size()) + hi;
          if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
          // Interpolate from the lower node so a shared edge gives the same point in every cell.
          const int from = id[a] == lo ? a : b, to = from == a ? b : a;
          const double f = s[from] / (s[from] - s[to]);
          mesh.vertices.push_back(pos[from] + f * (pos[to] - pos[from]));
          const int v = static_cast<int>(mesh.vertices.size()) - 1;
          edge_vertex.emplace(key, v);
          return v;
        };

        for (const auto& tet : detail::kTetra) {
          std::array<int, 4> in{}, out{};
          int ni = 0, no = 0;
          for (int c : tet) (s[c] < 0 ? in[ni++] : out[no++]) = c;
          if (ni == 0 || no == 0) continue;
          Eigen::Vector3d cin = Eigen::Vector3d::Zero(), cout = Eigen::Vector3d::Zero();
          for (int q = 0; q < ni; ++q) cin += pos[in[q]] / ni;
          for (int q = 0; q < no; ++q) cout += pos[out[q]] / no;
          const Eigen::Vector3d outward = cout - cin;

          auto emit = [&](int a, int b, int c) {
            if (a == b || b == c || a == c) return;
            const auto& va = mesh.vertices[a];
            const Eigen::Vector3d n = (mesh.vertices[b] - va).cross(mesh.vertices[c] - va);
            if (0.5 * n.norm() <= min_area) return;
            if (n.dot(outward) < 0) std::swap(b, c);
            mesh.triangles.push_back({a, b, c});
          };
          if (ni == 1 || no == 1) {
            const int apex = ni == 1 ? in[0] : out[0];
            const auto& base = ni == 1 ? out : in;
            emit(vertex_on(apex, base[0]), vertex_on(apex, base[1]), vertex_on(apex, base[2]));
          } else {
            const int a = in[0], b = in[1], c = out[0], d = out[1];
            const int ac = vertex_on(a, c), ad = vertex_on(a, d), bd = vertex_on(b, d), bc = vertex_on(b, c);
            emit(ac, ad, bd);
            emit(ac, bd, bc);
          }
        }
      }
  return mesh;
}

}  // namespace toder::recon
