#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "toder/core/error.hpp"
#include "toder/core/kvfile.hpp"
#include "toder/core/types.hpp"

namespace toder::recon {

struct PointCloud {
  std::vector<Eigen::Vector3d> points;

  [[nodiscard]] size_t size() const { return points.size(); }
  [[nodiscard]] bool empty() const { return points.empty(); }
};

struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;

  [[nodiscard]] bool empty() const { return triangles.empty(); }

  void validate() const {
    const int n = static_cast<int>(vertices.size());
    for (const auto& t : triangles)
      for (int i : t)
        if (i < 0 || i >= n) throw ValidationError("mesh: triangle index out of range");
    for (const auto& v : vertices)
      if (!v.allFinite()) throw ValidationError("mesh: non-finite vertex");
  }

  [[nodiscard]] double triangle_area(size_t i) const {
    const auto& t = triangles[i];
    return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
  }
};

inline PointCloud transformed(const PointCloud& cloud, const Pose& pose) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(pose * p);
  return out;
}

inline TriangleMesh transformed(const TriangleMesh& mesh, const Pose& pose) {
  TriangleMesh out = mesh;
  for (auto& v : out.vertices) v = pose * v;
  return out;
}

inline PointCloud vertices_as_cloud(const TriangleMesh& mesh) { return PointCloud{mesh.vertices}; }

/// ASCII PLY with vertex positions and triangular faces.
inline void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write mesh " + path.string());
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  out << std::setprecision(9);
  for (const auto& v : mesh.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

inline TriangleMesh read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open mesh " + path.string());
  std::string line;
  std::getline(in, line);
  if (trim(line) != "ply") throw FormatError(path.string() + ": not a PLY file");
  size_t n_vertices = 0, n_faces = 0;
  int vertex_props = 0;
  std::string current;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw FormatError(path.string() + ": only ASCII PLY is supported");
    } else if (word == "element") {
      ls >> current;
      if (current == "vertex") ls >> n_vertices;
      if (current == "face") ls >> n_faces;
    } else if (word == "property" && current == "vertex") {
      ++vertex_props;
    } else if (word == "end_header") {
      break;
    }
  }
  if (vertex_props < 3) throw FormatError(path.string() + ": vertices need x y z");
  TriangleMesh mesh;
  mesh.vertices.resize(n_vertices);
  for (auto& v : mesh.vertices) {
    if (!std::getline(in, line)) throw FormatError(path.string() + ": truncated vertex list");
    std::istringstream ls(line);
    if (!(ls >> v.x() >> v.y() >> v.z())) throw FormatError(path.string() + ": malformed vertex");
  }
  mesh.triangles.reserve(n_faces);
  for (size_t i = 0; i < n_faces; ++i) {
    if (!std::getline(in, line)) throw FormatError(path.string() + ": truncated face list");
    std::istringstream ls(line);
    int count = 0;
    ls >> count;
    std::vector<int> idx(static_cast<size_t>(std::max(count, 0)));
    for (int& k : idx) ls >> k;
    if (!ls || count < 3) throw FormatError(path.string() + ": malformed face");
    for (int k = 1; k + 1 < count; ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
  }
  mesh.validate();
  return mesh;
}

}  // namespace toder::recon
