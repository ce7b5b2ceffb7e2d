#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "toder/core/image_io.hpp"
#include "toder/core/manifest.hpp"
#include "toder/core/tum.hpp"
#include "toder/reconstruction/mesh.hpp"
#include "toder/synthcolon/colon.hpp"
#include "toder/synthcolon/render.hpp"
#include "toder/synthcolon/trajectory.hpp"

namespace toder::synthcolon {

struct DatasetRequest {
  ColonSpec colon;
  TextureStyle style;
  StyleTag tag = StyleTag::A;
  RenderConfig render;
  TrajectoryOptions trajectory;
  int n_train = 200;
  int n_test_sets = 4;
  int n_test = 50;
  std::filesystem::path out_dir;
  uint64_t seed = 0;
  int depth_scale = kDefaultDepthScale;
};

/// Ground-truth surface of the tube: the modulated circle swept along the centerline.
inline recon::TriangleMesh tube_mesh(const ColonSdf& colon, double arc_step, int n_around) {
  recon::TriangleMesh mesh;
  const int n_rings = std::max(2, static_cast<int>(std::ceil(colon.length() / arc_step)) + 1);
  for (int i = 0; i < n_rings; ++i) {
    const double s = colon.length() * i / (n_rings - 1);
    for (int j = 0; j < n_around; ++j) {
      mesh.vertices.push_back(colon.surface_point(s, 2.0 * std::numbers::pi * j / n_around));
    }
  }
  for (int i = 0; i + 1 < n_rings; ++i) {
    for (int j = 0; j < n_around; ++j) {
      const int a = i * n_around + j, b = i * n_around + (j + 1) % n_around;
      const int c = a + n_around, d = b + n_around;
      mesh.triangles.push_back({a, b, d});
      mesh.triangles.push_back({a, d, c});
    }
  }
  return mesh;
}

/// Geometry of split `index`: the training split uses the spec as given, each test
/// split bends the control points differently so trajectories never overlap.
inline ColonSpec split_colon(const ColonSpec& base, int index, uint64_t seed) {
  if (index == 0) return base;
  ColonSpec s = base;
  Rng rng = keyed_rng(seed, "synthcolon", "split-geometry", static_cast<uint64_t>(index));
  for (size_t i = 1; i < s.control_points.size(); ++i) {
    s.control_points[i].x() += uniform(rng, -0.6, 0.6) * base.radius;
    s.control_points[i].y() += uniform(rng, -0.6, 0.6) * base.radius;
  }
  s.seed = base.seed + 7919ull * static_cast<uint64_t>(index);
  return s;
}

inline std::string split_name(int index) {
  if (index == 0) return "train";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "test_%02d", index - 1);
  return buf;
}

namespace detail {
inline std::string frame_file(const char* dir, int i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s/%06d.png", dir, i);
  return buf;
}
}  // namespace detail

/// Renders one split into `dir` in TUM layout and returns its manifest.
inline DatasetManifest write_split(const ColonSpec& spec, const DatasetRequest& req, const std::string& name,
                                   int n_frames, uint64_t trajectory_seed) {
  namespace fs = std::filesystem;
  const fs::path dir = req.out_dir / name;
  try {
    fs::create_directories(dir / "rgb");
    fs::create_directories(dir / "depth");
  } catch (const fs::filesystem_error& e) {
    throw Error("cannot create dataset directory " + dir.string() + ": " + e.what());
  }
  const ColonSdf colon(spec);
  const auto trajectory = sample_trajectory(colon, n_frames, trajectory_seed, req.trajectory);

  DatasetManifest m;
  m.root = dir;
  m.name = name;
  m.style = req.tag;
  m.intrinsics = req.render.intrinsics;
  m.depth_scale = req.depth_scale;
  m.trajectory = "groundtruth.txt";
  m.mesh = "mesh.ply";
  for (int i = 0; i < n_frames; ++i) {
    std::optional<Pose> next;
    if (i + 1 < n_frames) next = trajectory[i + 1].pose;
    const FrameSample s = render_frame(colon, req.style, req.render, trajectory[i].pose, next);
    ManifestFrame f{trajectory[i].timestamp, detail::frame_file("rgb", i), detail::frame_file("depth", i)};
    write_rgb_png(s.frame.rgb, dir / f.rgb);
    write_depth_png(s.depth, dir / f.depth, req.depth_scale);
    m.frames.push_back(f);
  }
  write_tum_trajectory(trajectory, dir / m.trajectory);
  recon::write_ply(tube_mesh(colon, spec.radius / 8.0, 48), dir / m.mesh);
  save_manifest(m);
  return m;
}

inline constexpr const char* kIndexFileName = "index";

/// Writes the training split plus `n_test_sets` test splits under `out_dir`, and an
/// `index` file naming them. Returns the training manifest.
inline DatasetManifest generate_dataset(const DatasetRequest& req) {
  req.colon.validate();
  req.style.validate();
  req.render.validate(req.colon.radius);
  require(req.n_train >= 2, "dataset: n_train must be >= 2");
  require(req.n_test_sets >= 0, "dataset: n_test_sets must be >= 0");
  require(req.n_test_sets == 0 || req.n_test >= 2, "dataset: n_test must be >= 2");
  std::filesystem::create_directories(req.out_dir);

  std::vector<std::string> names;
  DatasetManifest train;
  for (int k = 0; k <= req.n_test_sets; ++k) {
    const std::string name = split_name(k);
    const ColonSpec spec = split_colon(req.colon, k, req.seed);
    const uint64_t traj_seed = keyed_rng(req.seed, "synthcolon", "split-trajectory", static_cast<uint64_t>(k))();
    DatasetManifest m = write_split(spec, req, name, k == 0 ? req.n_train : req.n_test, traj_seed);
    if (k == 0) train = m;
    names.push_back(name);
  }
  std::ofstream index(req.out_dir / kIndexFileName);
  if (!index) throw Error("cannot write " + (req.out_dir / kIndexFileName).string());
  index << "# dataset splits\n";
  for (const auto& n : names) index << "split " << n << "\n";
  return train;
}

/// Split manifests listed in a dataset's index, training split first.
inline std::vector<DatasetManifest> load_dataset_splits(const std::filesystem::path& out_dir) {
  const KeyValueFile kv = KeyValueFile::load(out_dir / kIndexFileName);
  std::vector<DatasetManifest> out;
  for (const auto& row : kv.rows()) {
    std::istringstream in(row.text);
    std::string tag, name;
    if (!(in >> tag >> name) || tag != "split") throw ParseError(kv.source() + ": malformed split row");
    out.push_back(load_manifest(out_dir / name));
  }
  if (out.empty()) throw ValidationError(out_dir.string() + ": dataset index lists no splits");
  return out;
}

}  // namespace toder::synthcolon
