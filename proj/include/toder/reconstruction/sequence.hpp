#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "toder/core/manifest.hpp"
#include "toder/core/rng.hpp"
#include "toder/reconstruction/distance.hpp"
#include "toder/reconstruction/registration.hpp"
#include "toder/reconstruction/tsdf.hpp"

namespace toder::recon {

enum class DepthSource { gt, model };
enum class PoseSource { gt, file };

inline std::string to_string(DepthSource s) { return s == DepthSource::gt ? "gt" : "model"; }
inline std::string to_string(PoseSource s) { return s == PoseSource::gt ? "gt" : "file"; }

inline DepthSource depth_source_from_string(const std::string& s) {
  if (s == "gt") return DepthSource::gt;
  if (s == "model") return DepthSource::model;
  throw ValidationError("unknown depth source '" + s + "' (expected gt or model)");
}

inline PoseSource pose_source_from_string(const std::string& s) {
  if (s == "gt") return PoseSource::gt;
  if (s == "file") return PoseSource::file;
  throw ValidationError("unknown pose source '" + s + "' (expected gt or file)");
}

struct ReconOptions {
  DepthSource depth_source = DepthSource::gt;
  PoseSource pose_source = PoseSource::gt;
  std::filesystem::path pose_file;  // TUM trajectory, for PoseSource::file
  /// 0 selects 1% of the diagonal of the observed scene's bounding box.
  double voxel_size = 0;
  double truncation_voxels = 4;
  /// Depths beyond this are not integrated (0 keeps all). Far walls seen at grazing angles
  /// cover many voxels per pixel and blur the surface.
  double max_depth = 0;
  int frame_stride = 1;
  /// Register the reconstruction to the ground-truth surface before measuring distances.
  bool register_to_gt = true;
  int reference_samples = 100000;
  int max_cloud_points = 50000;
  IcpOptions icp;
  uint64_t seed = 0;

  void validate() const {
    require(voxel_size >= 0, "recon.voxel_size must be >= 0");
    require(truncation_voxels >= 1, "recon.truncation_voxels must be >= 1");
    require(max_depth >= 0, "recon.max_depth must be >= 0");
    require(frame_stride >= 1, "recon.frame_stride must be >= 1");
    require(reference_samples >= 100 && max_cloud_points >= 100, "recon: sample counts must be >= 100");
    if (pose_source == PoseSource::file) require(!pose_file.empty(), "recon.pose_file is required for pose_source=file");
  }
};

using FrameDepthFn = std::function<DepthMap(const Frame&)>;

struct ReconResult {
  TriangleMesh mesh;
  double voxel_size = 0;
  double truncation = 0;
  size_t n_frames = 0;
  DepthSource depth_source = DepthSource::gt;
  PoseSource pose_source = PoseSource::gt;
  std::optional<ReconMetrics> metrics;  // against the ground-truth surface, when there is one
  std::optional<IcpResult> registration;
};

/// Poses for every frame of `m`, matched by timestamp.
inline std::vector<Pose> frame_poses(const DatasetManifest& m, const std::vector<TimedPose>& trajectory) {
  std::vector<TimedPose> sorted = trajectory;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  std::vector<Pose> out;
  out.reserve(m.frames.size());
  for (const auto& f : m.frames) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), f.timestamp - 1e-6,
                                     [](const TimedPose& p, double t) { return p.timestamp < t; });
    if (it == sorted.end() || std::abs(it->timestamp - f.timestamp) > 1e-6) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6f", f.timestamp);
      throw ValidationError("reconstruction: no pose for the frame at timestamp " + std::string(buf));
    }
    out.push_back(it->pose);
  }
  return out;
}

/// Area-weighted random points on a mesh, restricted to triangles touching a box.
inline PointCloud sample_surface(const TriangleMesh& mesh, int n, uint64_t seed, const Eigen::Vector3d& lo,
                                 const Eigen::Vector3d& hi) {
  std::vector<int> tris;
  std::vector<double> cdf;
  double total = 0;
  for (size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    Eigen::Vector3d tlo = mesh.vertices[t[0]], thi = tlo;
    for (int k = 1; k < 3; ++k) {
      tlo = tlo.cwiseMin(mesh.vertices[t[k]]);
      thi = thi.cwiseMax(mesh.vertices[t[k]]);
    }
    if ((tlo.array() > hi.array()).any() || (thi.array() < lo.array()).any()) continue;
    total += mesh.triangle_area(i);
    tris.push_back(static_cast<int>(i));
    cdf.push_back(total);
  }
  PointCloud out;
  if (tris.empty() || !(total > 0)) return out;
  Rng rng = keyed_rng(seed, "reconstruction", "surface-samples");
  out.points.reserve(static_cast<size_t>(n));
  for (int s = 0; s < n; ++s) {
    const double pick = uniform(rng, 0.0, total);
    const size_t k = std::min(cdf.size() - 1, static_cast<size_t>(std::upper_bound(cdf.begin(), cdf.end(), pick) - cdf.begin()));
    const auto& t = mesh.triangles[static_cast<size_t>(tris[k])];
    double a = uniform01(rng), b = uniform01(rng);
    if (a + b > 1) {
      a = 1 - a;
      b = 1 - b;
    }
    const auto& v0 = mesh.vertices[t[0]];
    out.points.push_back(v0 + a * (mesh.vertices[t[1]] - v0) + b * (mesh.vertices[t[2]] - v0));
  }
  return out;
}

/// Fuses a sequence into a TSDF, extracts the surface and, when the dataset carries a
/// ground-truth mesh, registers to it and measures cloud-to-mesh distances.
inline ReconResult reconstruct_sequence(const DatasetManifest& m, const ReconOptions& opt,
                                        const FrameDepthFn& model = {}) {
  opt.validate();
  require(!m.frames.empty(), "reconstruction: dataset has no frames");
  if (opt.depth_source == DepthSource::model && !model)
    throw ValidationError("reconstruction: depth_source=model needs a trained model");
  const auto trajectory =
      opt.pose_source == PoseSource::gt ? load_trajectory(m) : read_tum_trajectory(opt.pose_file);
  const std::vector<Pose> poses = frame_poses(m, trajectory);
  const CameraIntrinsics& k = m.intrinsics;

  std::vector<size_t> used;
  for (size_t i = 0; i < m.frames.size(); i += static_cast<size_t>(opt.frame_stride)) used.push_back(i);
  auto depth_of = [&](size_t i) {
    DepthMap d = opt.depth_source == DepthSource::gt ? load_depth(m, i) : model(load_frame(m, i));
    if (opt.max_depth > 0) d.valid = d.valid && (d.values <= opt.max_depth);
    return d;
  };

  // Model depths are computed once and kept; ground truth is cheap to reread.
  std::vector<DepthMap> cache;
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (size_t i : used) {
    DepthMap d = depth_of(i);
    require(d.rows() == k.height && d.cols() == k.width, "reconstruction: depth size does not match the intrinsics");
    for (int r = 0; r < d.rows(); ++r)
      for (int c = 0; c < d.cols(); ++c)
        if (d.valid(r, c)) {
          const double z = d.values(r, c);
          const Eigen::Vector3d p = poses[i] * Eigen::Vector3d((c - k.cx) / k.fx * z, (r - k.cy) / k.fy * z, z);
          lo = lo.cwiseMin(p);
          hi = hi.cwiseMax(p);
        }
    if (opt.depth_source == DepthSource::model) cache.push_back(std::move(d));
  }
  require(lo.allFinite(), "reconstruction: no valid depth in any frame");

  ReconResult res;
  res.depth_source = opt.depth_source;
  res.pose_source = opt.pose_source;
  res.n_frames = used.size();
  res.voxel_size = opt.voxel_size > 0 ? opt.voxel_size : 0.01 * (hi - lo).norm();
  res.truncation = opt.truncation_voxels * res.voxel_size;
  const Eigen::Vector3d margin = Eigen::Vector3d::Constant(2 * res.truncation);
  TsdfVolume vol = TsdfVolume::covering(lo - margin, hi + margin, res.voxel_size, res.truncation);
  for (size_t n = 0; n < used.size(); ++n)
    tsdf_integrate(vol, opt.depth_source == DepthSource::model ? cache[n] : depth_of(used[n]), poses[used[n]], k);
  res.mesh = extract_mesh(vol);

  if (m.mesh.empty() || !std::filesystem::exists(m.path_of(m.mesh)) || res.mesh.vertices.empty()) return res;
  const TriangleMesh gt = read_ply(m.path_of(m.mesh));
  PointCloud cloud;
  const size_t step = std::max<size_t>(1, res.mesh.vertices.size() / static_cast<size_t>(opt.max_cloud_points));
  for (size_t i = 0; i < res.mesh.vertices.size(); i += step) cloud.points.push_back(res.mesh.vertices[i]);
  Pose align = Pose::identity();
  if (opt.register_to_gt && cloud.size() >= 100) {
    const PointCloud reference = sample_surface(gt, opt.reference_samples, opt.seed, lo - margin, hi + margin);
    if (reference.size() >= 100) {
      res.registration = icp_register(cloud, reference, opt.icp);
      align = res.registration->cloud_to_reference;
    }
  }
  res.metrics = cloud_mesh_distance(transformed(vertices_as_cloud(res.mesh), align), gt);
  return res;
}

/// Reference comparison row, recorded for context only.
inline nlohmann::json recon_reference_baseline() { return {{"mean", 0.176}, {"std", 0.163}}; }

inline nlohmann::json to_json(const ReconResult& r) {
  nlohmann::json j{{"voxel_size", r.voxel_size},
                   {"truncation", r.truncation},
                   {"n_frames", r.n_frames},
                   {"depth_source", to_string(r.depth_source)},
                   {"pose_source", to_string(r.pose_source)},
                   {"n_vertices", r.mesh.vertices.size()},
                   {"n_triangles", r.mesh.triangles.size()},
                   {"reference_baseline", recon_reference_baseline()}};
  if (r.metrics) {
    j["mean"] = r.metrics->mean;
    j["std"] = r.metrics->std;
    j["n_points"] = r.metrics->n_points;
  } else {
    j["mean"] = nullptr;
    j["std"] = nullptr;
  }
  if (r.registration) {
    j["icp"] = {{"iterations", r.registration->iterations},
                {"rms", r.registration->rms},
                {"converged", r.registration->converged}};
  }
  return j;
}

}  // namespace toder::recon
