#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "toder/core/manifest.hpp"
#include "toder/models/tensor.hpp"

namespace toder::train {

/// Conversions between library images and network tensors.
inline nn::Tensor tensor_from_rgb(const RgbImage& img) {
  nn::Tensor t(nn::Shape{1, 3, img.rows(), img.cols()});
  for (int c = 0; c < 3; ++c) {
    float* dst = t.channel(0, c);
    for (int r = 0; r < img.rows(); ++r)
      for (int x = 0; x < img.cols(); ++x) *dst++ = img.channels[c](r, x);
  }
  return t;
}

inline RgbImage rgb_from_tensor(const nn::Tensor& t, int n = 0) {
  RgbImage img(3, t.shape.h, t.shape.w);
  for (int c = 0; c < 3; ++c) {
    const float* src = t.channel(n, c);
    for (int r = 0; r < t.shape.h; ++r)
      for (int x = 0; x < t.shape.w; ++x) img.channels[c](r, x) = *src++;
  }
  return img;
}

inline DepthMap depth_from_tensor(const nn::Tensor& t, int n = 0) {
  Plane<double> v(t.shape.h, t.shape.w);
  const float* src = t.channel(n, 0);
  for (int r = 0; r < t.shape.h; ++r)
    for (int x = 0; x < t.shape.w; ++x) v(r, x) = *src++;
  return DepthMap(std::move(v));
}

inline Plane<double> plane_from_tensor(const nn::Tensor& t, int n, int c) {
  Plane<double> v(t.shape.h, t.shape.w);
  const float* src = t.channel(n, c);
  for (int r = 0; r < t.shape.h; ++r)
    for (int x = 0; x < t.shape.w; ++x) v(r, x) = *src++;
  return v;
}

/// One domain's frames held in memory as network-ready tensors.
struct DomainData {
  std::string name;
  StyleTag style = StyleTag::A;
  CameraIntrinsics intrinsics;
  std::vector<double> timestamps;
  std::vector<nn::Tensor> images;       // (1,3,H,W)
  std::vector<nn::Tensor> depths;       // (1,1,H,W), empty without ground truth
  std::vector<nn::Tensor> depth_masks;  // 1 where the depth is valid
  std::vector<Pose> poses;              // empty without a trajectory

  [[nodiscard]] size_t size() const { return images.size(); }
  [[nodiscard]] bool has_depth() const { return !depths.empty(); }
  [[nodiscard]] bool has_poses() const { return !poses.empty(); }

  [[nodiscard]] bool temporally_ordered() const {
    for (size_t i = 1; i < timestamps.size(); ++i)
      if (!(timestamps[i] > timestamps[i - 1])) return false;
    return true;
  }

  /// Stacks the listed images (or depths) into one batch tensor.
  [[nodiscard]] nn::Tensor batch(const std::vector<nn::Tensor>& source, const std::vector<size_t>& idx) const {
    std::vector<nn::Tensor> parts;
    parts.reserve(idx.size());
    for (size_t i : idx) parts.push_back(source.at(i));
    return nn::stack(parts);
  }
};

struct LoadOptions {
  bool depth = true;
  bool poses = true;
};

/// Reads a dataset split. Depth and poses are loaded only when the split provides them and
/// they are requested; the caller checks for what it needs.
inline DomainData load_domain(const DatasetManifest& m, const LoadOptions& opt = {}) {
  require(!m.frames.empty(), "dataset '" + m.name + "' has no frames");
  DomainData d;
  d.name = m.name.empty() ? m.root.filename().string() : m.name;
  d.style = m.style;
  d.intrinsics = m.intrinsics;
  bool all_depth = opt.depth;
  for (const auto& f : m.frames) all_depth = all_depth && !f.depth.empty();
  for (size_t i = 0; i < m.frames.size(); ++i) {
    const Frame f = load_frame(m, i);
    if (f.rgb.rows() != m.intrinsics.height || f.rgb.cols() != m.intrinsics.width)
      throw ValidationError(d.name + ": frame " + std::to_string(i) + " does not match the manifest image size");
    d.timestamps.push_back(f.timestamp);
    d.images.push_back(tensor_from_rgb(f.rgb));
    if (all_depth) {
      const DepthMap depth = load_depth(m, i);
      nn::Tensor t(nn::Shape{1, 1, depth.rows(), depth.cols()}), mask(t.shape);
      for (int r = 0; r < depth.rows(); ++r)
        for (int c = 0; c < depth.cols(); ++c) {
          const bool ok = depth.valid(r, c);
          t.at(0, 0, r, c) = ok ? static_cast<float>(depth.values(r, c)) : 0.0f;
          mask.at(0, 0, r, c) = ok ? 1.0f : 0.0f;
        }
      d.depths.push_back(std::move(t));
      d.depth_masks.push_back(std::move(mask));
    }
  }
  if (opt.poses && !m.trajectory.empty() && std::filesystem::exists(m.path_of(m.trajectory))) {
    const auto traj = load_trajectory(m);
    if (traj.size() == m.frames.size()) {
      for (size_t i = 0; i < traj.size(); ++i) {
        if (std::abs(traj[i].timestamp - m.frames[i].timestamp) > 1e-6)
          throw ValidationError(d.name + ": trajectory timestamp " + std::to_string(traj[i].timestamp) +
                                " does not match frame " + std::to_string(i));
        d.poses.push_back(traj[i].pose);
      }
    }
  }
  return d;
}

}  // namespace toder::train
