#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "toder/core/image_io.hpp"
#include "toder/core/kvfile.hpp"
#include "toder/core/tum.hpp"
#include "toder/core/types.hpp"

namespace toder {

enum class StyleTag { A, B, Target };

inline std::string to_string(StyleTag s) {
  switch (s) {
    case StyleTag::A: return "A";
    case StyleTag::B: return "B";
    case StyleTag::Target: return "target";
  }
  return "?";
}

inline StyleTag style_tag_from_string(const std::string& s) {
  if (s == "A") return StyleTag::A;
  if (s == "B") return StyleTag::B;
  if (s == "target") return StyleTag::Target;
  throw ValidationError("unknown style tag '" + s + "' (expected A, B or target)");
}

struct ManifestFrame {
  double timestamp = 0.0;
  std::string rgb;    // relative to root
  std::string depth;  // relative to root; empty when the frame has no ground truth
};

/// Dataset description stored as `<root>/manifest`: key/value header plus one
/// `frame <timestamp> <rgb> <depth|->` row per image.
struct DatasetManifest {
  std::filesystem::path root;
  CameraIntrinsics intrinsics;
  int depth_scale = kDefaultDepthScale;
  std::vector<ManifestFrame> frames;
  std::string trajectory = "groundtruth.txt";
  std::string mesh;  // optional ground-truth surface, PLY
  StyleTag style = StyleTag::A;
  std::string name;

  [[nodiscard]] bool has_depth() const {
    for (const auto& f : frames)
      if (f.depth.empty()) return false;
    return !frames.empty();
  }
  [[nodiscard]] std::filesystem::path path_of(const std::string& rel) const { return root / rel; }
};

inline constexpr const char* kManifestFileName = "manifest";

inline void save_manifest(const DatasetManifest& m) {
  const auto path = m.root / kManifestFileName;
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path.string());
  out << "# toder dataset manifest\n";
  out << std::setprecision(17);
  out << "version = 1\n";
  out << "name = " << m.name << "\n";
  out << "style = " << to_string(m.style) << "\n";
  out << "depth_scale = " << m.depth_scale << "\n";
  const auto& k = m.intrinsics;
  out << "fx = " << k.fx << "\nfy = " << k.fy << "\ncx = " << k.cx << "\ncy = " << k.cy << "\n";
  out << "width = " << k.width << "\nheight = " << k.height << "\nk1 = " << k.k1 << "\nk2 = " << k.k2 << "\n";
  out << "trajectory = " << m.trajectory << "\n";
  if (!m.mesh.empty()) out << "mesh = " << m.mesh << "\n";
  out << "frames = " << m.frames.size() << "\n";
  out << "# frame timestamp rgb depth\n";
  for (const auto& f : m.frames) {
    out << "frame " << f.timestamp << ' ' << f.rgb << ' ' << (f.depth.empty() ? "-" : f.depth) << "\n";
  }
  if (!out) throw Error("write failed for " + path.string());
}

/// Loads and validates a manifest; `path` may be the manifest file or its directory.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  const fs::path file = fs::is_directory(path) ? path / kManifestFileName : path;
  const KeyValueFile kv = KeyValueFile::load(file);
  DatasetManifest m;
  m.root = file.parent_path();
  m.name = kv.get_string("name", m.root.filename().string());
  m.style = style_tag_from_string(kv.get_string("style", "A"));
  m.depth_scale = kv.get<int>("depth_scale", kDefaultDepthScale);
  require(m.depth_scale > 0, file.string() + ": depth_scale must be positive");
  auto& k = m.intrinsics;
  k.fx = kv.require<double>("fx");
  k.fy = kv.require<double>("fy");
  k.cx = kv.require<double>("cx");
  k.cy = kv.require<double>("cy");
  k.width = kv.require<int>("width");
  k.height = kv.require<int>("height");
  k.k1 = kv.get<double>("k1", 0.0);
  k.k2 = kv.get<double>("k2", 0.0);
  k.validate();
  m.trajectory = kv.get_string("trajectory", "groundtruth.txt");
  m.mesh = kv.get_string("mesh", "");
  for (const auto& row : kv.rows()) {
    std::istringstream in(row.text);
    std::string tag, depth;
    ManifestFrame f;
    if (!(in >> tag >> f.timestamp >> f.rgb >> depth) || tag != "frame") {
      throw ParseError(file.string() + ":" + std::to_string(row.line) + ": malformed frame row");
    }
    f.depth = depth == "-" ? "" : depth;
    m.frames.push_back(f);
  }
  if (m.frames.empty()) throw ValidationError(file.string() + ": manifest lists no frames");
  if (kv.contains("frames") && kv.require<size_t>("frames") != m.frames.size()) {
    throw ValidationError(file.string() + ": frame count does not match the frame table");
  }
  auto check = [&](const std::string& rel) {
    if (!fs::exists(m.root / rel)) throw ValidationError(file.string() + ": listed path does not exist: " + rel);
  };
  for (const auto& f : m.frames) {
    check(f.rgb);
    if (!f.depth.empty()) check(f.depth);
  }
  check(m.trajectory);
  if (!m.mesh.empty()) check(m.mesh);
  return m;
}

inline Frame load_frame(const DatasetManifest& m, size_t i) {
  Frame f;
  f.rgb = read_rgb_png(m.path_of(m.frames.at(i).rgb));
  f.timestamp = m.frames[i].timestamp;
  return f;
}

inline DepthMap load_depth(const DatasetManifest& m, size_t i) {
  const auto& f = m.frames.at(i);
  if (f.depth.empty()) throw ValidationError(m.name + ": frame " + std::to_string(i) + " has no depth");
  return read_depth_png(m.path_of(f.depth), m.depth_scale);
}

inline std::vector<TimedPose> load_trajectory(const DatasetManifest& m) {
  return read_tum_trajectory(m.path_of(m.trajectory));
}

}  // namespace toder
