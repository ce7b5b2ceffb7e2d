#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "toder/core/types.hpp"
#include "toder/evaluation/metrics.hpp"

namespace toder::recon {

/// How the two aligned maps are combined where both are valid.
enum class FuseMode { average, min, max, target_only };

inline std::string to_string(FuseMode m) {
  switch (m) {
    case FuseMode::average: return "average";
    case FuseMode::min: return "min";
    case FuseMode::max: return "max";
    case FuseMode::target_only: return "target_only";
  }
  return "?";
}

inline FuseMode fuse_mode_from_string(const std::string& s) {
  if (s == "average") return FuseMode::average;
  if (s == "min") return FuseMode::min;
  if (s == "max") return FuseMode::max;
  if (s == "target_only") return FuseMode::target_only;
  throw ValidationError("unknown fusion mode '" + s + "' (expected average, min, max or target_only)");
}

struct FusedDepth {
  DepthMap depth;
  /// Factor applied to the source-style map; 1 when no alignment was possible.
  double scale = 1.0;
  /// False when the maps share no valid pixel and the union was taken unaligned.
  bool aligned = true;
};

/// Merges a depth map predicted from the target-style image with one predicted from its
/// source-style translation. The target-style map anchors the scale.
inline FusedDepth fuse_depths(const DepthMap& target_style, const DepthMap& source_style,
                              FuseMode mode = FuseMode::average) {
  require(target_style.rows() == source_style.rows() && target_style.cols() == source_style.cols(),
          "fuse_depths: maps differ in size");
  const int rows = target_style.rows(), cols = target_style.cols();
  std::vector<double> t, s;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (target_style.valid(r, c) && source_style.valid(r, c)) {
        t.push_back(target_style.values(r, c));
        s.push_back(source_style.values(r, c));
      }

  FusedDepth out;
  out.depth = DepthMap(rows, cols);
  if (t.empty()) {
    out.aligned = false;
  } else {
    const double ms = eval::detail::median_of(s);
    if (ms > 0) out.scale = eval::detail::median_of(t) / ms;
  }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const bool vt = target_style.valid(r, c), vs = source_style.valid(r, c);
      const double a = target_style.values(r, c), b = source_style.values(r, c) * out.scale;
      double v;
      if (vt && vs) {
        switch (mode) {
          case FuseMode::average: v = 0.5 * (a + b); break;
          case FuseMode::min: v = std::min(a, b); break;
          case FuseMode::max: v = std::max(a, b); break;
          default: v = a; break;
        }
      } else if (vt) {
        v = a;
      } else if (vs && mode != FuseMode::target_only) {
        v = b;
      } else {
        continue;
      }
      out.depth.values(r, c) = v;
      out.depth.valid(r, c) = true;
    }
  return out;
}

}  // namespace toder::recon
