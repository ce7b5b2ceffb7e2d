#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "toder/core/types.hpp"

namespace toder {

/// TUM RGB-D convention: 5000 stored units per meter.
inline constexpr int kDefaultDepthScale = 5000;

/// Reads a 16-bit single-channel depth PNG. Stored zeros become invalid pixels.
inline DepthMap read_depth_png(const std::filesystem::path& path, double depth_scale) {
  require(depth_scale > 0, "depth_scale must be positive");
  const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw Error("cannot read depth image " + path.string());
  if (raw.type() != CV_16UC1) {
    throw FormatError("depth image " + path.string() + " is not 16-bit single-channel");
  }
  DepthMap d(raw.rows, raw.cols);
  for (int r = 0; r < raw.rows; ++r) {
    const auto* row = raw.ptr<uint16_t>(r);
    for (int c = 0; c < raw.cols; ++c) {
      if (row[c] == 0) continue;
      d.values(r, c) = row[c] / depth_scale;
      d.valid(r, c) = true;
    }
  }
  return d;
}

/// Quantizes to round(meters * depth_scale), clamped to the 16-bit range. Invalid pixels store 0.
inline cv::Mat encode_depth(const DepthMap& d, double depth_scale) {
  require(depth_scale > 0, "depth_scale must be positive");
  cv::Mat raw(d.rows(), d.cols(), CV_16UC1, cv::Scalar(0));
  for (int r = 0; r < d.rows(); ++r) {
    auto* row = raw.ptr<uint16_t>(r);
    for (int c = 0; c < d.cols(); ++c) {
      if (!d.valid(r, c)) continue;
      const double m = d.values(r, c);
      if (m < 0) throw ValidationError("negative depth cannot be written");
      if (!std::isfinite(m)) continue;
      const double stored = std::clamp(std::round(m * depth_scale), 0.0, 65535.0);
      row[c] = static_cast<uint16_t>(stored);
    }
  }
  return raw;
}

inline void write_depth_png(const DepthMap& d, const std::filesystem::path& path, double depth_scale) {
  const cv::Mat raw = encode_depth(d, depth_scale);
  if (!cv::imwrite(path.string(), raw)) throw Error("cannot write depth image " + path.string());
}

inline RgbImage rgb_from_mat(const cv::Mat& bgr) {
  RgbImage img(3, bgr.rows, bgr.cols);
  for (int r = 0; r < bgr.rows; ++r) {
    const auto* row = bgr.ptr<cv::Vec3b>(r);
    for (int c = 0; c < bgr.cols; ++c) {
      for (int ch = 0; ch < 3; ++ch) img.channels[ch](r, c) = row[c][2 - ch] / 255.0f;
    }
  }
  return img;
}

inline cv::Mat mat_from_rgb(const RgbImage& img) {
  require(img.n_channels() == 3, "expected a 3-channel image");
  cv::Mat bgr(img.rows(), img.cols(), CV_8UC3);
  for (int r = 0; r < img.rows(); ++r) {
    auto* row = bgr.ptr<cv::Vec3b>(r);
    for (int c = 0; c < img.cols(); ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        const float v = std::clamp(img.channels[ch](r, c), 0.0f, 1.0f);
        row[c][2 - ch] = static_cast<uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return bgr;
}

inline RgbImage read_rgb_png(const std::filesystem::path& path) {
  const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw Error("cannot read image " + path.string());
  if (raw.type() != CV_8UC3) throw FormatError("image " + path.string() + " is not 8-bit RGB");
  return rgb_from_mat(raw);
}

inline void write_rgb_png(const RgbImage& img, const std::filesystem::path& path) {
  if (!cv::imwrite(path.string(), mat_from_rgb(img))) throw Error("cannot write image " + path.string());
}

}  // namespace toder
