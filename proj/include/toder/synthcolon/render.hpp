#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "toder/core/parallel.hpp"
#include "toder/core/rng.hpp"
#include "toder/core/types.hpp"
#include "toder/synthcolon/colon.hpp"

namespace toder::synthcolon {

/// Surface appearance of one dataset style.
struct TextureStyle {
  Eigen::Vector3d base_albedo{0.55, 0.35, 0.25};
  double smoothness = 0.38;
  double vessel_amplitude = 0.15;
  /// Vessel bands per radius-length of arc.
  double vessel_frequency = 1.5;

  void validate() const {
    require((base_albedo.array() >= 0.0).all() && (base_albedo.array() <= 1.0).all(),
            "style: albedo must lie in [0,1]");
    require(smoothness >= 0 && smoothness <= 1, "style: smoothness must lie in [0,1]");
    require(vessel_amplitude >= 0 && vessel_amplitude <= 1, "style: vessel amplitude must lie in [0,1]");
    require(vessel_frequency >= 0, "style: vessel frequency must be non-negative");
  }

  /// Brown, rough, faint vessels.
  static TextureStyle style_a() { return {{0.55, 0.35, 0.25}, 0.38, 0.15, 1.5}; }
  /// Pink, smooth, prominent vessels.
  static TextureStyle style_b() { return {{0.85, 0.55, 0.60}, 0.83, 0.45, 1.5}; }
};

struct Augmentations {
  bool vignetting = false;
  int motion_blur_taps = 1;
  bool distortion = false;
};

struct RenderConfig {
  CameraIntrinsics intrinsics;
  /// Radiant intensity of the point light at the camera; pixel value is intensity * shading / distance^2.
  double light_intensity = 1.2;
  /// Sphere tracing stops once the remaining distance to the wall is below this.
  double march_tolerance = 1e-5;
  double max_distance = 6.0;
  int max_steps = 600;
  Augmentations augment;

  void validate(double tube_radius) const {
    intrinsics.validate();
    require(light_intensity >= 0, "render: light intensity must be non-negative");
    require(march_tolerance > 0, "render: march tolerance must be positive");
    require(max_distance > 10.0 * tube_radius, "render: max ray distance must exceed 10x the tube radius");
    require(augment.motion_blur_taps >= 1, "render: motion blur taps must be >= 1");
  }
};

namespace detail {

/// Undistorted normalized coordinates whose Brown-Conrady image is (xd, yd).
inline Eigen::Vector2d undistort(double xd, double yd, double k1, double k2) {
  double x = xd, y = yd;
  for (int i = 0; i < 20; ++i) {
    const double r2 = x * x + y * y;
    const double f = 1.0 + k1 * r2 + k2 * r2 * r2;
    x = xd / f;
    y = yd / f;
  }
  return {x, y};
}

inline double band(double phase, double width) {
  const double s = std::sin(phase);
  return std::exp(-(s * s) / (2.0 * width * width));
}

}  // namespace detail

/// Random phases of the procedural texture; fixed per colon so both styles share the layout.
struct TexturePhases {
  double values[6];

  explicit TexturePhases(uint64_t seed) {
    Rng rng = keyed_rng(seed, "synthcolon", "texture");
    for (double& p : values) p = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  }
};

/// Albedo at tube coordinates: base color modulated by sinusoidal vessel bands.
inline Eigen::Vector3d surface_albedo(const TubeCoords& tc, double radius, const TextureStyle& style,
                                      const TexturePhases& tp) {
  const double* phases = tp.values;
  const double u = tc.arc / radius;
  const double a = tc.angle;
  const double f = 2.0 * std::numbers::pi * style.vessel_frequency;
  const double v1 = detail::band(f * u + 1.3 * std::sin(2.0 * a + phases[0]) + 0.8 * std::sin(0.7 * u + phases[1]), 0.12);
  const double v2 = detail::band(3.0 * a + 0.6 * f * u * 0.35 + 0.9 * std::sin(1.1 * u + phases[2]) + phases[3], 0.10);
  const double vessel = std::min(1.0, v1 + 0.6 * v2);
  const double mottle = 1.0 + 0.06 * std::sin(2.3 * u + phases[4]) * std::sin(3.0 * a + phases[5]);
  const Eigen::Vector3d tint(0.25, 0.75, 0.70);
  Eigen::Vector3d albedo = style.base_albedo * mottle;
  albedo = albedo.cwiseProduct(Eigen::Vector3d::Ones() - style.vessel_amplitude * vessel * tint);
  return albedo.cwiseMax(0.0).cwiseMin(1.0);
}

/// Marches one ray through `scene` from inside. Returns the hit distance along the
/// unit direction, or nothing if the ray leaves `max_distance`.
template <typename Scene>
std::optional<double> march_ray(const Scene& scene, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                const RenderConfig& cfg, typename Scene::Hint hint) {
  double t = 0.0;
  double step = 0.0;
  for (int i = 0; i < cfg.max_steps; ++i) {
    const double d = scene.evaluate(origin + t * dir, hint, step);
    if (d > -cfg.march_tolerance) return t;
    step = -d;
    t += step;
    if (t > cfg.max_distance) return std::nullopt;
  }
  return std::nullopt;
}

struct RenderPass {
  RgbImage rgb;
  DepthMap depth;
};

/// One unblurred render of any scene providing evaluate(p, hint, max_move) and coords(p, hint).
template <typename Scene>
RenderPass render_pass(const Scene& scene, double radius, uint64_t texture_seed, const TextureStyle& style,
                              const RenderConfig& cfg, const Pose& pose) {
  const auto& k = cfg.intrinsics;
  RenderPass out;
  const TexturePhases phases(texture_seed);
  out.rgb = RgbImage(3, k.height, k.width, 0.0f);
  out.depth = DepthMap(k.height, k.width);
  const Eigen::Matrix3d rot = pose.rotation_matrix();
  const Eigen::Vector3d origin = pose.translation;
  typename Scene::Hint origin_hint{};
  scene.evaluate(origin, origin_hint, -1.0);
  const double shininess = 4.0 + 96.0 * style.smoothness * style.smoothness;
  const double ks = 0.5 * style.smoothness;
  const double h = 1e-5 + 1e-4 * radius;

  parallel_for(k.height, [&](int v) {
    for (int u = 0; u < k.width; ++u) {
      double x = (u - k.cx) / k.fx;
      double y = (v - k.cy) / k.fy;
      if (cfg.augment.distortion) {
        const Eigen::Vector2d und = detail::undistort(x, y, k.k1, k.k2);
        x = und.x();
        y = und.y();
      }
      const Eigen::Vector3d cam_dir = Eigen::Vector3d(x, y, 1.0).normalized();
      const Eigen::Vector3d dir = rot * cam_dir;
      const auto hit = march_ray(scene, origin, dir, cfg, origin_hint);
      if (!hit) continue;
      const double t = *hit;
      const Eigen::Vector3d p = origin + t * dir;
      out.depth.values(v, u) = t * cam_dir.z();
      out.depth.valid(v, u) = true;

      typename Scene::Hint hint = origin_hint;
      scene.evaluate(p, hint, t);
      auto eval = [&](const Eigen::Vector3d& q) {
        typename Scene::Hint local = hint;
        return scene.evaluate(q, local, h);
      };
      Eigen::Vector3d grad(eval(p + Eigen::Vector3d(h, 0, 0)) - eval(p - Eigen::Vector3d(h, 0, 0)),
                           eval(p + Eigen::Vector3d(0, h, 0)) - eval(p - Eigen::Vector3d(0, h, 0)),
                           eval(p + Eigen::Vector3d(0, 0, h)) - eval(p - Eigen::Vector3d(0, 0, h)));
      const double gn = grad.norm();
      const double cos_in = gn > 0 ? std::max(0.0, grad.dot(dir) / gn) : 0.0;
      const Eigen::Vector3d albedo = surface_albedo(scene.coords(p, hint), radius, style, phases);
      const double falloff = cfg.light_intensity / std::max(t * t, 1e-8);
      const double spec = ks * std::pow(cos_in, shininess);
      double vignette = 1.0;
      if (cfg.augment.vignetting) {
        const double c = cam_dir.z();
        vignette = c * c * c * c;
      }
      for (int ch = 0; ch < 3; ++ch) {
        const double value = falloff * (albedo[ch] * cos_in + spec) * vignette;
        out.rgb.channels[ch](v, u) = static_cast<float>(std::clamp(value, 0.0, 1.0));
      }
    }
  });
  return out;
}

/// Interpolates between two poses (slerp on rotation, lerp on translation).
inline Pose interpolate_pose(const Pose& a, const Pose& b, double t) {
  return Pose(a.rotation.slerp(t, b.rotation), (1.0 - t) * a.translation + t * b.translation);
}

/// Renders RGB + z-depth for a camera-to-world pose. With motion blur enabled, RGB is the
/// mean of `taps` renders along the segment towards `next_pose`; depth is always taken at `pose`.
template <typename Scene>
FrameSample render_scene(const Scene& scene, double radius, uint64_t texture_seed, const TextureStyle& style,
                         const RenderConfig& cfg, const Pose& pose, const std::optional<Pose>& next_pose = {}) {
  typename Scene::Hint hint{};
  if (scene.evaluate(pose.translation, hint, -1.0) >= -1e-3) {
    throw ValidationError("render: camera position is not inside the lumen");
  }
  RenderPass pass = render_pass(scene, radius, texture_seed, style, cfg, pose);
  FrameSample sample;
  sample.depth = std::move(pass.depth);
  sample.pose = pose;
  const int taps = cfg.augment.motion_blur_taps;
  if (taps > 1 && next_pose) {
    RgbImage acc = pass.rgb;
    for (int i = 1; i < taps; ++i) {
      const Pose p = interpolate_pose(pose, *next_pose, static_cast<double>(i) / taps);
      const RenderPass extra = render_pass(scene, radius, texture_seed, style, cfg, p);
      for (int ch = 0; ch < 3; ++ch) acc.channels[ch] += extra.rgb.channels[ch];
    }
    for (auto& c : acc.channels) c /= static_cast<float>(taps);
    sample.frame.rgb = std::move(acc);
  } else {
    sample.frame.rgb = std::move(pass.rgb);
  }
  return sample;
}

inline FrameSample render_frame(const ColonSdf& colon, const TextureStyle& style, const RenderConfig& cfg,
                                const Pose& pose, const std::optional<Pose>& next_pose = {}) {
  style.validate();
  cfg.validate(colon.spec().radius);
  return render_scene(colon, colon.spec().radius, colon.spec().seed, style, cfg, pose, next_pose);
}

}  // namespace toder::synthcolon
