#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "toder/core/se3.hpp"
#include "toder/synthcolon/dataset.hpp"
#include "test_util.hpp"

namespace toder::synthcolon {
namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Camera at `position` whose optical axis is `forward`.
Pose look_along(const Eigen::Vector3d& position, const Eigen::Vector3d& forward, const Eigen::Vector3d& up_hint) {
  const Eigen::Vector3d z = forward.normalized();
  const Eigen::Vector3d x = up_hint.cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return Pose(r, position);
}

// Distance from (rho, z) to the curve (r(z'), z') by dense sampling of z'.
double meridional_distance_oracle(double rho, double z, const ColonSpec& spec, double z_max) {
  const int n = 40000;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i) {
    const double zz = z_max * i / n;
    const double phase = 2.0 * std::numbers::pi * spec.fold_frequency * zz / spec.radius;
    const double r = spec.radius - spec.fold_amplitude * 0.5 * (1.0 - std::cos(phase));
    best = std::min(best, std::hypot(rho - r, z - zz));
  }
  return best;
}

// Analytic hit distance of a ray from inside an infinite z-aligned cylinder.
double ray_cylinder_oracle(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double radius) {
  const double a = d.x() * d.x() + d.y() * d.y();
  const double b = 2.0 * (o.x() * d.x() + o.y() * d.y());
  const double c = o.x() * o.x() + o.y() * o.y() - radius * radius;
  return (-b + std::sqrt(b * b - 4 * a * c)) / (2 * a);
}

TEST(ColonSdf, StraightTubeValues) {
  const ColonSdf sdf(ColonSpec::straight(10.0, 1.0));
  EXPECT_NEAR(sdf(Eigen::Vector3d(0, 0, 0)), -1.0, 1e-12);
  EXPECT_NEAR(sdf(Eigen::Vector3d(1, 0, 0)), 0.0, 1e-12);
  EXPECT_NEAR(sdf(Eigen::Vector3d(0, 0.25, 5)), -0.75, 1e-12);
  EXPECT_NEAR(sdf(Eigen::Vector3d(2, 0, 5)), 1.0, 1e-12);
}

TEST(ColonSdf, FoldedTubeIsConservative) {
  ColonSpec spec = ColonSpec::straight(8.0, 1.0);
  spec.fold_amplitude = 0.3;
  spec.fold_frequency = 0.5;
  const ColonSdf sdf(spec);
  Rng rng = keyed_rng(11, "test", "sdf");
  for (int i = 0; i < 10000; ++i) {
    const double z = uniform(rng, 1.0, 7.0);
    const double rho = uniform(rng, 0.0, 1.5);
    const double phi = uniform(rng, 0.0, 2 * std::numbers::pi);
    const Eigen::Vector3d p(rho * std::cos(phi), rho * std::sin(phi), z);
    const double value = sdf(p);
    const double truth = meridional_distance_oracle(rho, z, spec, 8.0);
    ASSERT_LE(std::abs(value), truth + 1e-3) << "rho=" << rho << " z=" << z;
    const double phase = 2.0 * std::numbers::pi * spec.fold_frequency * z / spec.radius;
    const double r = spec.radius - spec.fold_amplitude * 0.5 * (1.0 - std::cos(phase));
    if (std::abs(rho - r) > 1e-6) {
      ASSERT_EQ(value < 0, rho < r);
    }
  }
}

TEST(ColonSdf, HintedSearchMatchesGlobal) {
  const ColonSdf sdf(ColonSpec::procedural(12.0, 0.5, 0.15, 0.6, 3));
  Rng rng = keyed_rng(12, "test", "hint");
  for (int i = 0; i < 2000; ++i) {
    const double s = uniform(rng, 0.5, sdf.length() - 0.5);
    const CenterlineFrame f = sdf.frame_at(s);
    const Eigen::Vector3d p0 = f.position + 0.2 * f.normal;
    TubeHint hint;
    sdf.evaluate(p0, hint);
    const Eigen::Vector3d step(uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3));
    const Eigen::Vector3d p1 = p0 + step;
    if (sdf(p1) > 0) continue;
    ASSERT_NEAR(sdf.evaluate(p1, hint, step.norm()), sdf(p1), 1e-12);
  }
}

TEST(Trajectory, RejectsTooFewFrames) {
  EXPECT_THROW(sample_trajectory(ColonSpec::straight(10, 1), 1, 0), ValidationError);
}

TEST(Trajectory, ZeroJitterLooksAlongStraightAxis) {
  TrajectoryOptions opt;
  opt.max_offset = 0;
  opt.max_jitter_deg = 0;
  opt.max_roll_deg = 0;
  const auto traj = sample_trajectory(ColonSpec::straight(20, 1), 20, 5, opt);
  const double spacing = (traj[1].pose.translation - traj[0].pose.translation).norm();
  for (size_t i = 0; i < traj.size(); ++i) {
    const Eigen::Vector3d view = traj[i].pose.rotation * Eigen::Vector3d::UnitZ();
    EXPECT_NEAR((view - Eigen::Vector3d::UnitZ()).norm(), 0.0, 1e-12);
    EXPECT_NEAR(traj[i].pose.translation.head<2>().norm(), 0.0, 1e-12);
    EXPECT_NEAR(traj[i].timestamp, i / 30.0, 1e-15);
    if (i > 0) {
      EXPECT_NEAR((traj[i].pose.translation - traj[i - 1].pose.translation).norm(), spacing, 1e-9);
    }
  }
}

TEST(Trajectory, DeterministicAndBounded) {
  const ColonSpec spec = ColonSpec::procedural(12.0, 0.5, 0.15, 0.6, 9);
  const ColonSdf colon(spec);
  const int n = 120;
  const auto a = sample_trajectory(colon, n, 77);
  const auto b = sample_trajectory(colon, n, 77);
  ASSERT_EQ(a.size(), b.size());
  for (int i = 0; i < n; ++i) {
    EXPECT_EQ(a[i].pose.matrix(), b[i].pose.matrix());
    EXPECT_LT(colon(a[i].pose.translation), -1e-3);
    // Offset from the centerline and view jitter bounds.
    TubeHint hint;
    const TubeCoords tc = colon.coords(a[i].pose.translation, hint);
    const CenterlineFrame f = colon.frame_at(tc.arc);
    EXPECT_LE((a[i].pose.translation - f.position).norm(), 0.3 * spec.radius + 1e-6);
    const Eigen::Vector3d view = a[i].pose.rotation * Eigen::Vector3d::UnitZ();
    const double frame_tangent_angle = std::acos(std::clamp(view.dot(colon.frame_at(tc.arc).tangent), -1.0, 1.0));
    EXPECT_LE(frame_tangent_angle, 10.5 * std::numbers::pi / 180.0);
    if (i > 0) {
      const Pose rel = relative_pose(a[i - 1].pose, a[i].pose);
      EXPECT_LT(rel.translation.norm(), 2.0 * colon.length() / n);
    }
  }
  const auto c = sample_trajectory(colon, n, 78);
  EXPECT_NE(a[n / 2].pose.matrix(), c[n / 2].pose.matrix());
}

RenderConfig small_config(int w, int h, double fov_deg = 90.0) {
  RenderConfig cfg;
  cfg.intrinsics = CameraIntrinsics::from_fov(w, h, fov_deg * std::numbers::pi / 180.0);
  cfg.max_distance = 12.0;
  return cfg;
}

TEST(Render, PerpendicularViewMatchesCylinderIntersection) {
  const ColonSdf colon(ColonSpec::straight(40.0, 1.0));
  RenderConfig cfg = small_config(33, 33);
  const Pose pose = look_along(Eigen::Vector3d(0, 0, 20), Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitZ());
  const FrameSample s = render_frame(colon, TextureStyle::style_a(), cfg, pose);
  ASSERT_EQ(cfg.intrinsics.cx, 16.0);
  ASSERT_TRUE(s.depth.valid(16, 16));
  EXPECT_NEAR(s.depth.values(16, 16), 1.0, 1e-3);
  const auto& k = cfg.intrinsics;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      ASSERT_TRUE(s.depth.valid(v, u));
      const Eigen::Vector3d cam = Eigen::Vector3d((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0).normalized();
      const double t = ray_cylinder_oracle(pose.translation, pose.rotation * cam, 1.0);
      ASSERT_NEAR(s.depth.values(v, u), t * cam.z(), 1e-3) << u << "," << v;
    }
  }
}

TEST(Render, AxialViewLosesFarPixels) {
  const ColonSdf colon(ColonSpec::straight(40.0, 1.0));
  RenderConfig cfg = small_config(32, 32, 60.0);
  const Pose pose = look_along(Eigen::Vector3d(0, 0, 5), Eigen::Vector3d::UnitZ(), Eigen::Vector3d::UnitX());
  const FrameSample s = render_frame(colon, TextureStyle::style_a(), cfg, pose);
  EXPECT_FALSE(s.depth.valid(16, 16));
  EXPECT_TRUE(s.depth.valid(0, 0));
}

TEST(Render, ZeroLightIsBlackWithSameDepth) {
  const ColonSdf colon(ColonSpec::procedural(8.0, 0.5, 0.1, 0.5, 1));
  RenderConfig cfg = small_config(24, 24);
  cfg.max_distance = 6.0;
  const auto traj = sample_trajectory(colon, 4, 3);
  const FrameSample lit = render_frame(colon, TextureStyle::style_b(), cfg, traj[1].pose);
  cfg.light_intensity = 0.0;
  const FrameSample dark = render_frame(colon, TextureStyle::style_b(), cfg, traj[1].pose);
  for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(dark.frame.rgb.channels[ch].maxCoeff(), 0.0f);
  EXPECT_TRUE((dark.depth.values == lit.depth.values).all());
  EXPECT_GT(lit.frame.rgb.channels[0].maxCoeff(), 0.0f);
}

// Infinite wall at z = distance, seen from the origin.
struct WallScene {
  using Hint = int;
  double distance = 1.0;
  double evaluate(const Eigen::Vector3d& p, Hint&, double) const { return p.z() - distance; }
  TubeCoords coords(const Eigen::Vector3d&, Hint&) const { return {}; }
};

TEST(Render, VignettingFollowsCosFourth) {
  const WallScene wall;
  RenderConfig cfg = small_config(41, 31, 80.0);
  cfg.max_distance = 20.0;
  cfg.light_intensity = 0.2;
  TextureStyle flat{{0.5, 0.5, 0.5}, 0.0, 0.0, 0.0};
  const FrameSample off = render_scene(wall, 1.0, 0, flat, cfg, Pose::identity());
  cfg.augment.vignetting = true;
  const FrameSample on = render_scene(wall, 1.0, 0, flat, cfg, Pose::identity());
  const auto& k = cfg.intrinsics;
  for (auto [u, v] : {std::pair{0, 0}, {40, 30}, {0, 30}, {20, 0}}) {
    const Eigen::Vector3d cam = Eigen::Vector3d((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0).normalized();
    const double expected = std::pow(cam.z(), 4);
    const double ratio = on.frame.rgb.channels[0](v, u) / off.frame.rgb.channels[0](v, u);
    EXPECT_NEAR(ratio / expected, 1.0, 0.02);
  }
  // Constant-depth wall: depth is the wall distance everywhere.
  EXPECT_NEAR((on.depth.values - 1.0).abs().maxCoeff(), 0.0, 1e-4);
}

TEST(Render, CameraOutsideLumenRejected) {
  const ColonSdf colon(ColonSpec::straight(10.0, 1.0));
  const Pose outside = look_along(Eigen::Vector3d(2, 0, 5), Eigen::Vector3d::UnitZ(), Eigen::Vector3d::UnitX());
  EXPECT_THROW(render_frame(colon, TextureStyle::style_a(), small_config(8, 8), outside), ValidationError);
}

TEST(Render, MotionBlurAveragesAlongSegment) {
  const ColonSdf colon(ColonSpec::procedural(8.0, 0.5, 0.1, 0.5, 1));
  RenderConfig cfg = small_config(16, 16);
  cfg.max_distance = 6.0;
  const auto traj = sample_trajectory(colon, 10, 3);
  const FrameSample sharp = render_frame(colon, TextureStyle::style_a(), cfg, traj[2].pose, traj[3].pose);
  cfg.augment.motion_blur_taps = 3;
  const FrameSample blurred = render_frame(colon, TextureStyle::style_a(), cfg, traj[2].pose, traj[3].pose);
  EXPECT_TRUE((blurred.depth.values == sharp.depth.values).all());
  EXPECT_GT((blurred.frame.rgb.channels[0] - sharp.frame.rgb.channels[0]).abs().maxCoeff(), 0.0f);
}

DatasetRequest small_request(const std::filesystem::path& out, const TextureStyle& style, StyleTag tag, int w, int h) {
  DatasetRequest req;
  req.colon = ColonSpec::procedural(10.0, 0.5, 0.12, 0.5, 21);
  req.style = style;
  req.tag = tag;
  req.render.intrinsics = CameraIntrinsics::from_fov(w, h, 100.0 * std::numbers::pi / 180.0);
  req.render.max_distance = 6.0;
  req.n_train = 10;
  req.n_test_sets = 1;
  req.n_test = 3;
  req.out_dir = out;
  req.seed = 5;
  return req;
}

TEST(Dataset, SmokeRoundTripAndDeterminism) {
  TempDir dir;
  const auto t0 = std::chrono::steady_clock::now();
  const DatasetManifest m =
      generate_dataset(small_request(dir.path() / "a", TextureStyle::style_a(), StyleTag::A, 96, 96));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(seconds, 10.0);
  const auto splits = load_dataset_splits(dir.path() / "a");
  ASSERT_EQ(splits.size(), 2u);
  EXPECT_EQ(splits[0].frames.size(), 10u);
  EXPECT_EQ(splits[1].frames.size(), 3u);
  EXPECT_EQ(load_trajectory(splits[0]).size(), 10u);
  EXPECT_EQ(m.style, StyleTag::A);
  EXPECT_GT(load_depth(splits[0], 0).valid_count(), 0);

  generate_dataset(small_request(dir.path() / "a2", TextureStyle::style_a(), StyleTag::A, 96, 96));
  generate_dataset(small_request(dir.path() / "b", TextureStyle::style_b(), StyleTag::B, 96, 96));
  for (const char* split : {"train", "test_00"}) {
    for (int i = 0; i < 3; ++i) {
      const std::string depth = "/depth/00000" + std::to_string(i) + ".png";
      const std::string rgb = "/rgb/00000" + std::to_string(i) + ".png";
      const auto a = dir.path() / "a" / split;
      EXPECT_EQ(slurp(a.string() + depth), slurp((dir.path() / "a2" / split).string() + depth));
      EXPECT_EQ(slurp(a.string() + depth), slurp((dir.path() / "b" / split).string() + depth));
      EXPECT_NE(slurp(a.string() + rgb), slurp((dir.path() / "b" / split).string() + rgb));
    }
    EXPECT_EQ(slurp(dir.path() / "a" / split / "groundtruth.txt"), slurp(dir.path() / "b" / split / "groundtruth.txt"));
  }
  // Splits use different geometry.
  EXPECT_NE(slurp(dir.path() / "a" / "train" / "groundtruth.txt"),
            slurp(dir.path() / "a" / "test_00" / "groundtruth.txt"));
}

TEST(Dataset, PaperScaleFrameCounts) {
  TempDir dir;
  DatasetRequest req = small_request(dir.path(), TextureStyle::style_a(), StyleTag::A, 8, 6);
  req.colon = ColonSpec::procedural(30.0, 0.5, 0.12, 0.5, 21);
  req.n_train = 3000;
  req.n_test_sets = 4;
  req.n_test = 200;
  generate_dataset(req);
  const auto splits = load_dataset_splits(dir.path());
  ASSERT_EQ(splits.size(), 5u);
  size_t total = 0;
  for (const auto& s : splits) total += s.frames.size();
  EXPECT_EQ(splits[0].frames.size(), 3000u);
  EXPECT_EQ(total, 3800u);
  size_t pngs = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir.path()))
    if (e.path().extension() == ".png") ++pngs;
  EXPECT_EQ(pngs, 2u * 3800u);
}

}  // namespace
}  // namespace toder::synthcolon
