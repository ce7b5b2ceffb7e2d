#include <gtest/gtest.h>

#include <cmath>

#include "toder/core/rng.hpp"
#include "toder/geometry/losses.hpp"

namespace toder::geometry {
namespace {

using Pd = Plane<double>;

CameraIntrinsics pinhole(double f, double cx, double cy, int w, int h) {
  CameraIntrinsics k;
  k.fx = k.fy = f;
  k.cx = cx;
  k.cy = cy;
  k.width = w;
  k.height = h;
  return k;
}

Pd random_plane(Rng& rng, int rows, int cols, double lo, double hi) {
  Pd p(rows, cols);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = uniform(rng, lo, hi);
  return p;
}

// Straightforward bilinear interpolation used as the reference.
double bilinear_oracle(const Pd& img, double u, double v) {
  const int c0 = std::min(static_cast<int>(std::floor(u)), static_cast<int>(img.cols()) - 2);
  const int r0 = std::min(static_cast<int>(std::floor(v)), static_cast<int>(img.rows()) - 2);
  const double a = u - c0, b = v - r0;
  return img(r0, c0) * (1 - a) * (1 - b) + img(r0, c0 + 1) * a * (1 - b) + img(r0 + 1, c0) * (1 - a) * b +
         img(r0 + 1, c0 + 1) * a * b;
}

// Windowed SSIM computed directly from the pixels of each clipped 7x7 window.
double ssim_oracle(const Pd& x, const Pd& y, int r, int c) {
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  int n = 0;
  for (int i = std::max(0, r - 3); i <= std::min<int>(x.rows() - 1, r + 3); ++i) {
    for (int j = std::max(0, c - 3); j <= std::min<int>(x.cols() - 1, c + 3); ++j) {
      sx += x(i, j);
      sy += y(i, j);
      ++n;
    }
  }
  const double mx = sx / n, my = sy / n;
  for (int i = std::max(0, r - 3); i <= std::min<int>(x.rows() - 1, r + 3); ++i) {
    for (int j = std::max(0, c - 3); j <= std::min<int>(x.cols() - 1, c + 3); ++j) {
      sxx += (x(i, j) - mx) * (x(i, j) - mx);
      syy += (y(i, j) - my) * (y(i, j) - my);
      sxy += (x(i, j) - mx) * (y(i, j) - my);
    }
  }
  const double vx = sxx / n, vy = syy / n, cxy = sxy / n;
  const double c1 = 1e-4, c2 = 9e-4;
  return (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

double constant_ssim(double a, double b) { return (2 * a * b + 1e-4) / (a * a + b * b + 1e-4); }

TEST(Backproject, PrincipalRay) {
  DepthMap d(1, 1);
  d.values(0, 0) = 2.0;
  d.valid(0, 0) = true;
  const auto p = backproject(d, pinhole(1, 0, 0, 1, 1));
  EXPECT_EQ(p.x(0, 0), 0.0);
  EXPECT_EQ(p.y(0, 0), 0.0);
  EXPECT_EQ(p.z(0, 0), 2.0);
}

TEST(Backproject, OffAxisPixel) {
  DepthMap d(Pd::Ones(60, 100));
  const auto p = backproject(d, pinhole(100, 50, 50, 100, 60));
  EXPECT_NEAR(p.x(50, 60), 0.1, 1e-15);
  EXPECT_NEAR(p.y(50, 60), 0.0, 1e-15);
  EXPECT_EQ(p.z(50, 60), 1.0);
}

TEST(Backproject, EmptyMaskRejected) {
  EXPECT_THROW(backproject(DepthMap(4, 4), pinhole(1, 0, 0, 4, 4)), ValidationError);
}

TEST(Backproject, ProjectRoundTrip) {
  Rng rng = keyed_rng(1, "test", "bp");
  const auto k = pinhole(80, 15.5, 11.5, 32, 24);
  const DepthMap d(random_plane(rng, 24, 32, 0.5, 4.0));
  const auto uv = project(backproject(d, k), k);
  for (int r = 0; r < 24; ++r) {
    for (int c = 0; c < 32; ++c) {
      EXPECT_NEAR(uv[0](r, c), c, 1e-6);
      EXPECT_NEAR(uv[1](r, c), r, 1e-6);
    }
  }
}

TEST(Warp, IdentityPose) {
  Rng rng = keyed_rng(2, "test", "warp");
  DepthMap d(random_plane(rng, 10, 12, 1.0, 3.0));
  d.valid(3, 4) = false;
  const auto w = warp(d, Pose::identity(), pinhole(20, 5.5, 4.5, 12, 10));
  for (int r = 0; r < 10; ++r) {
    for (int c = 0; c < 12; ++c) {
      EXPECT_NEAR(w.u(r, c), c, 1e-12);
      EXPECT_NEAR(w.v(r, c), r, 1e-12);
      EXPECT_EQ(w.warped_depth(r, c), d.values(r, c));
      EXPECT_EQ(w.valid(r, c), d.valid(r, c));
    }
  }
}

TEST(Warp, SidewaysCameraMotionShiftsPixels) {
  // Camera b sits 0.1 m to the right of camera a.
  Pose world_from_b;
  world_from_b.translation = Eigen::Vector3d(0.1, 0, 0);
  const Pose a_to_b = relative_pose(Pose::identity(), world_from_b);
  const auto w = warp(DepthMap(Pd::Ones(20, 40)), a_to_b, pinhole(100, 20, 10, 40, 20));
  for (int r = 0; r < 20; ++r) {
    for (int c = 0; c < 40; ++c) {
      EXPECT_NEAR(w.u(r, c) - c, -10.0, 1e-12);
      EXPECT_NEAR(w.v(r, c), r, 1e-12);
      EXPECT_EQ(w.valid(r, c), c >= 10);
    }
  }
}

// Depth of the plane n.X = offset seen by a camera with the given pose (camera-to-plane frame).
DepthMap plane_depth(const Eigen::Vector3d& n, double offset, const Pose& cam_to_plane, const CameraIntrinsics& k) {
  DepthMap d(k.height, k.width);
  const Eigen::Matrix3d r = cam_to_plane.rotation_matrix();
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const Eigen::Vector3d ray((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      const double z = (offset - n.dot(cam_to_plane.translation)) / n.dot(r * ray);
      if (z > 0) {
        d.values(v, u) = z;
        d.valid(v, u) = true;
      }
    }
  }
  return d;
}

TEST(Warp, ForwardBackwardRoundTrip) {
  const auto k = pinhole(60, 31.5, 23.5, 64, 48);
  const Eigen::Vector3d n = Eigen::Vector3d(0.1, -0.2, 1.0).normalized();
  const Pose a_to_b = pose_from_6dof({Eigen::Vector3d(0.02, -0.03, 0.01), Eigen::Vector3d(0.05, 0.02, -0.04)});
  const DepthMap da = plane_depth(n, 2.0, Pose::identity(), k);
  const DepthMap db = plane_depth(n, 2.0, a_to_b.inverse(), k);
  const auto wab = warp(da, a_to_b, k);
  const auto wba = warp(db, a_to_b.inverse(), k);
  int checked = 0;
  for (int r = 0; r < k.height; ++r) {
    for (int c = 0; c < k.width; ++c) {
      if (!wab.valid(r, c)) continue;
      const BilinearStencil<double> st(wab.u(r, c), wab.v(r, c), k.width, k.height);
      if (!st.all_valid(wba.valid)) continue;
      EXPECT_NEAR(bilinear_oracle(wba.u, wab.u(r, c), wab.v(r, c)), c, 1e-3);
      EXPECT_NEAR(bilinear_oracle(wba.v, wab.u(r, c), wab.v(r, c)), r, 1e-3);
      ++checked;
    }
  }
  EXPECT_GT(checked, k.width * k.height / 2);
}

TEST(Warp, ScaleEquivariance) {
  Rng rng = keyed_rng(3, "test", "equiv");
  const auto k = pinhole(40, 15.5, 11.5, 32, 24);
  const Pd depth = random_plane(rng, 24, 32, 1.0, 3.0);
  const Mask all = Mask::Constant(24, 32, true);
  Rigid<double> m = Rigid<double>::from(pose_from_6dof({Eigen::Vector3d(0.05, 0.1, -0.02), Eigen::Vector3d(0.2, -0.1, 0.3)}));
  const auto w1 = warp<double>(depth, all, m, k);
  for (double s : {0.1, 3.7}) {
    Rigid<double> ms = m;
    ms.translation *= s;
    const auto w2 = warp<double>(Pd(depth * s), all, ms, k);
    EXPECT_LT((w1.u - w2.u).abs().maxCoeff(), 1e-9);
    EXPECT_LT((w1.v - w2.v).abs().maxCoeff(), 1e-9);
  }
}

TEST(Bilinear, LatticeConstantAndRamp) {
  Rng rng = keyed_rng(4, "test", "bilinear");
  const Pd img = random_plane(rng, 6, 8, 0, 1);
  Pd u(6, 8), v(6, 8);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 8; ++c) {
      u(r, c) = c;
      v(r, c) = r;
    }
  const auto lattice = bilinear_sample<double>({img}, u, v);
  EXPECT_TRUE((lattice.channels[0] == img).all());
  EXPECT_TRUE(lattice.valid.all());

  const Pd constant = Pd::Constant(6, 8, 0.37);
  const Pd ru = random_plane(rng, 6, 8, 0, 7), rv = random_plane(rng, 6, 8, 0, 5);
  const auto flat = bilinear_sample<double>({constant}, ru, rv);
  EXPECT_LT((flat.channels[0] - 0.37).abs().maxCoeff(), 1e-15);

  Pd ramp(6, 8);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 8; ++c) ramp(r, c) = c;
  const auto s = bilinear_sample<double>({ramp}, Pd::Constant(1, 1, 3.25), Pd::Constant(1, 1, 2.6));
  EXPECT_DOUBLE_EQ(s.channels[0](0, 0), 3.25);
}

TEST(Bilinear, OutOfBoundsIsFlaggedNotThrown) {
  const Pd img = Pd::Ones(4, 4);
  Pd u(1, 4), v(1, 4);
  u << -0.1, 3.0, 3.01, 1.5;
  v << 1.0, 3.0, 1.0, -2.0;
  const auto s = bilinear_sample<double>({img}, u, v);
  EXPECT_FALSE(s.valid(0, 0));
  EXPECT_TRUE(s.valid(0, 1));
  EXPECT_EQ(s.channels[0](0, 1), 1.0);
  EXPECT_FALSE(s.valid(0, 2));
  EXPECT_FALSE(s.valid(0, 3));
  EXPECT_EQ(s.channels[0](0, 3), 0.0);
}

TEST(Bilinear, MatchesOracleOnRandomCoords) {
  Rng rng = keyed_rng(5, "test", "bilinear2");
  const Pd img = random_plane(rng, 9, 11, -1, 1);
  const Pd u = random_plane(rng, 5, 5, 0, 10), v = random_plane(rng, 5, 5, 0, 8);
  const auto s = bilinear_sample<double>({img}, u, v);
  for (int i = 0; i < 25; ++i) EXPECT_NEAR(s.channels[0].data()[i], bilinear_oracle(img, u.data()[i], v.data()[i]), 1e-12);
}

TEST(Ssim, SelfSimilarityIsOne) {
  Rng rng = keyed_rng(6, "test", "ssim");
  const Pd x = random_plane(rng, 16, 20, 0, 1);
  EXPECT_LT((ssim<double>(x, x) - 1.0).abs().maxCoeff(), 1e-6);
}

TEST(Ssim, ConstantImagesClosedForm) {
  const Pd s = ssim<double>(Pd::Constant(10, 10, 0.2), Pd::Constant(10, 10, 0.8));
  EXPECT_NEAR(s(5, 5), constant_ssim(0.2, 0.8), 1e-12);
  EXPECT_NEAR(s(0, 0), 0.4707, 1e-4);
  EXPECT_LT((s - s(5, 5)).abs().maxCoeff(), 1e-12);
}

TEST(Ssim, MatchesWindowOracleAndComplementIsDissimilar) {
  Rng rng = keyed_rng(7, "test", "ssim2");
  const Pd x = random_plane(rng, 13, 17, 0, 1);
  const Pd y = 1.0 - x;
  const Pd s = ssim<double>(x, y);
  const Pd z = random_plane(rng, 13, 17, 0, 1);
  const Pd sz = ssim<double>(x, z);
  for (int r = 0; r < 13; ++r) {
    for (int c = 0; c < 17; ++c) {
      EXPECT_NEAR(s(r, c), ssim_oracle(x, y, r, c), 1e-9);
      EXPECT_NEAR(sz(r, c), ssim_oracle(x, z, r, c), 1e-9);
      EXPECT_LT(s(r, c), 1.0);
      EXPECT_GE(s(r, c), -1.0);
    }
  }
}

TEST(Ssim, ShapeMismatchRejected) {
  EXPECT_THROW(ssim<double>(Pd::Zero(3, 3), Pd::Zero(3, 4)), ValidationError);
}

TEST(Photometric, ClosedFormCases) {
  const Mask all = Mask::Constant(9, 9, true);
  Rng rng = keyed_rng(8, "test", "photo");
  std::vector<Pd> img{random_plane(rng, 9, 9, 0, 1), random_plane(rng, 9, 9, 0, 1), random_plane(rng, 9, 9, 0, 1)};
  EXPECT_NEAR(photometric_loss(img, img, all, 0.15, 0.85), 0.0, 1e-6);

  const std::vector<Pd> zeros(3, Pd::Zero(9, 9)), ones(3, Pd::Ones(9, 9));
  EXPECT_DOUBLE_EQ(photometric_loss(zeros, ones, all, 1.0, 0.0), 1.0);

  const std::vector<Pd> a(3, Pd::Constant(9, 9, 0.2)), b(3, Pd::Constant(9, 9, 0.8));
  const double expected = 0.15 * 0.6 + 0.85 * (1 - constant_ssim(0.2, 0.8)) / 2;
  EXPECT_NEAR(photometric_loss(a, b, all, 0.15, 0.85), expected, 1e-12);
  EXPECT_NEAR(photometric_loss(a, b, all, 0.15, 0.85), 0.3150, 1e-4);

  EXPECT_THROW(photometric_loss(a, b, Mask::Constant(9, 9, false), 0.15, 0.85), ValidationError);
}

TEST(Photometric, RestrictedToMaskAndMinimizedAtIdentity) {
  Rng rng = keyed_rng(9, "test", "photo2");
  const Pd x = random_plane(rng, 12, 12, 0, 1);
  Mask half = Mask::Constant(12, 12, false);
  half.topRows(6).setConstant(true);
  Pd y = x;
  y.bottomRows(6) = 1.0 - y.bottomRows(6);
  // Only the L1 term: the masked-out half must not contribute.
  EXPECT_NEAR(photometric_loss<double>({x}, {y}, half, 1.0, 0.0), 0.0, 1e-15);
  for (int i = 0; i < 20; ++i) {
    const Pd z = random_plane(rng, 12, 12, 0, 1);
    EXPECT_GT(photometric_loss<double>({x}, {z}, Mask::Constant(12, 12, true), 0.15, 0.85), 0.0);
  }
}

TEST(Consistency, SinglePointHalf) {
  WarpResult<double> w{Pd::Constant(3, 3, 1.0), Pd::Constant(3, 3, 1.0), Mask::Constant(3, 3, false),
                       Pd::Constant(3, 3, 1.0)};
  w.valid(1, 1) = true;
  const Pd db = Pd::Constant(3, 3, 3.0);
  EXPECT_DOUBLE_EQ(depth_consistency_loss<double>(Pd::Ones(3, 3), db, Mask::Constant(3, 3, true), w), 0.5);
  // Swapping which depth comes first gives the same value.
  w.warped_depth.setConstant(3.0);
  EXPECT_DOUBLE_EQ(depth_consistency_loss<double>(Pd::Ones(3, 3), Pd::Ones(3, 3), Mask::Constant(3, 3, true), w), 0.5);
  w.valid(1, 1) = false;
  EXPECT_THROW(depth_consistency_loss<double>(Pd::Ones(3, 3), db, Mask::Constant(3, 3, true), w), ValidationError);
}

TEST(Consistency, MatchesScalarLoopOracle) {
  Rng rng = keyed_rng(10, "test", "cons");
  const auto k = pinhole(30, 11.5, 9.5, 24, 20);
  for (auto mode : {ConsistencyMode::warped_z, ConsistencyMode::raw}) {
    DepthMap da(random_plane(rng, 20, 24, 0.5, 3.0)), db(random_plane(rng, 20, 24, 0.5, 3.0));
    db.valid(4, 5) = false;
    const Pose p = pose_from_6dof({Eigen::Vector3d(0.01, 0.02, 0.0), Eigen::Vector3d(0.1, 0.0, 0.05)});
    const auto w = warp(da, p, k);
    const double got = depth_consistency_loss(da, db, w, mode);
    double sum = 0;
    int n = 0;
    for (int r = 0; r < 20; ++r) {
      for (int c = 0; c < 24; ++c) {
        const Eigen::Vector3d x = p * (da.values(r, c) * Eigen::Vector3d((c - k.cx) / k.fx, (r - k.cy) / k.fy, 1));
        const double u = k.fx * x.x() / x.z() + k.cx, v = k.fy * x.y() / x.z() + k.cy;
        if (u < 0 || v < 0 || u > 23 || v > 19 || x.z() <= 0) continue;
        const int c0 = std::min(static_cast<int>(u), 22), r0 = std::min(static_cast<int>(v), 18);
        if (!db.valid(r0, c0) || !db.valid(r0, c0 + 1) || !db.valid(r0 + 1, c0) || !db.valid(r0 + 1, c0 + 1)) continue;
        const double ma = mode == ConsistencyMode::warped_z ? x.z() : da.values(r, c);
        const double mb = bilinear_oracle(db.values, u, v);
        const double term = std::abs(ma - mb) / (ma + mb);
        EXPECT_GE(term, 0.0);
        EXPECT_LT(term, 1.0);
        sum += term;
        ++n;
      }
    }
    ASSERT_GT(n, 0);
    EXPECT_NEAR(got, sum / n, 1e-6);
  }
}

TEST(Consistency, GroundTruthPairIsConsistent) {
  const auto k = pinhole(60, 31.5, 23.5, 64, 48);
  const Eigen::Vector3d n = Eigen::Vector3d(0.2, 0.1, 1.0).normalized();
  const Pose a_to_b = pose_from_6dof({Eigen::Vector3d(0.01, 0.03, -0.02), Eigen::Vector3d(0.04, -0.03, 0.06)});
  const DepthMap da = plane_depth(n, 1.5, Pose::identity(), k);
  const DepthMap db = plane_depth(n, 1.5, a_to_b.inverse(), k);
  // A plane's depth is a projective function of the pixel, so bilinear interpolation error is tiny.
  EXPECT_LT(depth_consistency_loss(da, db, warp(da, a_to_b, k)), 1e-4);
  EXPECT_EQ(consistency_term(2.0, 2.0), 0.0);
  EXPECT_GT(consistency_term(2.0, 2.0 + 1e-9), 0.0);
}

// Central differences of f around each coefficient of x.
template <typename F>
Pd numeric_grad(Pd x, F f, double h = 1e-4) {
  Pd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = f(x);
    x.data()[i] = keep - h;
    const double down = f(x);
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

double rel_error(const Pd& analytic, const Pd& numeric) {
  return (analytic - numeric).matrix().norm() / std::max(numeric.matrix().norm(), 1e-8);
}

struct GradFixture {
  CameraIntrinsics k = pinhole(8, 3.5, 3.5, 8, 8);
  std::vector<Pd> ia, ib;
  Pd depth_a, depth_b;
  Mask valid_a, valid_b;
  Vec6<double> pose;

  explicit GradFixture(uint64_t seed) {
    Rng rng = keyed_rng(seed, "test", "grad");
    for (int c = 0; c < 3; ++c) {
      ia.push_back(random_plane(rng, 8, 8, 0, 1));
      ib.push_back(random_plane(rng, 8, 8, 0, 1));
    }
    depth_a = random_plane(rng, 8, 8, 1.0, 2.0);
    depth_b = random_plane(rng, 8, 8, 1.0, 2.0);
    valid_b = Mask::Constant(8, 8, true);
    pose << 0.03, -0.02, 0.04, 0.06, -0.05, 0.03;
    // Keep only pixels whose warped coordinates sit at least 0.25 px from any lattice line.
    const auto w = warp<double>(depth_a, Mask::Constant(8, 8, true), rigid_from_params(pose), k);
    valid_a = w.valid;
    auto far = [](double x) { return std::abs(x - std::round(x)) >= 0.25; };
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) valid_a(r, c) = valid_a(r, c) && far(w.u(r, c)) && far(w.v(r, c));
  }
};

TEST(Gradients, PhotometricLossMatchesFiniteDifferences) {
  for (uint64_t seed : {1, 2, 3, 8, 9}) {
    GradFixture fx(seed);
    ASSERT_GE(fx.valid_a.count(), 5);
    const auto res = photometric_warp_loss(fx.ia, fx.ib, fx.depth_a, fx.valid_a, fx.pose, fx.k, 0.15, 0.85);
    auto loss = [&](const std::vector<Pd>& ia, const std::vector<Pd>& ib, const Pd& d, const Vec6<double>& p) {
      return photometric_warp_loss(ia, ib, d, fx.valid_a, p, fx.k, 0.15, 0.85).value;
    };
    EXPECT_LT(rel_error(res.d_depth_a, numeric_grad(fx.depth_a, [&](const Pd& d) { return loss(fx.ia, fx.ib, d, fx.pose); })),
              1e-3);
    Pd pose_plane = fx.pose.transpose().array();
    const Pd num_pose = numeric_grad(pose_plane, [&](const Pd& p) {
      return loss(fx.ia, fx.ib, fx.depth_a, Vec6<double>(p.matrix().transpose()));
    });
    EXPECT_LT(rel_error(res.d_pose.transpose().array(), num_pose), 1e-3);
    for (int c = 0; c < 3; ++c) {
      const Pd na = numeric_grad(fx.ia[c], [&](const Pd& x) {
        auto ia = fx.ia;
        ia[c] = x;
        return loss(ia, fx.ib, fx.depth_a, fx.pose);
      });
      EXPECT_LT(rel_error(res.d_image_a[c], na), 1e-3);
      const Pd nb = numeric_grad(fx.ib[c], [&](const Pd& x) {
        auto ib = fx.ib;
        ib[c] = x;
        return loss(fx.ia, ib, fx.depth_a, fx.pose);
      });
      EXPECT_LT(rel_error(res.d_image_b[c], nb), 1e-3);
    }
  }
}

TEST(Gradients, ConsistencyLossMatchesFiniteDifferences) {
  for (auto mode : {ConsistencyMode::warped_z, ConsistencyMode::raw}) {
    for (uint64_t seed : {4, 5, 10, 11}) {
      GradFixture fx(seed);
      const auto res = consistency_warp_loss(fx.depth_a, fx.valid_a, fx.depth_b, fx.valid_b, fx.pose, fx.k, mode);
      ASSERT_GE(res.n_valid, 5);
      auto loss = [&](const Pd& da, const Pd& db, const Vec6<double>& p) {
        return consistency_warp_loss(da, fx.valid_a, db, fx.valid_b, p, fx.k, mode).value;
      };
      EXPECT_LT(rel_error(res.d_depth_a, numeric_grad(fx.depth_a, [&](const Pd& d) { return loss(d, fx.depth_b, fx.pose); })),
                1e-3);
      EXPECT_LT(rel_error(res.d_depth_b, numeric_grad(fx.depth_b, [&](const Pd& d) { return loss(fx.depth_a, d, fx.pose); })),
                1e-3);
      Pd pose_plane = fx.pose.transpose().array();
      const Pd num_pose = numeric_grad(pose_plane, [&](const Pd& p) {
        return loss(fx.depth_a, fx.depth_b, Vec6<double>(p.matrix().transpose()));
      });
      EXPECT_LT(rel_error(res.d_pose.transpose().array(), num_pose), 1e-3);
    }
  }
}

TEST(Gradients, DifferentiableFormsAgreeWithPlainLosses) {
  GradFixture fx(6);
  const auto res = photometric_warp_loss(fx.ia, fx.ib, fx.depth_a, fx.valid_a, fx.pose, fx.k, 0.15, 0.85);
  const auto w = warp<double>(fx.depth_a, fx.valid_a, rigid_from_params(fx.pose), fx.k);
  auto warped = bilinear_sample(fx.ib, w.u, w.v);
  const Mask valid = w.valid && warped.valid;
  for (auto& ch : warped.channels) ch = valid.select(ch, 0.0);
  EXPECT_NEAR(res.value, photometric_loss(fx.ia, warped.channels, valid, 0.15, 0.85), 1e-12);

  const auto cons = consistency_warp_loss(fx.depth_a, fx.valid_a, fx.depth_b, fx.valid_b, fx.pose, fx.k);
  EXPECT_NEAR(cons.value, depth_consistency_loss<double>(fx.depth_a, fx.depth_b, fx.valid_b, w), 1e-12);
}

TEST(Gradients, Deterministic) {
  GradFixture fx(7);
  const auto a = photometric_warp_loss(fx.ia, fx.ib, fx.depth_a, fx.valid_a, fx.pose, fx.k, 0.15, 0.85);
  const auto b = photometric_warp_loss(fx.ia, fx.ib, fx.depth_a, fx.valid_a, fx.pose, fx.k, 0.15, 0.85);
  EXPECT_EQ(a.value, b.value);
  EXPECT_TRUE((a.d_depth_a == b.d_depth_a).all());
  EXPECT_EQ(a.d_pose, b.d_pose);
}

TEST(LossWeights, DefaultsAndValidation) {
  LossWeights w;
  EXPECT_EQ(w.lambda_i, 0.15);
  EXPECT_EQ(w.lambda_s, 0.85);
  EXPECT_EQ(w.w_photo, 0.1);
  EXPECT_NO_THROW(w.validate());
  w.w_cons = -1;
  EXPECT_THROW(w.validate(), ValidationError);
  EXPECT_EQ(consistency_mode_from_string("raw"), ConsistencyMode::raw);
  EXPECT_THROW(consistency_mode_from_string("other"), ValidationError);
}

}  // namespace
}  // namespace toder::geometry
