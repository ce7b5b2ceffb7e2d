#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "test_util.hpp"
#include "toder/evaluation/metrics.hpp"
#include "toder/reconstruction/fusion.hpp"
#include "toder/synthcolon/dataset.hpp"

using namespace toder;
using namespace toder::eval;

namespace {

DepthMap random_depth(int rows, int cols, uint64_t seed, double lo = 0.5, double hi = 8.0, double holes = 0.1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi), h(0.0, 1.0);
  DepthMap d(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      d.values(r, c) = u(rng);
      d.valid(r, c) = h(rng) >= holes;
    }
  return d;
}

/// Straightforward re-derivation of the metric definitions, one pixel at a time.
DepthMetrics oracle(const DepthMap& pred, const DepthMap& gt, bool median) {
  std::vector<double> p, g;
  for (int r = 0; r < gt.rows(); ++r)
    for (int c = 0; c < gt.cols(); ++c)
      if (pred.valid(r, c) && gt.valid(r, c) && gt.values(r, c) > 0) {
        p.push_back(pred.values(r, c));
        g.push_back(gt.values(r, c));
      }
  auto med = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  const double s = median ? med(g) / med(p) : 1.0;
  DepthMetrics m;
  double are = 0, sre = 0, se = 0, sle = 0;
  int a1 = 0, a2 = 0, a3 = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double x = p[i] * s, y = g[i];
    are += std::fabs(x - y) / y;
    sre += (x - y) * (x - y) / y;
    se += (x - y) * (x - y);
    sle += std::pow(std::log(x) - std::log(y), 2);
    const double t = std::max(x / y, y / x);
    a1 += t < 1.25;
    a2 += t < std::pow(1.25, 2);
    a3 += t < std::pow(1.25, 3);
  }
  const double n = static_cast<double>(p.size());
  m.abs_rel = are / n;
  m.sq_rel = sre / n;
  m.rmse = std::sqrt(se / n);
  m.rmse_log = std::sqrt(sle / n);
  m.d1 = a1 / n;
  m.d2 = a2 / n;
  m.d3 = a3 / n;
  m.n_pixels = static_cast<long>(p.size());
  return m;
}

void expect_metrics_near(const DepthMetrics& a, const DepthMetrics& b, double tol) {
  EXPECT_NEAR(a.abs_rel, b.abs_rel, tol);
  EXPECT_NEAR(a.sq_rel, b.sq_rel, tol);
  EXPECT_NEAR(a.rmse, b.rmse, tol);
  EXPECT_NEAR(a.rmse_log, b.rmse_log, tol);
  EXPECT_NEAR(a.d1, b.d1, tol);
  EXPECT_NEAR(a.d2, b.d2, tol);
  EXPECT_NEAR(a.d3, b.d3, tol);
}

DepthMap scaled(const DepthMap& d, double k) {
  DepthMap out = d;
  out.values *= k;
  return out;
}

}  // namespace

TEST(Metrics, MatchScalarOracle) {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const DepthMap gt = random_depth(17, 23, seed), pred = random_depth(17, 23, seed + 100, 0.3, 9.0);
    for (bool median : {false, true}) {
      const DepthMetrics m = depth_metrics(pred, gt, median ? Align::median : Align::none);
      const DepthMetrics o = oracle(pred, gt, median);
      expect_metrics_near(m, o, 1e-9);
      EXPECT_EQ(m.n_pixels, o.n_pixels);
      EXPECT_EQ(m.log_excluded, 0);
    }
  }
}

TEST(Metrics, ClosedFormUniformOverestimate) {
  const DepthMap gt = random_depth(12, 9, 4, 1.0, 5.0, 0.0);
  const double mean_gt = gt.values.mean(), rms_gt = std::sqrt(gt.values.square().mean());

  const DepthMetrics a = depth_metrics(scaled(gt, 1.2), gt, Align::none);
  EXPECT_NEAR(a.abs_rel, 0.2, 1e-12);
  EXPECT_NEAR(a.sq_rel, 0.04 * mean_gt, 1e-12);
  EXPECT_NEAR(a.rmse, 0.2 * rms_gt, 1e-12);
  EXPECT_NEAR(a.rmse_log, std::log(1.2), 1e-12);
  EXPECT_EQ(a.d1, 1.0);
  EXPECT_EQ(a.d2, 1.0);
  EXPECT_EQ(a.d3, 1.0);

  const DepthMetrics b = depth_metrics(scaled(gt, 2.0), gt, Align::none);
  EXPECT_NEAR(b.abs_rel, 1.0, 1e-12);
  EXPECT_NEAR(b.rmse_log, std::log(2.0), 1e-12);
  EXPECT_EQ(b.d1, 0.0);
  EXPECT_EQ(b.d2, 0.0);
  EXPECT_EQ(b.d3, 0.0);

  for (double k : {1.2, 2.0}) {
    const DepthMetrics m = depth_metrics(scaled(gt, k), gt, Align::median);
    EXPECT_NEAR(m.abs_rel, 0.0, 1e-12);
    EXPECT_NEAR(m.rmse, 0.0, 1e-12);
    EXPECT_EQ(m.d1, 1.0);
  }
}

TEST(Metrics, MedianAlignmentIsScaleInvariant) {
  const DepthMap gt = random_depth(20, 20, 7), pred = random_depth(20, 20, 8);
  const DepthMetrics base = depth_metrics(pred, gt, Align::median);
  // Power-of-two factors are exact in binary floating point.
  for (double k : {0.25, 0.5, 2.0, 8.0, 1024.0}) {
    const DepthMetrics m = depth_metrics(scaled(pred, k), gt, Align::median);
    EXPECT_EQ(m.abs_rel, base.abs_rel) << k;
    EXPECT_EQ(m.sq_rel, base.sq_rel) << k;
    EXPECT_EQ(m.rmse, base.rmse) << k;
    EXPECT_EQ(m.rmse_log, base.rmse_log) << k;
    EXPECT_EQ(m.d1, base.d1) << k;
  }
  for (double k : {0.37, 3.3, 17.9}) {
    const DepthMetrics m = depth_metrics(scaled(pred, k), gt, Align::median);
    EXPECT_NEAR(m.abs_rel, base.abs_rel, 1e-12 * base.abs_rel) << k;
    EXPECT_NEAR(m.rmse, base.rmse, 1e-12 * base.rmse) << k;
    EXPECT_NEAR(m.rmse_log, base.rmse_log, 1e-12 * base.rmse_log) << k;
  }
}

TEST(Metrics, ErrorGrowsWithPerturbation) {
  const DepthMap gt = random_depth(16, 16, 9, 1.0, 6.0, 0.0);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  Plane<double> noise(16, 16);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) noise(r, c) = n(rng);
  double prev_abs = -1, prev_rmse = -1, prev_d1 = 2;
  for (double amp : {0.0, 0.05, 0.1, 0.2, 0.4}) {
    DepthMap pred = gt;
    pred.values = gt.values * (amp * noise).exp();
    const DepthMetrics m = depth_metrics(pred, gt, Align::none);
    EXPECT_GT(m.abs_rel, prev_abs);
    EXPECT_GT(m.rmse, prev_rmse);
    EXPECT_LE(m.d1, prev_d1);
    EXPECT_LE(m.d1, m.d2);
    EXPECT_LE(m.d2, m.d3);
    prev_abs = m.abs_rel;
    prev_rmse = m.rmse;
    prev_d1 = m.d1;
  }
}

TEST(Metrics, NonPositivePredictionsExcludedFromLogAndFailThresholds) {
  DepthMap gt(1, 4), pred(1, 4);
  gt.values << 1, 2, 3, 4;
  pred.values << 1, 2, 3, -1;
  gt.valid.setConstant(true);
  pred.valid.setConstant(true);
  const DepthMetrics m = depth_metrics(pred, gt, Align::none);
  EXPECT_EQ(m.n_pixels, 4);
  EXPECT_EQ(m.log_excluded, 1);
  EXPECT_NEAR(m.rmse_log, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(m.d1, 0.75);
  EXPECT_DOUBLE_EQ(m.abs_rel, 5.0 / 4.0 / 4.0);
}

TEST(Metrics, ClampLimitsToGroundTruthRange) {
  DepthMap gt(1, 3), pred(1, 3);
  gt.values << 1, 2, 4;
  pred.values << 0.5, 2, 8;
  gt.valid.setConstant(true);
  pred.valid.setConstant(true);
  const DepthMetrics m = depth_metrics(pred, gt, MetricOptions{Align::none, true});
  EXPECT_NEAR(m.abs_rel, 0.0, 1e-15);
}

TEST(Metrics, RejectsMismatchedOrEmptyInput) {
  EXPECT_THROW(depth_metrics(DepthMap(3, 3), DepthMap(3, 4), Align::none), ValidationError);
  EXPECT_THROW(depth_metrics(DepthMap(3, 3), DepthMap(3, 3), Align::none), ValidationError);
}

TEST(Metrics, EvenCountMedianAveragesMiddlePair) {
  EXPECT_DOUBLE_EQ(eval::detail::median_of({4, 1, 3, 2}), 2.5);
  EXPECT_DOUBLE_EQ(eval::detail::median_of({5, 1, 3}), 3.0);
}

TEST(Metrics, JsonRoundTrip) {
  const DepthMetrics m = depth_metrics(random_depth(9, 9, 1), random_depth(9, 9, 2), Align::median);
  const DepthMetrics b = metrics_from_json(to_json(m));
  expect_metrics_near(b, m, 0.0);
  EXPECT_EQ(b.n_pixels, m.n_pixels);
}

namespace {

std::vector<DatasetManifest> small_testsets(const std::filesystem::path& dir) {
  synthcolon::DatasetRequest req;
  req.colon = synthcolon::ColonSpec::procedural(10.0, 0.5, 0.12, 0.5, 2);
  req.style = synthcolon::TextureStyle::style_b();
  req.tag = StyleTag::B;
  req.render.intrinsics = CameraIntrinsics::from_fov(16, 12, 100.0 * std::numbers::pi / 180.0);
  req.n_train = 2;
  req.n_test_sets = 2;
  req.n_test = 3;
  req.out_dir = dir;
  req.seed = 2;
  synthcolon::generate_dataset(req);
  const auto splits = synthcolon::load_dataset_splits(dir);
  return {splits.begin() + 1, splits.end()};
}

}  // namespace

TEST(Testsets, GroundTruthPredictorScoresPerfect) {
  TempDir dir;
  const auto sets = small_testsets(dir.path());
  // Frames are visited set by set in order; the predictor returns a scaled copy of the stored
  // depth, which median alignment maps back exactly.
  std::vector<std::pair<const DatasetManifest*, size_t>> order;
  for (const auto& s : sets)
    for (size_t i = 0; i < s.frames.size(); ++i) order.emplace_back(&s, i);
  size_t next = 0;
  const DepthPredictor oracle_model = [&](const Frame& f) {
    const auto [set, i] = order.at(next++);
    EXPECT_EQ(f.timestamp, set->frames[i].timestamp);
    return scaled(load_depth(*set, i), 3.0);
  };
  const TestsetReport r = evaluate_testsets(oracle_model, sets);
  ASSERT_EQ(r.per_set.size(), 2u);
  EXPECT_EQ(r.frames.size(), 6u);
  EXPECT_NEAR(r.mean.abs_rel, 0.0, 1e-12);
  EXPECT_NEAR(r.mean.rmse, 0.0, 1e-12);
  EXPECT_EQ(r.mean.d1, 1.0);
  const auto j = to_json(r);
  EXPECT_EQ(j.at("per_set").size(), 2u);
  EXPECT_DOUBLE_EQ(j.at("reference_baseline").at("abs_rel").get<double>(), 0.144);
}

TEST(Testsets, MeanIsOverSetsOfFrameMeans) {
  TempDir dir;
  const auto sets = small_testsets(dir.path());
  const DepthPredictor constant_model = [](const Frame& f) {
    DepthMap d(f.rgb.rows(), f.rgb.cols());
    d.values.setConstant(1.0);
    d.valid.setConstant(true);
    return d;
  };
  const TestsetReport r = evaluate_testsets(constant_model, sets);
  for (const auto& s : r.per_set) {
    double sum = 0;
    int n = 0;
    for (const auto& f : r.frames)
      if (f.set == s.name) {
        sum += f.metrics.abs_rel;
        ++n;
      }
    EXPECT_NEAR(s.metrics.abs_rel, sum / n, 1e-15);
  }
  EXPECT_NEAR(r.mean.abs_rel, 0.5 * (r.per_set[0].metrics.abs_rel + r.per_set[1].metrics.abs_rel), 1e-15);
  const std::string csv = frames_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST(Testsets, IdenticalSetsGiveTheSetScore) {
  TempDir dir;
  const auto sets = small_testsets(dir.path());
  const DepthPredictor model = [](const Frame& f) {
    DepthMap d(f.rgb.rows(), f.rgb.cols());
    for (int r = 0; r < d.rows(); ++r)
      for (int c = 0; c < d.cols(); ++c) d.values(r, c) = 1.0 + 0.1 * r + f.rgb.channels[0](r, c);
    d.valid.setConstant(true);
    return d;
  };
  const TestsetReport one = evaluate_testsets(model, {sets[0]});
  const TestsetReport twice = evaluate_testsets(model, {sets[0], sets[0]});
  EXPECT_DOUBLE_EQ(twice.mean.abs_rel, one.mean.abs_rel);
  EXPECT_DOUBLE_EQ(twice.mean.rmse, one.mean.rmse);
}

// ---------------------------------------------------------------- fusion

using recon::FuseMode;
using recon::fuse_depths;

TEST(Fusion, AlignsSourceStyleMapToTarget) {
  const DepthMap t = random_depth(10, 10, 1, 1, 4, 0.0);
  const DepthMap f = fuse_depths(t, scaled(t, 0.5)).depth;
  EXPECT_TRUE(f.valid.all());
  EXPECT_LT((f.values - t.values).abs().maxCoeff(), 1e-12);
  EXPECT_NEAR(fuse_depths(t, scaled(t, 0.5)).scale, 2.0, 1e-12);
}

TEST(Fusion, ModesCombinePointwise) {
  DepthMap a(1, 3), b(1, 3);
  a.values << 1, 2, 3;
  b.values << 3, 2, 1;
  a.valid.setConstant(true);
  b.valid.setConstant(true);
  // Equal medians, so the scale is 1.
  EXPECT_DOUBLE_EQ(fuse_depths(a, b, FuseMode::average).depth.values(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(fuse_depths(a, b, FuseMode::min).depth.values(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(fuse_depths(a, b, FuseMode::max).depth.values(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(fuse_depths(a, b, FuseMode::target_only).depth.values(0, 2), 3.0);
}

TEST(Fusion, MaskIsUnionOfInputs) {
  DepthMap a(1, 4), b(1, 4);
  a.values << 1, 1, 1, 1;
  b.values << 2, 2, 2, 2;
  a.valid << true, true, false, false;
  b.valid << true, false, true, false;
  const auto f = fuse_depths(a, b);
  EXPECT_TRUE(f.aligned);
  EXPECT_DOUBLE_EQ(f.scale, 0.5);
  EXPECT_TRUE(f.depth.valid(0, 0) && f.depth.valid(0, 1) && f.depth.valid(0, 2));
  EXPECT_FALSE(f.depth.valid(0, 3));
  EXPECT_DOUBLE_EQ(f.depth.values(0, 2), 1.0);
  EXPECT_FALSE(fuse_depths(a, b, FuseMode::target_only).depth.valid(0, 2));
}

TEST(Fusion, DisjointMasksFallBackUnaligned) {
  DepthMap a(1, 2), b(1, 2);
  a.values << 1, 1;
  b.values << 5, 5;
  a.valid << true, false;
  b.valid << false, true;
  const auto f = fuse_depths(a, b);
  EXPECT_FALSE(f.aligned);
  EXPECT_DOUBLE_EQ(f.scale, 1.0);
  EXPECT_DOUBLE_EQ(f.depth.values(0, 1), 5.0);
  EXPECT_THROW(fuse_depths(DepthMap(2, 2), DepthMap(2, 3)), ValidationError);
}

TEST(Fusion, ModeNamesRoundTrip) {
  for (auto m : {FuseMode::average, FuseMode::min, FuseMode::max, FuseMode::target_only})
    EXPECT_EQ(recon::fuse_mode_from_string(recon::to_string(m)), m);
  EXPECT_THROW(recon::fuse_mode_from_string("median"), ValidationError);
}
