#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "toder/core/manifest.hpp"
#include "toder/core/types.hpp"

namespace toder::eval {

enum class Align { none, median };

inline std::string to_string(Align a) { return a == Align::none ? "none" : "median"; }

inline Align align_from_string(const std::string& s) {
  if (s == "none") return Align::none;
  if (s == "median") return Align::median;
  throw ValidationError("unknown alignment '" + s + "' (expected none or median)");
}

struct DepthMetrics {
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0;
  double d1 = 0, d2 = 0, d3 = 0;
  long n_pixels = 0;
  /// Pixels left out of rmse_log because the (aligned) prediction was not positive.
  long log_excluded = 0;
};

struct MetricOptions {
  Align align = Align::median;
  /// Clamp predictions into the ground-truth range before scoring.
  bool clamp_to_gt = false;
};

namespace detail {
inline double median_of(std::vector<double> v) {
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<long>(mid));
  return 0.5 * (lower + upper);
}
}  // namespace detail

inline DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt, const MetricOptions& opt = {}) {
  require(pred.rows() == gt.rows() && pred.cols() == gt.cols(), "depth_metrics: prediction and ground truth differ in size");
  std::vector<double> p, g;
  for (int r = 0; r < gt.rows(); ++r)
    for (int c = 0; c < gt.cols(); ++c) {
      if (!pred.valid(r, c) || !gt.valid(r, c)) continue;
      const double gv = gt.values(r, c), pv = pred.values(r, c);
      if (!(gv > 0) || !std::isfinite(pv)) continue;
      p.push_back(pv);
      g.push_back(gv);
    }
  require(!p.empty(), "depth_metrics: prediction and ground truth share no valid pixel");

  if (opt.align == Align::median) {
    const double mp = detail::median_of(p), mg = detail::median_of(g);
    require(mp > 0, "depth_metrics: median prediction is not positive, cannot align");
    for (double& v : p) v = v / mp * mg;
  }
  if (opt.clamp_to_gt) {
    const auto [lo, hi] = std::minmax_element(g.begin(), g.end());
    for (double& v : p) v = std::clamp(v, *lo, *hi);
  }

  DepthMetrics m;
  m.n_pixels = static_cast<long>(p.size());
  double log_sq = 0;
  long n_log = 0, n1 = 0, n2 = 0, n3 = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - g[i];
    m.abs_rel += std::abs(d) / g[i];
    m.sq_rel += d * d / g[i];
    m.rmse += d * d;
    if (p[i] > 0) {
      const double l = std::log(p[i]) - std::log(g[i]);
      log_sq += l * l;
      ++n_log;
      const double ratio = std::max(p[i] / g[i], g[i] / p[i]);
      n1 += ratio < 1.25;
      n2 += ratio < 1.25 * 1.25;
      n3 += ratio < 1.25 * 1.25 * 1.25;
    }
  }
  const double n = static_cast<double>(p.size());
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(m.rmse / n);
  m.rmse_log = n_log > 0 ? std::sqrt(log_sq / static_cast<double>(n_log)) : 0.0;
  m.log_excluded = m.n_pixels - n_log;
  m.d1 = static_cast<double>(n1) / n;
  m.d2 = static_cast<double>(n2) / n;
  m.d3 = static_cast<double>(n3) / n;
  return m;
}

inline DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt, Align align) {
  return depth_metrics(pred, gt, MetricOptions{align, false});
}

/// Element-wise mean of several metric records.
inline DepthMetrics average(const std::vector<DepthMetrics>& ms) {
  require(!ms.empty(), "average: no metrics");
  DepthMetrics out;
  for (const auto& m : ms) {
    out.abs_rel += m.abs_rel;
    out.sq_rel += m.sq_rel;
    out.rmse += m.rmse;
    out.rmse_log += m.rmse_log;
    out.d1 += m.d1;
    out.d2 += m.d2;
    out.d3 += m.d3;
    out.n_pixels += m.n_pixels;
    out.log_excluded += m.log_excluded;
  }
  const double n = static_cast<double>(ms.size());
  out.abs_rel /= n;
  out.sq_rel /= n;
  out.rmse /= n;
  out.rmse_log /= n;
  out.d1 /= n;
  out.d2 /= n;
  out.d3 /= n;
  return out;
}

inline nlohmann::json to_json(const DepthMetrics& m) {
  return {{"abs_rel", m.abs_rel}, {"sq_rel", m.sq_rel}, {"rmse", m.rmse}, {"rmse_log", m.rmse_log},
          {"d1", m.d1},           {"d2", m.d2},         {"d3", m.d3},     {"n_pixels", m.n_pixels},
          {"log_excluded", m.log_excluded}};
}

inline DepthMetrics metrics_from_json(const nlohmann::json& j) {
  DepthMetrics m;
  m.abs_rel = j.at("abs_rel");
  m.sq_rel = j.at("sq_rel");
  m.rmse = j.at("rmse");
  m.rmse_log = j.at("rmse_log");
  m.d1 = j.at("d1");
  m.d2 = j.at("d2");
  m.d3 = j.at("d3");
  m.n_pixels = j.value("n_pixels", 0L);
  m.log_excluded = j.value("log_excluded", 0L);
  return m;
}

/// Reference row, kept in reports for comparison only.
inline nlohmann::json reference_baseline() { return {{"abs_rel", 0.144}, {"rmse", 2.190}, {"d1", 0.818}}; }

using DepthPredictor = std::function<DepthMap(const Frame&)>;

struct FrameResult {
  std::string set;
  size_t index = 0;
  double timestamp = 0;
  DepthMetrics metrics;
};

struct SetResult {
  std::string name;
  DepthMetrics metrics;  // mean over frames
  size_t n_frames = 0;
};

struct TestsetReport {
  std::vector<SetResult> per_set;
  DepthMetrics mean;  // mean over sets
  std::vector<FrameResult> frames;
  MetricOptions options;
};

/// Scores every frame of every set; per-frame metrics are averaged within a set, then set
/// means are averaged.
inline TestsetReport evaluate_testsets(const DepthPredictor& model, const std::vector<DatasetManifest>& sets,
                                       const MetricOptions& opt = {}) {
  require(!sets.empty(), "evaluate_testsets: no test sets");
  TestsetReport report;
  report.options = opt;
  std::vector<DepthMetrics> set_means;
  for (const auto& m : sets) {
    const std::string name = m.name.empty() ? m.root.filename().string() : m.name;
    require(!m.frames.empty(), "evaluate_testsets: set '" + name + "' has no frames");
    std::vector<DepthMetrics> per_frame;
    for (size_t i = 0; i < m.frames.size(); ++i) {
      if (m.frames[i].depth.empty())
        throw ValidationError("evaluate_testsets: set '" + name + "' has no ground-truth depth");
      const DepthMap gt = load_depth(m, i);
      const DepthMetrics dm = depth_metrics(model(load_frame(m, i)), gt, opt);
      per_frame.push_back(dm);
      report.frames.push_back({name, i, m.frames[i].timestamp, dm});
    }
    report.per_set.push_back({name, average(per_frame), per_frame.size()});
    set_means.push_back(report.per_set.back().metrics);
  }
  report.mean = average(set_means);
  return report;
}

inline nlohmann::json to_json(const TestsetReport& r) {
  nlohmann::json j;
  j["per_set"] = nlohmann::json::array();
  for (const auto& s : r.per_set) {
    nlohmann::json e = to_json(s.metrics);
    e["name"] = s.name;
    e["n_frames"] = s.n_frames;
    j["per_set"].push_back(std::move(e));
  }
  j["mean"] = to_json(r.mean);
  j["align"] = to_string(r.options.align);
  j["clamp_to_gt"] = r.options.clamp_to_gt;
  j["reference_baseline"] = reference_baseline();
  return j;
}

inline std::string frames_csv(const TestsetReport& r) {
  std::string out = "set,index,timestamp,abs_rel,sq_rel,rmse,rmse_log,d1,d2,d3\n";
  char buf[320];
  for (const auto& f : r.frames) {
    const auto& m = f.metrics;
    std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", f.set.c_str(), f.index,
                  f.timestamp, m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.d1, m.d2, m.d3);
    out += buf;
  }
  return out;
}

}  // namespace toder::eval
