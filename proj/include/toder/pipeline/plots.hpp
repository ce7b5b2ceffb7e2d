#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "toder/core/image_io.hpp"
#include "toder/training/trainer.hpp"

namespace toder::pipeline {

namespace detail {

inline const cv::Scalar kInk(30, 30, 30);
inline const cv::Scalar kGrid(220, 220, 220);

inline cv::Scalar series_color(size_t i) {
  static const cv::Scalar palette[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44},  {40, 39, 214},
                                       {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127},
                                       {34, 189, 188},  {207, 190, 23}};
  return palette[i % std::size(palette)];
}

inline void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.45,
                 const cv::Scalar& color = kInk) {
  cv::putText(img, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, color, 1, cv::LINE_AA);
}

inline std::string fmt(double v, int digits = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Trailing moving average; keeps curves readable when there are thousands of steps.
inline std::vector<double> smooth(const std::vector<double>& v, size_t window) {
  std::vector<double> out(v.size());
  double sum = 0;
  for (size_t i = 0; i < v.size(); ++i) {
    sum += v[i];
    if (i >= window) sum -= v[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

/// Depth as a color image over [lo, hi]; invalid pixels are black.
inline cv::Mat colorize(const Plane<double>& values, const Mask& valid, double lo, double hi, int colormap) {
  cv::Mat gray(static_cast<int>(values.rows()), static_cast<int>(values.cols()), CV_8UC1);
  const double span = hi > lo ? hi - lo : 1.0;
  for (int r = 0; r < gray.rows; ++r)
    for (int c = 0; c < gray.cols; ++c)
      gray.at<uint8_t>(r, c) = static_cast<uint8_t>(std::lround(255.0 * std::clamp((values(r, c) - lo) / span, 0.0, 1.0)));
  cv::Mat color;
  cv::applyColorMap(gray, color, colormap);
  for (int r = 0; r < color.rows; ++r)
    for (int c = 0; c < color.cols; ++c)
      if (!valid(r, c)) color.at<cv::Vec3b>(r, c) = cv::Vec3b(0, 0, 0);
  return color;
}

inline cv::Mat upscale(const cv::Mat& m, int min_side) {
  const int f = std::max(1, (min_side + std::min(m.rows, m.cols) - 1) / std::min(m.rows, m.cols));
  cv::Mat out;
  cv::resize(m, out, cv::Size(m.cols * f, m.rows * f), 0, 0, cv::INTER_NEAREST);
  return out;
}

}  // namespace detail

inline void write_png(const cv::Mat& img, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (img.empty() || !cv::imwrite(path.string(), img)) throw Error("cannot write image " + path.string());
}

/// One panel per stage with every loss term (log scale) against the step.
inline cv::Mat loss_curves(const std::vector<train::LossRecord>& history) {
  require(!history.empty(), "plot: loss history is empty");
  // Steps alternate between objectives (labeled vs unlabeled batches), so totals are split by
  // the terms they sum.
  std::map<long, std::string> signature;
  for (const auto& r : history)
    if (r.term != "total") signature[r.step] += (signature[r.step].empty() ? "" : "+") + r.term;
  std::map<int, std::set<std::string>> kinds;
  for (const auto& r : history)
    if (r.term == "total") kinds[r.stage].insert(signature[r.step]);
  std::map<int, std::map<std::string, std::vector<std::pair<long, double>>>> stages;
  for (const auto& r : history) {
    if (!std::isfinite(r.value) || r.value <= 0) continue;
    std::string name = r.term;
    if (name == "total" && kinds[r.stage].size() > 1) name = "total (" + signature[r.step] + ")";
    if (name.size() > 22) name = name.substr(0, 20) + "..";
    stages[r.stage][name].emplace_back(r.step, r.value);
  }

  const int w = 1000, h = 300, left = 70, right = 230, top = 30, bottom = 40;
  cv::Mat img(h * std::max<int>(1, static_cast<int>(stages.size())), w, CV_8UC3, cv::Scalar(255, 255, 255));
  int row = 0;
  for (const auto& [stage, terms] : stages) {
    cv::Mat panel = img(cv::Rect(0, row++ * h, w, h));
    long s0 = std::numeric_limits<long>::max(), s1 = std::numeric_limits<long>::min();
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::map<std::string, std::vector<double>> curves;
    for (const auto& [term, pts] : terms) {
      std::vector<double> logs;
      for (const auto& [step, v] : pts) {
        s0 = std::min(s0, step);
        s1 = std::max(s1, step);
        logs.push_back(std::log10(v));
      }
      curves[term] = detail::smooth(logs, std::max<size_t>(1, logs.size() / 50));
      for (double v : curves[term]) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (hi - lo < 1e-6) {
      lo -= 0.5;
      hi += 0.5;
    }
    const int pw = w - left - right, ph = h - top - bottom;
    auto to_px = [&](long step, double v) {
      const double x = s1 > s0 ? static_cast<double>(step - s0) / static_cast<double>(s1 - s0) : 0.5;
      return cv::Point(left + static_cast<int>(x * pw), top + static_cast<int>((hi - v) / (hi - lo) * ph));
    };
    for (int g = 0; g <= 4; ++g) {
      const double v = lo + (hi - lo) * g / 4.0;
      const cv::Point p = to_px(s0, v);
      cv::line(panel, p, cv::Point(left + pw, p.y), detail::kGrid);
      detail::text(panel, "1e" + detail::fmt(v, 1), cv::Point(5, p.y + 4), 0.4);
    }
    cv::rectangle(panel, cv::Rect(left, top, pw, ph), detail::kInk);
    detail::text(panel, "stage " + std::to_string(stage) + " losses (log10, smoothed)", cv::Point(left, 20), 0.5);
    detail::text(panel, "step " + std::to_string(s0), cv::Point(left, h - 15), 0.4);
    detail::text(panel, "step " + std::to_string(s1), cv::Point(left + pw - 80, h - 15), 0.4);
    size_t k = 0;
    for (const auto& [term, ys] : curves) {
      const auto& pts = terms.at(term);
      const cv::Scalar color = detail::series_color(k);
      std::vector<cv::Point> poly;
      for (size_t i = 0; i < ys.size(); ++i) poly.push_back(to_px(pts[i].first, ys[i]));
      cv::polylines(panel, poly, false, color, term.starts_with("total") ? 2 : 1, cv::LINE_AA);
      const int ly = top + 12 + static_cast<int>(k) * 18;
      cv::line(panel, cv::Point(w - right + 10, ly - 4), cv::Point(w - right + 30, ly - 4), color, 2);
      detail::text(panel, term, cv::Point(w - right + 36, ly), 0.45);
      ++k;
    }
  }
  return img;
}

/// Input, aligned prediction, ground truth and absolute-relative error, side by side.
inline cv::Mat depth_panel(const RgbImage& rgb, const DepthMap& prediction, const DepthMap& gt, bool align_median) {
  require(prediction.rows() == gt.rows() && prediction.cols() == gt.cols(), "plot: prediction and gt sizes differ");
  const Mask valid = gt.valid && prediction.valid && (prediction.values > 0);
  double scale = 1.0;
  if (align_median) {
    std::vector<double> p, g;
    for (int r = 0; r < gt.rows(); ++r)
      for (int c = 0; c < gt.cols(); ++c)
        if (valid(r, c)) {
          p.push_back(prediction.values(r, c));
          g.push_back(gt.values(r, c));
        }
    if (!p.empty()) scale = eval::detail::median_of(g) / eval::detail::median_of(p);
  }
  // Shown as inverse depth so the near wall, where most pixels are, gets the color range.
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (int r = 0; r < gt.rows(); ++r)
    for (int c = 0; c < gt.cols(); ++c)
      if (gt.valid(r, c) && gt.values(r, c) > 0) {
        lo = std::min(lo, 1.0 / gt.values(r, c));
        hi = std::max(hi, 1.0 / gt.values(r, c));
      }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  const Plane<double> aligned = prediction.values * scale;
  const Plane<double> inv_pred = (aligned > 0).select(aligned.inverse(), 0.0);
  const Plane<double> inv_gt = (gt.values > 0).select(gt.values.inverse(), 0.0);
  Plane<double> err = Plane<double>::Zero(gt.rows(), gt.cols());
  for (int r = 0; r < gt.rows(); ++r)
    for (int c = 0; c < gt.cols(); ++c)
      if (valid(r, c)) err(r, c) = std::abs(aligned(r, c) - gt.values(r, c)) / gt.values(r, c);

  const int side = 192;
  const std::vector<std::pair<std::string, cv::Mat>> tiles{
      {"input", detail::upscale(mat_from_rgb(rgb), side)},
      {"prediction, 1/z", detail::upscale(detail::colorize(inv_pred, prediction.valid, lo, hi, cv::COLORMAP_VIRIDIS), side)},
      {"ground truth, 1/z", detail::upscale(detail::colorize(inv_gt, gt.valid, lo, hi, cv::COLORMAP_VIRIDIS), side)},
      {"abs rel error 0..0.5", detail::upscale(detail::colorize(err, valid, 0.0, 0.5, cv::COLORMAP_INFERNO), side)}};
  const int th = tiles[0].second.rows, tw = tiles[0].second.cols, header = 24, gap = 6;
  cv::Mat out(th + header, static_cast<int>(tiles.size()) * (tw + gap) - gap, CV_8UC3, cv::Scalar(255, 255, 255));
  for (size_t i = 0; i < tiles.size(); ++i) {
    const int x = static_cast<int>(i) * (tw + gap);
    tiles[i].second.copyTo(out(cv::Rect(x, header, tw, th)));
    detail::text(out, tiles[i].first, cv::Point(x + 4, 17), 0.45);
  }
  return out;
}

/// Plain text grid rendered to an image.
inline cv::Mat table_image(const std::string& title, const std::vector<std::string>& header,
                           const std::vector<std::vector<std::string>>& rows) {
  require(!header.empty(), "plot: table needs a header");
  std::vector<int> widths(header.size(), 0);
  auto measure = [](const std::string& s) {
    int base = 0;
    return cv::getTextSize(s, cv::FONT_HERSHEY_SIMPLEX, 0.5, 1, &base).width;
  };
  for (size_t c = 0; c < header.size(); ++c) widths[c] = measure(header[c]);
  for (const auto& r : rows)
    for (size_t c = 0; c < r.size() && c < widths.size(); ++c) widths[c] = std::max(widths[c], measure(r[c]));
  const int pad = 16, line = 26, top = 40;
  int total = pad;
  for (int w : widths) total += w + pad;
  total = std::max(total, measure(title) + 2 * pad);
  cv::Mat img(top + line * static_cast<int>(rows.size() + 1) + pad, total, CV_8UC3, cv::Scalar(255, 255, 255));
  detail::text(img, title, cv::Point(pad, 24), 0.55);
  auto draw_row = [&](const std::vector<std::string>& cells, int y) {
    int x = pad;
    for (size_t c = 0; c < widths.size(); ++c) {
      if (c < cells.size()) detail::text(img, cells[c], cv::Point(x, y), 0.5);
      x += widths[c] + pad;
    }
  };
  draw_row(header, top + 18);
  cv::line(img, cv::Point(pad / 2, top + 26), cv::Point(total - pad / 2, top + 26), detail::kInk);
  for (size_t i = 0; i < rows.size(); ++i) draw_row(rows[i], top + 18 + line * static_cast<int>(i + 1));
  return img;
}

inline const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols{"abs_rel", "sq_rel", "rmse", "rmse_log", "d1", "d2", "d3"};
  return cols;
}

/// Metric cells for a JSON object holding (a subset of) the depth metric keys.
inline std::vector<std::string> metric_cells(const std::string& label, const nlohmann::json& m) {
  std::vector<std::string> row{label};
  for (const auto& k : metric_columns())
    row.push_back(m.contains(k) && m[k].is_number() ? detail::fmt(m[k].get<double>()) : "-");
  return row;
}

}  // namespace toder::pipeline
