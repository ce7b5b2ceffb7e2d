#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "toder/core/types.hpp"

namespace toder {

/// Parses one "timestamp tx ty tz qx qy qz qw" record. `line_number` is used for messages only.
inline TimedPose parse_tum_line(const std::string& line, size_t line_number, const std::string& source) {
  std::istringstream in(line);
  double v[8];
  for (double& x : v) {
    if (!(in >> x)) {
      throw ParseError(source + ":" + std::to_string(line_number) + ": expected 8 numeric fields");
    }
  }
  std::string extra;
  if (in >> extra) {
    throw ParseError(source + ":" + std::to_string(line_number) + ": unexpected trailing field '" + extra + "'");
  }
  for (double x : v) {
    if (!std::isfinite(x)) throw ParseError(source + ":" + std::to_string(line_number) + ": non-finite value");
  }
  Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
  const double norm = q.norm();
  if (std::abs(norm - 1.0) > 1e-3) {
    throw ParseError(source + ":" + std::to_string(line_number) + ": quaternion norm " + std::to_string(norm) +
                     " is not unit");
  }
  TimedPose out;
  out.timestamp = v[0];
  // Exact round trips need already-unit quaternions left untouched.
  if (std::abs(norm - 1.0) > 1e-12) q.normalize();
  out.pose.rotation = q;
  out.pose.translation = Eigen::Vector3d(v[1], v[2], v[3]);
  return out;
}

inline std::vector<TimedPose> parse_tum_trajectory(std::istream& in, const std::string& source = "<stream>") {
  std::vector<TimedPose> entries;
  std::string line;
  size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    entries.push_back(parse_tum_line(line, line_number, source));
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const TimedPose& a, const TimedPose& b) { return a.timestamp < b.timestamp; });
  return entries;
}

inline std::vector<TimedPose> read_tum_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trajectory " + path.string());
  return parse_tum_trajectory(in, path.string());
}

inline void format_tum_trajectory(const std::vector<TimedPose>& entries, std::ostream& out) {
  out << "# timestamp tx ty tz qx qy qz qw\n";
  out << std::setprecision(17);
  for (const auto& e : entries) {
    const auto& t = e.pose.translation;
    const auto& q = e.pose.rotation;
    out << e.timestamp << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x() << ' ' << q.y() << ' '
        << q.z() << ' ' << q.w() << '\n';
  }
}

inline void write_tum_trajectory(const std::vector<TimedPose>& entries, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write trajectory " + path.string());
  format_tum_trajectory(entries, out);
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace toder
