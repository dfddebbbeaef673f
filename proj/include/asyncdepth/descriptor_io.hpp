#pragma once

// Key-value text descriptors for cameras and poses.
//
//   # comment
//   fx = 100
//   qw: 1
//
// One `key = value` (or `key: value`) per line. Camera files carry
// fx, fy, cx, cy, width, height, qw, qx, qy, qz, tx, ty, tz; pose files carry
// the last seven (plus an optional timestamp).

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "asyncdepth/errors.hpp"
#include "asyncdepth/geometry.hpp"

namespace asyncdepth {

using KeyValues = std::map<std::string, std::string, std::less<>>;

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline KeyValues parse_key_values(std::istream& is, const std::string& origin = "<stream>") {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = detail::trim(s);
    if (s.empty()) continue;
    auto sep = s.find_first_of("=:");
    if (sep == std::string_view::npos) {
      throw FormatError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key(detail::trim(s.substr(0, sep)));
    std::string value(detail::trim(s.substr(sep + 1)));
    if (key.empty()) throw FormatError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

inline KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return parse_key_values(in, path.string());
}

inline double kv_number(const KeyValues& kv, std::string_view key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("missing field '" + std::string(key) + "'");
  const std::string& s = it->second;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw FormatError("field '" + std::string(key) + "' is not a number: '" + s + "'");
  }
  return v;
}

inline std::uint32_t kv_u32(const KeyValues& kv, std::string_view key) {
  const double v = kv_number(kv, key);
  if (v < 0 || v > std::numeric_limits<std::uint32_t>::max() || v != static_cast<std::uint32_t>(v)) {
    throw FormatError("field '" + std::string(key) + "' is not a non-negative integer");
  }
  return static_cast<std::uint32_t>(v);
}

inline RigidPose pose_from_key_values(const KeyValues& kv) {
  const Eigen::Quaterniond q(kv_number(kv, "qw"), kv_number(kv, "qx"), kv_number(kv, "qy"),
                             kv_number(kv, "qz"));
  const Eigen::Vector3d t(kv_number(kv, "tx"), kv_number(kv, "ty"), kv_number(kv, "tz"));
  return {q, t};
}

inline CameraModel camera_from_key_values(const KeyValues& kv) {
  return CameraModel::pinhole(kv_number(kv, "fx"), kv_number(kv, "fy"), kv_number(kv, "cx"),
                              kv_number(kv, "cy"), kv_u32(kv, "width"), kv_u32(kv, "height"),
                              pose_from_key_values(kv));
}

inline RigidPose load_pose(const std::filesystem::path& path) {
  return pose_from_key_values(load_key_values(path));
}

inline CameraModel load_camera(const std::filesystem::path& path) {
  return camera_from_key_values(load_key_values(path));
}

inline void write_pose_fields(std::ostream& os, const RigidPose& pose) {
  const auto& q = pose.rotation();
  const auto& t = pose.translation();
  os << std::setprecision(17);
  os << "qw = " << q.w() << "\nqx = " << q.x() << "\nqy = " << q.y() << "\nqz = " << q.z()
     << "\ntx = " << t.x() << "\nty = " << t.y() << "\ntz = " << t.z() << "\n";
}

inline void save_pose(const std::filesystem::path& path, const RigidPose& pose) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  write_pose_fields(out, pose);
}

inline void save_camera(const std::filesystem::path& path, const CameraModel& cam) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << std::setprecision(17) << "fx = " << cam.fx() << "\nfy = " << cam.fy()
      << "\ncx = " << cam.cx() << "\ncy = " << cam.cy() << "\nwidth = " << cam.width()
      << "\nheight = " << cam.height() << "\n";
  write_pose_fields(out, cam.extrinsics());
}

}  // namespace asyncdepth
