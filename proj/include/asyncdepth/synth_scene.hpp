#pragma once

// Synthetic multi-traversal worlds with closed-form geometry: a ground plane,
// yawed boxes and an idealized ring LiDAR. Used as ground truth for the
// densify/render pipeline and to produce demo stores.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "asyncdepth/depth_renderer.hpp"
#include "asyncdepth/descriptor_io.hpp"
#include "asyncdepth/errors.hpp"
#include "asyncdepth/geometry.hpp"
#include "asyncdepth/traversal_store.hpp"

namespace asyncdepth::synth {

inline constexpr double kDegToRad = std::numbers::pi / 180.0;

/// Axis-aligned box in its own frame, yawed about +z around its center.
struct Box {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  double yaw_deg = 0.0;
};

struct LidarModel {
  std::uint32_t rings = 32;
  double elevation_min_deg = -15.0;
  double elevation_max_deg = 15.0;
  double azimuth_step_deg = 0.5;
  double max_range = 100.0;
  double mount_height = 1.8;
  double range_noise = 0.0;  // std of additive Gaussian range noise, meters
};

struct SceneSpec {
  std::optional<double> ground_z = 0.0;
  std::vector<Box> static_boxes;
  std::vector<std::vector<Box>> transients;  // indexed by traversal
  std::vector<Eigen::Vector3d> route;        // road-level polyline
  LidarModel lidar;
  double jitter_t = 0.05;    // per-frame lateral pose jitter std, meters
  double jitter_yaw = 0.1;   // per-frame yaw jitter std, degrees
  std::uint64_t seed = 0;

  std::span<const Box> transients_of(std::size_t traversal) const {
    if (traversal < transients.size()) return transients[traversal];
    return {};
  }

  double route_length() const {
    double len = 0.0;
    for (std::size_t i = 1; i < route.size(); ++i) len += (route[i] - route[i - 1]).norm();
    return len;
  }

  void validate() const {
    auto check_box = [](const Box& b) {
      if (!(b.size.minCoeff() > 0.0) || !b.center.allFinite() || !std::isfinite(b.yaw_deg)) {
        throw ContractViolation("SceneSpec: degenerate box");
      }
    };
    for (const auto& b : static_boxes) check_box(b);
    for (const auto& set : transients) {
      for (const auto& b : set) check_box(b);
    }
    if (route.size() < 2 || !(route_length() > 0.0)) {
      throw ContractViolation("SceneSpec: route must have positive length");
    }
    if (lidar.rings == 0 || !(lidar.azimuth_step_deg > 0.0) || !(lidar.max_range > 0.0) ||
        lidar.elevation_max_deg < lidar.elevation_min_deg || lidar.range_noise < 0.0) {
      throw ContractViolation("SceneSpec: invalid lidar model");
    }
  }
};

/// Parametric ray o + t d (d need not be unit length).
struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d dir;
};

inline std::optional<double> intersect_plane_z(const Ray& ray, double z) {
  if (ray.dir.z() == 0.0) return std::nullopt;
  const double t = (z - ray.origin.z()) / ray.dir.z();
  if (!(t > 0.0)) return std::nullopt;
  return t;
}

/// Entry parameter of the ray into the box; nullopt on a miss or when the
/// origin is inside the box.
inline std::optional<double> intersect_box(const Ray& ray, const Box& box) {
  const Eigen::Matrix3d to_box =
      Eigen::AngleAxisd(-box.yaw_deg * kDegToRad, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const Eigen::Vector3d o = to_box * (ray.origin - box.center);
  const Eigen::Vector3d d = to_box * ray.dir;
  const Eigen::Vector3d half = 0.5 * box.size;
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (d[k] == 0.0) {
      if (o[k] < -half[k] || o[k] > half[k]) return std::nullopt;
      continue;
    }
    double t0 = (-half[k] - o[k]) / d[k];
    double t1 = (half[k] - o[k]) / d[k];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  if (t_enter > t_exit || !(t_enter > 0.0)) return std::nullopt;
  return t_enter;
}

/// Nearest hit parameter against the ground (if any), the static boxes and
/// `extra` boxes, no farther than `t_max`.
inline std::optional<double> cast_ray(const Ray& ray, const SceneSpec& scene,
                                      std::span<const Box> extra, double t_max) {
  double best = std::numeric_limits<double>::infinity();
  if (scene.ground_z) {
    if (auto t = intersect_plane_z(ray, *scene.ground_z)) best = std::min(best, *t);
  }
  for (const auto& b : scene.static_boxes) {
    if (auto t = intersect_box(ray, b)) best = std::min(best, *t);
  }
  for (const auto& b : extra) {
    if (auto t = intersect_box(ray, b)) best = std::min(best, *t);
  }
  if (best > t_max) return std::nullopt;
  return best;
}

/// Unit ray directions of the ring scanner in the sensor frame, ring-major.
inline std::vector<Eigen::Vector3d> lidar_directions(const LidarModel& lidar) {
  std::vector<Eigen::Vector3d> dirs;
  const auto azimuths = static_cast<std::uint32_t>(std::ceil(360.0 / lidar.azimuth_step_deg - 1e-9));
  dirs.reserve(std::size_t{lidar.rings} * azimuths);
  for (std::uint32_t r = 0; r < lidar.rings; ++r) {
    const double elev =
        lidar.rings == 1
            ? lidar.elevation_min_deg
            : lidar.elevation_min_deg +
                  r * (lidar.elevation_max_deg - lidar.elevation_min_deg) / (lidar.rings - 1);
    const double e = elev * kDegToRad;
    for (std::uint32_t a = 0; a < azimuths; ++a) {
      const double az = a * lidar.azimuth_step_deg * kDegToRad;
      dirs.emplace_back(std::cos(e) * std::cos(az), std::cos(e) * std::sin(az), std::sin(e));
    }
  }
  return dirs;
}

/// One LiDAR sweep from `sensor_pose` (sensor -> global). Returns the nearest
/// hit per ray within max range, in the sensor frame. `salt` selects the
/// range-noise stream.
inline PointCloud raycast_sweep(const SceneSpec& scene, const RigidPose& sensor_pose,
                                std::span<const Box> transients = {}, std::uint64_t salt = 0) {
  PointCloud cloud;
  cloud.frame = Frame::sensor_local;
  const Eigen::Matrix3d r = sensor_pose.rotation_matrix();
  std::mt19937_64 rng(scene.seed ^ (0x9E3779B97F4A7C15ull * (salt + 1)));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (const auto& d : lidar_directions(scene.lidar)) {
    const Ray ray{sensor_pose.translation(), r * d};
    const auto t = cast_ray(ray, scene, transients, scene.lidar.max_range);
    if (!t) continue;
    double range = *t;
    if (scene.lidar.range_noise > 0.0) range += scene.lidar.range_noise * noise(rng);
    if (!(range > 0.0)) continue;
    cloud.points.push_back((range * d).cast<float>());
  }
  return cloud;
}

/// Per-pixel camera depth of the nearest static surface along the ray through
/// the pixel center; -1 where nothing lies within `max_depth`.
inline DepthMap gt_depth(const SceneSpec& scene, const RigidPose& ego, const CameraModel& cam,
                         double max_depth = kDefaultMaxDepth) {
  DepthMap map = DepthMap::empty(cam.width(), cam.height());
  // camera -> global
  const RigidPose cam_to_global = compose(ego, cam.extrinsics().inverse());
  const Eigen::Matrix3d r = cam_to_global.rotation_matrix();
  const Eigen::Matrix3d k_inv = cam.intrinsics().inverse();
  const double limit = max_depth > 0.0 ? max_depth : std::numeric_limits<double>::infinity();
  for (std::uint32_t v = 0; v < cam.height(); ++v) {
    for (std::uint32_t u = 0; u < cam.width(); ++u) {
      Eigen::Vector3d d_cam = k_inv * Eigen::Vector3d(u + 0.5, v + 0.5, 1.0);
      d_cam /= d_cam.z();  // unit camera depth per unit ray parameter
      const Ray ray{cam_to_global.translation(), r * d_cam};
      if (auto t = cast_ray(ray, scene, {}, limit)) map.at(u, v) = static_cast<float>(*t);
    }
  }
  return map;
}

/// Vehicle pose at arc length `s` along the route: road-level position,
/// heading along the current segment.
inline RigidPose route_pose(const SceneSpec& scene, double s) {
  const auto& route = scene.route;
  double acc = 0.0;
  for (std::size_t i = 1; i < route.size(); ++i) {
    const Eigen::Vector3d seg = route[i] - route[i - 1];
    const double len = seg.norm();
    if (len == 0.0) continue;
    if (s <= acc + len || i + 1 == route.size()) {
      const double t = std::clamp((s - acc) / len, 0.0, 1.0);
      return RigidPose::from_yaw(std::atan2(seg.y(), seg.x()), route[i - 1] + t * seg);
    }
    acc += len;
  }
  return RigidPose::from_translation(route.front());
}

using Traversal = std::vector<FrameRecord>;

/// One traversal per index: frames every `spacing` meters along the route,
/// each a sweep with that traversal's transients and seeded pose jitter.
/// Frames whose sweep hits nothing are skipped.
inline std::vector<Traversal> generate_traversals(const SceneSpec& scene, std::size_t count,
                                                  double spacing) {
  scene.validate();
  if (!(spacing > 0.0)) throw ContractViolation("generate_traversals: spacing must be positive");
  const double length = scene.route_length();
  std::vector<Traversal> out(count);
  for (std::size_t n = 0; n < count; ++n) {
    std::mt19937_64 rng(scene.seed + 1000003ull * (n + 1));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::int64_t index = 0;
    for (double s = 0.0; s <= length + 1e-9; s += spacing, ++index) {
      const RigidPose vehicle = route_pose(scene, s);
      const Eigen::Vector3d jitter(scene.jitter_t * normal(rng), scene.jitter_t * normal(rng), 0.0);
      const double yaw = scene.jitter_yaw * normal(rng) * kDegToRad;
      const RigidPose sensor = compose(
          RigidPose::from_yaw(yaw, vehicle.translation() + jitter),
          compose(RigidPose(vehicle.rotation(), Eigen::Vector3d::Zero()),
                  RigidPose::from_translation({0.0, 0.0, scene.lidar.mount_height})));
      FrameRecord f;
      f.traversal_id = n;
      f.frame_index = index;
      f.timestamp = 86400.0 * static_cast<double>(n) + s / 10.0;
      f.pose = sensor;
      f.points = raycast_sweep(scene, sensor, scene.transients_of(n), n * 1000003ull + index);
      if (!f.points.empty()) out[n].push_back(std::move(f));
    }
  }
  return out;
}

// Scene text file. One entry per line, repeated keys append:
//   ground_z = 0 | none
//   box = cx cy cz sx sy sz yaw_deg
//   transient = traversal cx cy cz sx sy sz yaw_deg
//   route = x y z
//   lidar.rings / lidar.elevation_min / lidar.elevation_max / lidar.azimuth_step /
//   lidar.max_range / lidar.mount_height / lidar.range_noise
//   jitter_t, jitter_yaw, seed

inline SceneSpec parse_scene(std::istream& is, const std::string& origin = "<scene>") {
  SceneSpec scene;
  scene.ground_z.reset();
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw FormatError(origin + ":" + std::to_string(lineno) + ": " + msg);
  };
  auto numbers = [&](const std::string& text, std::size_t want) {
    std::istringstream ss(text);
    std::vector<double> v;
    double x;
    while (ss >> x) v.push_back(x);
    if (!ss.eof() || v.size() != want) fail("expected " + std::to_string(want) + " numbers");
    return v;
  };
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = detail::trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) fail("expected 'key = value'");
    const std::string key(detail::trim(s.substr(0, eq)));
    const std::string value(detail::trim(s.substr(eq + 1)));
    if (key == "ground_z") {
      if (value == "none") scene.ground_z.reset();
      else scene.ground_z = numbers(value, 1)[0];
    } else if (key == "box") {
      const auto v = numbers(value, 7);
      scene.static_boxes.push_back({{v[0], v[1], v[2]}, {v[3], v[4], v[5]}, v[6]});
    } else if (key == "transient") {
      const auto v = numbers(value, 8);
      if (v[0] < 0 || v[0] != std::floor(v[0])) fail("transient traversal must be an index");
      const auto n = static_cast<std::size_t>(v[0]);
      if (scene.transients.size() <= n) scene.transients.resize(n + 1);
      scene.transients[n].push_back({{v[1], v[2], v[3]}, {v[4], v[5], v[6]}, v[7]});
    } else if (key == "route") {
      const auto v = numbers(value, 3);
      scene.route.emplace_back(v[0], v[1], v[2]);
    } else if (key == "lidar.rings") {
      scene.lidar.rings = static_cast<std::uint32_t>(numbers(value, 1)[0]);
    } else if (key == "lidar.elevation_min") {
      scene.lidar.elevation_min_deg = numbers(value, 1)[0];
    } else if (key == "lidar.elevation_max") {
      scene.lidar.elevation_max_deg = numbers(value, 1)[0];
    } else if (key == "lidar.azimuth_step") {
      scene.lidar.azimuth_step_deg = numbers(value, 1)[0];
    } else if (key == "lidar.max_range") {
      scene.lidar.max_range = numbers(value, 1)[0];
    } else if (key == "lidar.mount_height") {
      scene.lidar.mount_height = numbers(value, 1)[0];
    } else if (key == "lidar.range_noise") {
      scene.lidar.range_noise = numbers(value, 1)[0];
    } else if (key == "jitter_t") {
      scene.jitter_t = numbers(value, 1)[0];
    } else if (key == "jitter_yaw") {
      scene.jitter_yaw = numbers(value, 1)[0];
    } else if (key == "seed") {
      scene.seed = static_cast<std::uint64_t>(numbers(value, 1)[0]);
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  scene.validate();
  return scene;
}

inline SceneSpec load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return parse_scene(in, path.string());
}

inline void write_scene(std::ostream& os, const SceneSpec& scene) {
  os << std::setprecision(17);
  if (scene.ground_z) os << "ground_z = " << *scene.ground_z << "\n";
  else os << "ground_z = none\n";
  auto box_fields = [&](const Box& b) {
    os << b.center.x() << ' ' << b.center.y() << ' ' << b.center.z() << ' ' << b.size.x() << ' '
       << b.size.y() << ' ' << b.size.z() << ' ' << b.yaw_deg << "\n";
  };
  for (const auto& b : scene.static_boxes) {
    os << "box = ";
    box_fields(b);
  }
  for (std::size_t n = 0; n < scene.transients.size(); ++n) {
    for (const auto& b : scene.transients[n]) {
      os << "transient = " << n << ' ';
      box_fields(b);
    }
  }
  for (const auto& p : scene.route) os << "route = " << p.x() << ' ' << p.y() << ' ' << p.z() << "\n";
  const auto& l = scene.lidar;
  os << "lidar.rings = " << l.rings << "\nlidar.elevation_min = " << l.elevation_min_deg
     << "\nlidar.elevation_max = " << l.elevation_max_deg
     << "\nlidar.azimuth_step = " << l.azimuth_step_deg << "\nlidar.max_range = " << l.max_range
     << "\nlidar.mount_height = " << l.mount_height << "\nlidar.range_noise = " << l.range_noise
     << "\njitter_t = " << scene.jitter_t << "\njitter_yaw = " << scene.jitter_yaw
     << "\nseed = " << scene.seed << "\n";
}

}  // namespace asyncdepth::synth
