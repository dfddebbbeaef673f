#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "asyncdepth/binary_io.hpp"
#include "asyncdepth/errors.hpp"
#include "asyncdepth/geometry.hpp"
#include "asyncdepth/traversal_store.hpp"

namespace asyncdepth {

inline constexpr float kEmptyDepth = -1.0f;
inline constexpr double kDefaultMaxDepth = 60.0;

/// Frames of one traversal merged into the global frame.
struct DensifiedCloud {
  TraversalId traversal_id = 0;
  PointCloudD points{{}, Frame::global};
  std::vector<std::int64_t> source_frames;
};

/// Row-major H x W raster of camera-frame depth; -1 marks empty pixels.
struct DepthMap {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> data;
  std::uint32_t camera_id = 0;
  TraversalId traversal_id = 0;

  static DepthMap empty(std::uint32_t width, std::uint32_t height) {
    return {width, height, std::vector<float>(std::size_t{width} * height, kEmptyDepth), 0, 0};
  }

  float at(std::uint32_t u, std::uint32_t v) const { return data[std::size_t{v} * width + u]; }
  float& at(std::uint32_t u, std::uint32_t v) { return data[std::size_t{v} * width + u]; }

  std::size_t covered_pixels() const {
    return static_cast<std::size_t>(
        std::count_if(data.begin(), data.end(), [](float d) { return d != kEmptyDepth; }));
  }
};

enum class DepthReduce : std::uint8_t {
  max,         // farthest return per pixel
  percentile,  // nearest-rank percentile of the returns per pixel
};

struct RenderOptions {
  double z_near = kDefaultZNear;
  /// Returns with depth beyond this are discarded; non-positive disables the clip.
  double max_depth = kDefaultMaxDepth;
  DepthReduce reduce = DepthReduce::max;
  double percentile = 100.0;
  /// Worker threads per raster (max reduction only). Output does not depend on it.
  unsigned threads = 1;
};

/// Each frame's sensor-local points moved to the global frame by its pose,
/// concatenated in frame order. All frames must share a traversal id.
template <typename FrameRange>
  requires requires(const FrameRange& r) { (*std::begin(r))->points; }
DensifiedCloud densify(const FrameRange& frames) {
  DensifiedCloud out;
  bool first = true;
  std::size_t total = 0;
  for (const auto& f : frames) total += f->points.size();
  out.points.points.reserve(total);
  for (const auto& f : frames) {
    if (first) {
      out.traversal_id = f->traversal_id;
      first = false;
    } else if (f->traversal_id != out.traversal_id) {
      throw ContractViolation("densify: frames from different traversals");
    }
    require_frame(f->points.frame, Frame::sensor_local, "densify");
    const Eigen::Matrix3d r = f->pose.rotation_matrix();
    const Eigen::Vector3d& t = f->pose.translation();
    for (const auto& p : f->points.points) out.points.points.push_back(r * p.template cast<double>() + t);
    out.source_frames.push_back(f->frame_index);
  }
  return out;
}

inline DensifiedCloud densify(std::span<const FrameRecord> frames) {
  std::vector<const FrameRecord*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  return densify(ptrs);
}

namespace detail {

template <typename Scalar>
void splat_max(std::span<const Eigen::Matrix<Scalar, 3, 1>> points, const CameraProjector& proj,
               double max_depth, std::vector<float>& raster) {
  const std::uint32_t w = proj.width();
  PixelDepth px{};
  for (const auto& p : points) {
    if (!proj.project(proj.to_camera(p.template cast<double>()), px)) continue;
    if (max_depth > 0.0 && px.depth > max_depth) continue;
    const float d = static_cast<float>(px.depth);
    if (!(d > proj.z_near())) continue;
    float& cell = raster[static_cast<std::size_t>(px.v) * w + static_cast<std::size_t>(px.u)];
    if (d > cell) cell = d;
  }
}

template <typename Scalar>
void splat_percentile(std::span<const Eigen::Matrix<Scalar, 3, 1>> points,
                      const CameraProjector& proj, const RenderOptions& opts,
                      std::vector<float>& raster) {
  std::vector<std::vector<float>> samples(raster.size());
  const std::uint32_t w = proj.width();
  PixelDepth px{};
  for (const auto& p : points) {
    if (!proj.project(proj.to_camera(p.template cast<double>()), px)) continue;
    if (opts.max_depth > 0.0 && px.depth > opts.max_depth) continue;
    const float d = static_cast<float>(px.depth);
    if (!(d > proj.z_near())) continue;
    samples[static_cast<std::size_t>(px.v) * w + static_cast<std::size_t>(px.u)].push_back(d);
  }
  const double q = std::clamp(opts.percentile, 0.0, 100.0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto& s = samples[i];
    if (s.empty()) continue;
    std::sort(s.begin(), s.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(s.size())));
    raster[i] = s[std::min(s.size() - 1, rank == 0 ? 0 : rank - 1)];
  }
}

}  // namespace detail

/// Z-buffer rasterization of a global point set: each pixel keeps the largest
/// camera depth landing on it, -1 where nothing lands.
template <typename Scalar>
DepthMap render_points(const BasicPointCloud<Scalar>& cloud, const RigidPose& ego,
                       const CameraModel& cam, const RenderOptions& opts = {}) {
  require_frame(cloud.frame, Frame::global, "render_depth");
  const CameraProjector proj(ego, cam, opts.z_near);
  DepthMap map = DepthMap::empty(cam.width(), cam.height());
  using Point = Eigen::Matrix<Scalar, 3, 1>;
  const std::span<const Point> points(cloud.points);

  if (opts.reduce == DepthReduce::percentile) {
    detail::splat_percentile(points, proj, opts, map.data);
    return map;
  }

  const unsigned threads = std::max(1u, opts.threads);
  if (threads == 1 || points.size() < 4096) {
    detail::splat_max(points, proj, opts.max_depth, map.data);
    return map;
  }
  // Partial rasters merged by max: identical to the sequential fold since max
  // is associative and commutative on floats.
  std::vector<std::vector<float>> partial(threads, map.data);
  {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (points.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = std::min(points.size(), t * chunk);
      const std::size_t e = std::min(points.size(), b + chunk);
      workers.emplace_back([&, t, b, e] {
        detail::splat_max(points.subspan(b, e - b), proj, opts.max_depth, partial[t]);
      });
    }
  }
  for (const auto& part : partial) {
    for (std::size_t i = 0; i < map.data.size(); ++i) map.data[i] = std::max(map.data[i], part[i]);
  }
  return map;
}

inline DepthMap render_depth(const DensifiedCloud& cloud, const RigidPose& ego,
                             const CameraModel& cam, const RenderOptions& opts = {}) {
  DepthMap map = render_points(cloud.points, ego, cam, opts);
  map.traversal_id = cloud.traversal_id;
  return map;
}

inline DepthMap pixelwise_max(const DepthMap& a, const DepthMap& b) {
  if (a.width != b.width || a.height != b.height) {
    throw ContractViolation("pixelwise_max: dimension mismatch");
  }
  DepthMap out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::max(a.data[i], b.data[i]);
  return out;
}

/// Depth maps for every (traversal, camera) pair found near the ego pose.
struct DepthGrid {
  std::vector<TraversalId> traversals;
  std::size_t camera_count = 0;
  std::vector<DepthMap> maps;  // index n * camera_count + i
  std::vector<std::string> diagnostics;

  bool empty() const noexcept { return traversals.empty(); }
  const DepthMap& at(std::size_t n, std::size_t i) const { return maps.at(n * camera_count + i); }
};

/// Runs `fn(k)` for k in [0, count) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (threads <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> workers;
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) fn(k);
    });
  }
}

/// Unique frames of a match, in first-occurrence order. Offsets that resolve
/// to the same frame contribute it once.
inline std::vector<FramePtr> unique_frames(const TraversalMatch& m) {
  std::vector<FramePtr> out;
  for (const auto& f : m.frames) {
    if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
  }
  return out;
}

/// Depth maps for already-selected traversal matches.
inline DepthGrid render_matches(const RigidPose& ego, std::span<const CameraModel> cams,
                                std::span<const TraversalMatch> matches,
                                const RenderOptions& opts = {}, unsigned threads = 1) {
  DepthGrid grid;
  grid.camera_count = cams.size();
  if (matches.empty()) {
    grid.diagnostics.push_back("no past traversal within search radius of the ego pose");
    return grid;
  }
  std::vector<DensifiedCloud> clouds(matches.size());
  parallel_for(matches.size(), threads,
               [&](std::size_t n) { clouds[n] = densify(unique_frames(matches[n])); });
  for (const auto& m : matches) grid.traversals.push_back(m.traversal_id);
  grid.maps.resize(matches.size() * cams.size());
  RenderOptions single = opts;
  single.threads = 1;
  parallel_for(grid.maps.size(), threads, [&](std::size_t k) {
    const std::size_t n = k / cams.size();
    const std::size_t i = k % cams.size();
    DepthMap map = render_depth(clouds[n], ego, cams[i], single);
    map.camera_id = static_cast<std::uint32_t>(i);
    grid.maps[k] = std::move(map);
  });
  return grid;
}

inline DepthGrid render_all(const RigidPose& ego, std::span<const CameraModel> cams,
                            const QueryConfig& cfg, const TraversalStore& store,
                            const RenderOptions& opts = {}, unsigned threads = 1) {
  const auto matches = store.empty() ? std::vector<TraversalMatch>{}
                                     : store.query_frames(ego.translation(), cfg);
  return render_matches(ego, cams, matches, opts, threads);
}

// ADDM file: magic, width u32, height u32, width*height f32 row-major.

inline void write_depth_map(std::ostream& os, const DepthMap& map) {
  io::write_magic(os, "ADDM");
  io::write_le(os, map.width);
  io::write_le(os, map.height);
  io::write_f32_array(os, map.data);
}

inline void write_depth_map(const std::filesystem::path& path, const DepthMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  write_depth_map(out, map);
}

inline DepthMap read_depth_map(std::istream& is) {
  io::expect_magic(is, "ADDM");
  DepthMap map;
  map.width = io::read_le<std::uint32_t>(is);
  map.height = io::read_le<std::uint32_t>(is);
  map.data.resize(std::size_t{map.width} * map.height);
  io::read_f32_array(is, map.data);
  return map;
}

inline DepthMap read_depth_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_depth_map(in);
}

/// 16-bit binary PGM in millimeters for viewing; empty pixels become 0.
inline void export_pgm16(const std::filesystem::path& path, const DepthMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P5\n" << map.width << ' ' << map.height << "\n65535\n";
  for (float d : map.data) {
    const double mm = d == kEmptyDepth ? 0.0 : std::clamp(std::round(d * 1000.0), 1.0, 65535.0);
    const auto v = static_cast<std::uint16_t>(mm);
    const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xFF)};
    out.write(bytes, 2);
  }
}

}  // namespace asyncdepth
