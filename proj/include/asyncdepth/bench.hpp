#pragma once

// Wall-clock harness for the query -> densify -> render -> featurize chain.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

#include "asyncdepth/depth_featurizer.hpp"
#include "asyncdepth/depth_renderer.hpp"
#include "asyncdepth/traversal_store.hpp"

namespace asyncdepth::bench {

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

struct LatencyStats {
  std::size_t samples = 0;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
};

/// Nearest-rank percentile of an unsorted sample.
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

inline LatencyStats summarize(const std::vector<double>& ms) {
  LatencyStats s;
  s.samples = ms.size();
  if (ms.empty()) return s;
  s.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  s.p50_ms = percentile(ms, 50.0);
  s.p95_ms = percentile(ms, 95.0);
  return s;
}

struct PipelineConfig {
  unsigned repeat = 10;
  QueryConfig query = QueryConfig::surround();
  RenderOptions render;
  std::uint32_t scale = kDefaultFeatureScale;
  PoolMode pool = PoolMode::mean;
  unsigned threads = 1;
};

struct PipelineReport {
  unsigned repeat = 0;
  std::size_t traversals = 0;
  std::size_t cameras = 0;
  std::size_t points_processed = 0;  // per run, summed over (traversal, camera)
  LatencyStats query, densify, render, featurize, end_to_end;
  double render_points_per_second = 0.0;
  std::uint64_t store_bytes_per_scene = 0;

  /// key=value lines.
  void write(std::ostream& os) const {
    os << "repeat=" << repeat << "\ntraversals=" << traversals << "\ncameras=" << cameras
       << "\npoints_processed=" << points_processed << "\n";
    auto stage = [&](const char* name, const LatencyStats& s) {
      os << "stage." << name << ".mean_ms=" << s.mean_ms << "\nstage." << name
         << ".p50_ms=" << s.p50_ms << "\nstage." << name << ".p95_ms=" << s.p95_ms << "\n";
    };
    stage("query", query);
    stage("densify", densify);
    stage("render", render);
    stage("featurize", featurize);
    stage("end_to_end", end_to_end);
    os << "render_points_per_second=" << render_points_per_second
       << "\nstore_bytes_per_scene=" << store_bytes_per_scene << "\n";
  }
};

/// ADST bytes of a store holding only the frames a query used.
inline std::uint64_t scene_bytes(std::span<const TraversalMatch> matches) {
  std::uint64_t bytes = store_layout::kFileHeader;
  for (const auto& m : matches) {
    bytes += store_layout::kTraversalHeader;
    for (const auto& f : unique_frames(m)) bytes += store_layout::frame_bytes(f->points.size());
  }
  return bytes;
}

/// Runs the full chain `repeat` times for one ego pose.
inline PipelineReport run_pipeline(const TraversalStore& store, const RigidPose& ego,
                                   std::span<const CameraModel> cams, const PipelineConfig& cfg) {
  PipelineReport report;
  report.repeat = cfg.repeat;
  report.cameras = cams.size();
  std::vector<double> t_query, t_densify, t_render, t_feat, t_total;
  double render_total_ms = 0.0;
  std::size_t render_total_points = 0;

  for (unsigned r = 0; r < cfg.repeat; ++r) {
    const auto start = Clock::now();
    auto t0 = Clock::now();
    const auto matches =
        store.empty() ? std::vector<TraversalMatch>{} : store.query_frames(ego.translation(), cfg.query);
    t_query.push_back(elapsed_ms(t0));

    t0 = Clock::now();
    std::vector<DensifiedCloud> clouds(matches.size());
    parallel_for(matches.size(), cfg.threads,
                 [&](std::size_t n) { clouds[n] = densify(unique_frames(matches[n])); });
    t_densify.push_back(elapsed_ms(t0));

    t0 = Clock::now();
    std::vector<DepthMap> maps(clouds.size() * cams.size());
    parallel_for(maps.size(), cfg.threads, [&](std::size_t k) {
      maps[k] = render_depth(clouds[k / cams.size()], ego, cams[k % cams.size()], cfg.render);
    });
    const double render_ms = elapsed_ms(t0);
    t_render.push_back(render_ms);
    std::size_t points = 0;
    for (const auto& c : clouds) points += c.points.size() * cams.size();
    render_total_ms += render_ms;
    render_total_points += points;

    t0 = Clock::now();
    for (std::size_t i = 0; i < cams.size() && !clouds.empty(); ++i) {
      std::vector<TraversalFeature> feats;
      for (std::size_t n = 0; n < clouds.size(); ++n) {
        feats.push_back({clouds[n].traversal_id,
                         downavg_featurize(maps[n * cams.size() + i], cfg.scale)});
      }
      const FeatureTensor pooled = pool_traversals(std::span<const TraversalFeature>(feats), cfg.pool);
      (void)pooled;
    }
    t_feat.push_back(elapsed_ms(t0));
    t_total.push_back(elapsed_ms(start));

    if (r == 0) {
      report.traversals = matches.size();
      report.points_processed = points;
      report.store_bytes_per_scene = scene_bytes(matches);
    }
  }
  report.query = summarize(t_query);
  report.densify = summarize(t_densify);
  report.render = summarize(t_render);
  report.featurize = summarize(t_feat);
  report.end_to_end = summarize(t_total);
  report.render_points_per_second =
      render_total_ms > 0.0 ? 1000.0 * static_cast<double>(render_total_points) / render_total_ms : 0.0;
  return report;
}

struct ScalingReport {
  std::size_t points_small = 0;
  std::size_t points_large = 0;
  double ms_small = 0.0;  // median
  double ms_large = 0.0;  // median
  double point_ratio = 0.0;
  double time_ratio = 0.0;

  /// Time ratio within +-tolerance (relative) of the point-count ratio.
  bool linear(double tolerance) const {
    return std::abs(time_ratio / point_ratio - 1.0) <= tolerance;
  }

  void write(std::ostream& os) const {
    os << "scaling.points_small=" << points_small << "\nscaling.points_large=" << points_large
       << "\nscaling.ms_small=" << ms_small << "\nscaling.ms_large=" << ms_large
       << "\nscaling.point_ratio=" << point_ratio << "\nscaling.time_ratio=" << time_ratio << "\n";
  }
};

/// Median render time of two clouds, interleaved to share machine noise.
inline ScalingReport render_scaling(const PointCloudD& small, const PointCloudD& large,
                                    const RigidPose& ego, const CameraModel& cam,
                                    unsigned repeat, const RenderOptions& opts = {}) {
  std::vector<double> a, b;
  volatile float sink = 0.0f;
  for (unsigned r = 0; r < repeat; ++r) {
    auto t0 = Clock::now();
    sink = sink + render_points(small, ego, cam, opts).data[0];
    a.push_back(elapsed_ms(t0));
    t0 = Clock::now();
    sink = sink + render_points(large, ego, cam, opts).data[0];
    b.push_back(elapsed_ms(t0));
  }
  ScalingReport s;
  s.points_small = small.size();
  s.points_large = large.size();
  s.ms_small = percentile(a, 50.0);
  s.ms_large = percentile(b, 50.0);
  s.point_ratio = static_cast<double>(large.size()) / static_cast<double>(small.size());
  s.time_ratio = s.ms_small > 0.0 ? s.ms_large / s.ms_small : 0.0;
  return s;
}

}  // namespace asyncdepth::bench
