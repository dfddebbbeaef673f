#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "asyncdepth/binary_io.hpp"
#include "asyncdepth/errors.hpp"
#include "asyncdepth/geometry.hpp"

namespace asyncdepth {

using TraversalId = std::uint64_t;

/// One LiDAR sweep of a past traversal.
struct FrameRecord {
  TraversalId traversal_id = 0;
  std::int64_t frame_index = 0;
  double timestamp = 0.0;
  RigidPose pose;     // sensor -> global
  PointCloud points;  // sensor-local

  Eigen::Vector3d ego_position() const { return pose.translation(); }
};

using FramePtr = std::shared_ptr<const FrameRecord>;

/// Closed time interval [begin, end] in seconds.
struct TimeWindow {
  double begin = 0.0;
  double end = 0.0;

  bool overlaps(double b, double e) const { return b <= end && e >= begin; }
};

struct QueryConfig {
  std::size_t max_traversals = 5;
  std::vector<double> offsets{0.0, -20.0, 20.0};
  double search_radius = 10.0;
  /// Traversals whose time span overlaps this window are ignored.
  std::optional<TimeWindow> exclude_window;

  /// Ring-camera setup: frames nearest 0 m, 20 m behind and 20 m ahead.
  static QueryConfig surround(std::size_t max_traversals = 5) {
    return {max_traversals, {0.0, -20.0, 20.0}, 10.0, std::nullopt};
  }

  /// Front-camera setup: frames nearest 0, 10 and 20 m ahead.
  static QueryConfig frontal(std::size_t max_traversals = 5) {
    return {max_traversals, {0.0, 10.0, 20.0}, 10.0, std::nullopt};
  }

  void validate() const {
    if (max_traversals < 1) throw ContractViolation("QueryConfig: max_traversals must be >= 1");
    if (offsets.empty()) throw ContractViolation("QueryConfig: offsets must be non-empty");
    for (double o : offsets) {
      if (!std::isfinite(o)) throw ContractViolation("QueryConfig: non-finite offset");
    }
    if (!(search_radius > 0.0) || !std::isfinite(search_radius)) {
      throw ContractViolation("QueryConfig: search_radius must be positive");
    }
  }
};

/// Frames of one traversal selected for a query location.
struct TraversalMatch {
  TraversalId traversal_id = 0;
  double closest_distance = 0.0;  // meters from the query point to the polyline
  double closest_arc = 0.0;       // arc length of the closest-approach point
  std::vector<FramePtr> frames;   // one per requested offset, same order
  std::vector<double> frame_arcs;
};

struct IngestOptions {
  /// Frame spacing s in meters. When positive, frames closer than s/2 to the
  /// previously kept frame are dropped at ingest.
  double thin_spacing = 0.0;
};

inline constexpr double kDefaultCellSize = 25.0;
inline constexpr std::uint32_t kStoreFormatVersion = 1;

/// Uniform xy grid over frame ego positions plus the polyline segments
/// between them. Rebuilt from frames; never persisted.
class StoreIndex {
 public:
  struct FrameRef {
    std::size_t traversal_slot;
    std::size_t frame;
    friend bool operator==(const FrameRef&, const FrameRef&) = default;
  };

  explicit StoreIndex(double cell_size = kDefaultCellSize) : cell_size_(cell_size) {
    if (!(cell_size > 0.0)) throw ContractViolation("StoreIndex: cell size must be positive");
  }

  double cell_size() const noexcept { return cell_size_; }

  void add_traversal(std::size_t slot, std::span<const Eigen::Vector3d> positions) {
    if (polylines_.size() <= slot) polylines_.resize(slot + 1);
    Polyline& line = polylines_[slot];
    line.positions.assign(positions.begin(), positions.end());
    line.arcs.resize(positions.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < positions.size(); ++i) {
      if (i > 0) acc += (positions[i] - positions[i - 1]).norm();
      line.arcs[i] = acc;
      frame_cells_[key_of(positions[i])].push_back({slot, i});
    }
    const std::size_t segments = positions.size() > 1 ? positions.size() - 1 : 1;
    for (std::size_t s = 0; s < segments; ++s) {
      const Eigen::Vector3d& a = positions[s];
      const Eigen::Vector3d& b = positions[std::min(s + 1, positions.size() - 1)];
      const auto [x0, y0] = cell_of(a.cwiseMin(b));
      const auto [x1, y1] = cell_of(a.cwiseMax(b));
      if ((x1 - x0 + 1) * (y1 - y0 + 1) > kMaxSegmentCells) {
        long_segments_.push_back({slot, s});
        continue;
      }
      for (std::int64_t cx = x0; cx <= x1; ++cx) {
        for (std::int64_t cy = y0; cy <= y1; ++cy) segment_cells_[pack(cx, cy)].push_back({slot, s});
      }
    }
  }

  /// Frames whose ego position falls in the same cell as `p`.
  std::vector<FrameRef> frames_in_cell(const Eigen::Vector3d& p) const {
    auto it = frame_cells_.find(key_of(p));
    return it == frame_cells_.end() ? std::vector<FrameRef>{} : it->second;
  }

  /// Segment references (slot, segment) registered in any cell of the
  /// axis-aligned square of half-size `radius` around p, plus every long
  /// segment. Sorted, unique.
  std::vector<FrameRef> segments_near(const Eigen::Vector3d& p, double radius) const {
    std::vector<FrameRef> out(long_segments_);
    const auto [x0, y0] = cell_of(p - Eigen::Vector3d(radius, radius, 0.0));
    const auto [x1, y1] = cell_of(p + Eigen::Vector3d(radius, radius, 0.0));
    for (std::int64_t cx = x0; cx <= x1; ++cx) {
      for (std::int64_t cy = y0; cy <= y1; ++cy) {
        auto it = segment_cells_.find(pack(cx, cy));
        if (it != segment_cells_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
      }
    }
    std::sort(out.begin(), out.end(), [](const FrameRef& a, const FrameRef& b) {
      return std::pair(a.traversal_slot, a.frame) < std::pair(b.traversal_slot, b.frame);
    });
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  std::span<const Eigen::Vector3d> positions(std::size_t slot) const {
    return polylines_.at(slot).positions;
  }
  /// Cumulative arc length at each frame of the traversal polyline.
  std::span<const double> arcs(std::size_t slot) const { return polylines_.at(slot).arcs; }

  std::size_t cell_count() const noexcept { return frame_cells_.size(); }

 private:
  struct Polyline {
    std::vector<Eigen::Vector3d> positions;
    std::vector<double> arcs;
  };

  std::pair<std::int64_t, std::int64_t> cell_of(const Eigen::Vector3d& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_size_)),
            static_cast<std::int64_t>(std::floor(p.y() / cell_size_))};
  }

  static std::uint64_t pack(std::int64_t cx, std::int64_t cy) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(cx)) << 32) |
           static_cast<std::uint32_t>(cy);
  }

  std::uint64_t key_of(const Eigen::Vector3d& p) const {
    const auto [cx, cy] = cell_of(p);
    return pack(cx, cy);
  }

  // Segments spanning more cells than this are checked on every query.
  static constexpr std::int64_t kMaxSegmentCells = 1024;

  double cell_size_;
  std::vector<Polyline> polylines_;
  std::vector<FrameRef> long_segments_;
  std::unordered_map<std::uint64_t, std::vector<FrameRef>> frame_cells_;
  std::unordered_map<std::uint64_t, std::vector<FrameRef>> segment_cells_;
};

/// Byte sizes of the ADST layout.
namespace store_layout {
inline constexpr std::uint64_t kFileHeader = 4 + 4 + 4;         // magic, version, count
inline constexpr std::uint64_t kTraversalHeader = 8 + 4;        // id, frame count
inline constexpr std::uint64_t kFrameHeader = 8 + 7 * 8 + 4;    // timestamp, pose, k
inline constexpr std::uint64_t kPointBytes = 12;

inline std::uint64_t frame_bytes(std::uint64_t points) { return kFrameHeader + kPointBytes * points; }
}  // namespace store_layout

/// Past traversals kept in memory, persisted as an ADST file.
///
/// Safe for one writer or any number of concurrent readers.
class TraversalStore {
 public:
  explicit TraversalStore(double cell_size = kDefaultCellSize)
      : mutex_(std::make_unique<std::shared_mutex>()), index_(cell_size) {}

  /// Validates, optionally thins, renumbers frames 0..k-1 and assigns a new id.
  /// Throws IngestError naming the first offending input frame.
  TraversalId ingest_traversal(std::vector<FrameRecord> frames, const IngestOptions& opts = {}) {
    if (frames.empty()) throw IngestError(0, "ingest_traversal: empty traversal");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const FrameRecord& f = frames[i];
      if (i > 0 && f.frame_index <= frames[i - 1].frame_index) {
        throw IngestError(i, "ingest_traversal: frame indices not strictly increasing");
      }
      if (f.points.empty()) throw IngestError(i, "ingest_traversal: frame has no points");
      if (!f.points.all_finite()) throw IngestError(i, "ingest_traversal: non-finite point");
      if (!std::isfinite(f.timestamp)) throw IngestError(i, "ingest_traversal: bad timestamp");
    }
    if (opts.thin_spacing > 0.0) frames = thin(std::move(frames), opts.thin_spacing / 2.0);

    std::unique_lock lock(*mutex_);
    const TraversalId id = next_id_++;
    add_locked(id, std::move(frames));
    return id;
  }

  std::vector<TraversalMatch> query_frames(const Eigen::Vector3d& p, const QueryConfig& cfg) const {
    cfg.validate();
    std::shared_lock lock(*mutex_);

    struct Approach {
      std::size_t slot;
      double distance;
      double arc;
    };
    std::vector<Approach> approaches;
    const auto segments = index_.segments_near(p, cfg.search_radius);
    for (std::size_t i = 0; i < segments.size();) {
      const std::size_t slot = segments[i].traversal_slot;
      const Traversal& trav = traversals_[slot];
      const bool excluded =
          cfg.exclude_window && cfg.exclude_window->overlaps(trav.first_time, trav.last_time);
      Approach best{slot, std::numeric_limits<double>::infinity(), 0.0};
      for (; i < segments.size() && segments[i].traversal_slot == slot; ++i) {
        if (excluded) continue;
        const auto [d, arc] = closest_on_segment(slot, segments[i].frame, p);
        if (d < best.distance || (d == best.distance && arc < best.arc)) {
          best.distance = d;
          best.arc = arc;
        }
      }
      if (!excluded && best.distance <= cfg.search_radius) approaches.push_back(best);
    }

    std::sort(approaches.begin(), approaches.end(), [&](const Approach& a, const Approach& b) {
      if (a.distance != b.distance) return a.distance < b.distance;
      return traversals_[a.slot].id < traversals_[b.slot].id;
    });
    if (approaches.size() > cfg.max_traversals) approaches.resize(cfg.max_traversals);
    std::sort(approaches.begin(), approaches.end(), [&](const Approach& a, const Approach& b) {
      return traversals_[a.slot].id < traversals_[b.slot].id;
    });

    std::vector<TraversalMatch> out;
    out.reserve(approaches.size());
    for (const Approach& a : approaches) {
      const Traversal& trav = traversals_[a.slot];
      const auto arcs = index_.arcs(a.slot);
      TraversalMatch m{trav.id, a.distance, a.arc, {}, {}};
      for (double offset : cfg.offsets) {
        const std::size_t f = nearest_arc(arcs, a.arc + offset);
        m.frames.push_back(trav.frames[f]);
        m.frame_arcs.push_back(arcs[f]);
      }
      out.push_back(std::move(m));
    }
    return out;
  }

  /// Exact size of an ADST file holding the given traversals.
  std::uint64_t store_size_bytes(std::span<const TraversalId> ids) const {
    std::shared_lock lock(*mutex_);
    std::uint64_t bytes = store_layout::kFileHeader;
    for (TraversalId id : ids) {
      bytes += store_layout::kTraversalHeader;
      for (const auto& f : traversals_[slot_of(id)].frames) {
        bytes += store_layout::frame_bytes(f->points.size());
      }
    }
    return bytes;
  }

  std::vector<TraversalId> traversal_ids() const {
    std::shared_lock lock(*mutex_);
    std::vector<TraversalId> ids;
    for (const auto& t : traversals_) ids.push_back(t.id);
    return ids;
  }

  std::vector<FramePtr> frames(TraversalId id) const {
    std::shared_lock lock(*mutex_);
    return traversals_[slot_of(id)].frames;
  }

  bool empty() const {
    std::shared_lock lock(*mutex_);
    return traversals_.empty();
  }

  std::size_t traversal_count() const {
    std::shared_lock lock(*mutex_);
    return traversals_.size();
  }

  /// Caller must not ingest while holding the returned reference.
  const StoreIndex& index() const noexcept { return index_; }

  void save(const std::filesystem::path& path) const { save(path, traversal_ids()); }

  void save(const std::filesystem::path& path, std::span<const TraversalId> ids) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    write(out, ids);
    if (!out) throw FormatError("write failed: " + path.string());
  }

  void write(std::ostream& out, std::span<const TraversalId> ids) const {
    static_assert(sizeof(Eigen::Vector3f) == 12);
    std::shared_lock lock(*mutex_);
    io::write_magic(out, "ADST");
    io::write_le(out, kStoreFormatVersion);
    io::write_le(out, static_cast<std::uint32_t>(ids.size()));
    for (TraversalId id : ids) {
      const Traversal& t = traversals_[slot_of(id)];
      io::write_le(out, t.id);
      io::write_le(out, static_cast<std::uint32_t>(t.frames.size()));
      for (const auto& f : t.frames) {
        io::write_le(out, f->timestamp);
        const auto& q = f->pose.rotation();
        const auto& tr = f->pose.translation();
        for (double v : {q.w(), q.x(), q.y(), q.z(), tr.x(), tr.y(), tr.z()}) io::write_le(out, v);
        io::write_le(out, static_cast<std::uint32_t>(f->points.size()));
        io::write_f32_array(out, std::span<const float>(f->points.points.front().data(),
                                                        3 * f->points.size()));
      }
    }
  }

  static TraversalStore open(const std::filesystem::path& path, double cell_size = kDefaultCellSize) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return read(in, cell_size);
  }

  static TraversalStore read(std::istream& in, double cell_size = kDefaultCellSize) {
    io::expect_magic(in, "ADST");
    const auto version = io::read_le<std::uint32_t>(in);
    if (version != kStoreFormatVersion) {
      throw FormatError("ADST: unsupported version " + std::to_string(version));
    }
    TraversalStore store(cell_size);
    const auto count = io::read_le<std::uint32_t>(in);
    for (std::uint32_t t = 0; t < count; ++t) {
      const auto id = io::read_le<std::uint64_t>(in);
      if (store.slots_.contains(id)) throw FormatError("ADST: duplicate traversal id");
      const auto frame_count = io::read_le<std::uint32_t>(in);
      if (frame_count == 0) throw FormatError("ADST: traversal without frames");
      std::vector<FrameRecord> frames(frame_count);
      for (std::uint32_t f = 0; f < frame_count; ++f) {
        FrameRecord& rec = frames[f];
        rec.timestamp = io::read_le<double>(in);
        double v[7];
        for (double& x : v) x = io::read_le<double>(in);
        rec.pose = RigidPose(Eigen::Quaterniond(v[0], v[1], v[2], v[3]),
                             Eigen::Vector3d(v[4], v[5], v[6]));
        const auto k = io::read_le<std::uint32_t>(in);
        if (k == 0) throw FormatError("ADST: frame without points");
        rec.points.points.resize(k);
        io::read_f32_array(in, std::span<float>(rec.points.points.front().data(), 3 * std::size_t{k}));
        rec.points.frame = Frame::sensor_local;
      }
      store.add_locked(id, std::move(frames));
      store.next_id_ = std::max(store.next_id_, id + 1);
    }
    return store;
  }

 private:
  struct Traversal {
    TraversalId id;
    std::vector<FramePtr> frames;
    double first_time;
    double last_time;
  };

  static std::vector<FrameRecord> thin(std::vector<FrameRecord> frames, double min_gap) {
    std::vector<FrameRecord> kept;
    kept.push_back(std::move(frames.front()));
    for (std::size_t i = 1; i < frames.size(); ++i) {
      if ((frames[i].ego_position() - kept.back().ego_position()).norm() >= min_gap) {
        kept.push_back(std::move(frames[i]));
      }
    }
    return kept;
  }

  void add_locked(TraversalId id, std::vector<FrameRecord> frames) {
    Traversal t{id, {}, std::numeric_limits<double>::infinity(),
                -std::numeric_limits<double>::infinity()};
    std::vector<Eigen::Vector3d> positions;
    positions.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
      FrameRecord& f = frames[i];
      f.traversal_id = id;
      f.frame_index = static_cast<std::int64_t>(i);
      f.points.frame = Frame::sensor_local;
      t.first_time = std::min(t.first_time, f.timestamp);
      t.last_time = std::max(t.last_time, f.timestamp);
      positions.push_back(f.ego_position());
      t.frames.push_back(std::make_shared<const FrameRecord>(std::move(f)));
    }
    const std::size_t slot = traversals_.size();
    traversals_.push_back(std::move(t));
    slots_.emplace(id, slot);
    index_.add_traversal(slot, positions);
  }

  std::size_t slot_of(TraversalId id) const {
    auto it = slots_.find(id);
    if (it == slots_.end()) throw ContractViolation("unknown traversal id " + std::to_string(id));
    return it->second;
  }

  /// Distance from p to segment `seg` of the traversal polyline, and the arc
  /// length of the closest point.
  std::pair<double, double> closest_on_segment(std::size_t slot, std::size_t seg,
                                               const Eigen::Vector3d& p) const {
    const auto pos = index_.positions(slot);
    const auto arcs = index_.arcs(slot);
    const Eigen::Vector3d& a = pos[seg];
    if (seg + 1 >= pos.size()) return {(p - a).norm(), arcs[seg]};
    const Eigen::Vector3d ab = pos[seg + 1] - a;
    const double len2 = ab.squaredNorm();
    double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const Eigen::Vector3d c = a + t * ab;
    return {(p - c).norm(), arcs[seg] + t * std::sqrt(len2)};
  }

  /// Index of the frame whose arc is nearest `target`; ties go to the lower index.
  static std::size_t nearest_arc(std::span<const double> arcs, double target) {
    const auto hi = std::lower_bound(arcs.begin(), arcs.end(), target);
    if (hi == arcs.begin()) return 0;
    const auto lo = std::lower_bound(arcs.begin(), arcs.end(), *(hi - 1));
    if (hi == arcs.end()) return static_cast<std::size_t>(lo - arcs.begin());
    const double dlo = target - *lo;
    const double dhi = *hi - target;
    return static_cast<std::size_t>((dhi < dlo ? hi : lo) - arcs.begin());
  }

  std::unique_ptr<std::shared_mutex> mutex_;
  std::vector<Traversal> traversals_;
  std::unordered_map<TraversalId, std::size_t> slots_;
  StoreIndex index_;
  TraversalId next_id_ = 0;
};

}  // namespace asyncdepth
