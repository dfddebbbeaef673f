// asyncdepth command-line tool.
//
// Subcommands: build-store, render, featurize, bench, score, synth, perturb.
// Failures print one line "asyncdepth: error: <kind>: <message>" to stderr and
// exit nonzero.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "asyncdepth/asyncdepth.hpp"

namespace fs = std::filesystem;
using namespace asyncdepth;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<CameraModel> load_cameras(const std::vector<std::string>& paths) {
  std::vector<CameraModel> cams;
  for (const auto& p : paths) cams.push_back(load_camera(p));
  return cams;
}

std::optional<std::int64_t> numeric_stem(const std::string& stem) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), v);
  if (ec != std::errc{} || ptr != stem.data() + stem.size()) return std::nullopt;
  return v;
}

bool is_cloud_file(const fs::path& p) { return p.extension() == ".ply" || p.extension() == ".bin"; }

/// Frames of one traversal directory: <stem>.ply or <stem>.bin next to <stem>.pose.
std::vector<FrameRecord> read_traversal_dir(const fs::path& dir) {
  std::vector<fs::path> clouds;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_cloud_file(e.path())) clouds.push_back(e.path());
  }
  bool all_numeric = true;
  for (const auto& c : clouds) all_numeric &= numeric_stem(c.stem().string()).has_value();
  std::sort(clouds.begin(), clouds.end(), [&](const fs::path& a, const fs::path& b) {
    if (all_numeric) return *numeric_stem(a.stem().string()) < *numeric_stem(b.stem().string());
    return a.filename() < b.filename();
  });
  std::vector<FrameRecord> frames;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    const fs::path& c = clouds[i];
    fs::path pose_path = c;
    pose_path.replace_extension(".pose");
    if (!fs::exists(pose_path)) throw FormatError("missing pose descriptor " + pose_path.string());
    const KeyValues kv = load_key_values(pose_path);
    FrameRecord f;
    f.frame_index = all_numeric ? *numeric_stem(c.stem().string()) : static_cast<std::int64_t>(i);
    f.timestamp = kv.contains("timestamp") ? kv_number(kv, "timestamp") : static_cast<double>(f.frame_index);
    f.pose = pose_from_key_values(kv);
    f.points = c.extension() == ".ply" ? read_ply(c) : read_xyz_blob(c);
    frames.push_back(std::move(f));
  }
  return frames;
}

int cmd_build_store(const fs::path& input, const fs::path& out, double spacing) {
  if (!fs::is_directory(input)) throw UsageError("input is not a directory: " + input.string());
  std::vector<fs::path> dirs;
  bool has_frames = false;
  for (const auto& e : fs::directory_iterator(input)) {
    if (e.is_directory()) dirs.push_back(e.path());
    if (e.is_regular_file() && is_cloud_file(e.path())) has_frames = true;
  }
  std::sort(dirs.begin(), dirs.end());
  if (has_frames) dirs = {input};
  if (dirs.empty()) throw UsageError("no traversals under " + input.string());

  TraversalStore store;
  std::size_t frames = 0;
  for (const auto& d : dirs) {
    auto trav = read_traversal_dir(d);
    try {
      store.ingest_traversal(std::move(trav), {spacing});
    } catch (const IngestError& e) {
      throw IngestError(e.index(), d.filename().string() + ": " + e.what());
    }
    frames += store.frames(store.traversal_ids().back()).size();
  }
  store.save(out);
  std::cout << "traversals=" << store.traversal_count() << "\nframes=" << frames
            << "\nbytes=" << fs::file_size(out) << "\n";
  return 0;
}

struct RenderArgs {
  std::string store, pose, out;
  std::vector<std::string> cameras;
  std::vector<double> offsets{0.0, -20.0, 20.0};
  std::size_t max_traversals = 5;
  double max_depth = kDefaultMaxDepth;
  double search_radius = 10.0;
  std::optional<double> exclude_start, exclude_end;
  double sigma_t = 0.0, sigma_r = 0.0;
  std::uint64_t seed = 0;
  bool perturb_stored = false;
  bool pgm = false;
  std::string reduce = "max";
  double percentile = 100.0;
};

QueryConfig query_config(const RenderArgs& a) {
  QueryConfig cfg;
  cfg.max_traversals = a.max_traversals;
  cfg.offsets = a.offsets;
  cfg.search_radius = a.search_radius;
  if (a.exclude_start.has_value() != a.exclude_end.has_value()) {
    throw UsageError("--exclude-start and --exclude-end go together");
  }
  if (a.exclude_start) cfg.exclude_window = TimeWindow{*a.exclude_start, *a.exclude_end};
  cfg.validate();
  return cfg;
}

RenderOptions render_options(const RenderArgs& a, unsigned threads) {
  RenderOptions opts;
  opts.max_depth = a.max_depth;
  opts.reduce = a.reduce == "percentile" ? DepthReduce::percentile : DepthReduce::max;
  opts.percentile = a.percentile;
  opts.threads = threads;
  return opts;
}

int cmd_render(const RenderArgs& a, unsigned threads) {
  const TraversalStore store = TraversalStore::open(a.store);
  RigidPose ego = load_pose(a.pose);
  const auto cams = load_cameras(a.cameras);
  const NoiseSpec noise{a.sigma_t, a.sigma_r, a.seed};
  noise.validate();
  PerturbRng rng(noise);
  ego = perturb_pose(ego, noise, rng);

  auto matches = store.empty() ? std::vector<TraversalMatch>{}
                               : store.query_frames(ego.translation(), query_config(a));
  if (a.perturb_stored) {
    // one draw per distinct frame, in traversal then frame order
    for (auto& m : matches) {
      std::map<const FrameRecord*, FramePtr> replaced;
      for (auto& f : m.frames) {
        auto [it, fresh] = replaced.try_emplace(f.get());
        if (fresh) {
          auto copy = std::make_shared<FrameRecord>(*f);
          copy->pose = perturb_pose(copy->pose, noise, rng);
          it->second = std::move(copy);
        }
        f = it->second;
      }
    }
  }
  const DepthGrid grid = render_matches(ego, cams, matches, render_options(a, 1), threads);
  for (const auto& d : grid.diagnostics) std::cerr << "asyncdepth: warning: " << d << "\n";
  fs::create_directories(a.out);
  for (std::size_t n = 0; n < grid.traversals.size(); ++n) {
    for (std::size_t i = 0; i < cams.size(); ++i) {
      const std::string stem = "depth_t" + std::to_string(grid.traversals[n]) + "_c" + std::to_string(i);
      write_depth_map(fs::path(a.out) / (stem + ".addm"), grid.at(n, i));
      if (a.pgm) export_pgm16(fs::path(a.out) / (stem + ".pgm"), grid.at(n, i));
    }
  }
  std::cout << "traversals=" << grid.traversals.size() << "\ncameras=" << cams.size()
            << "\nmaps=" << grid.maps.size() << "\n";
  return 0;
}

int cmd_featurize(const fs::path& dir, std::uint32_t scale, const std::string& pool,
                  const fs::path& out, std::optional<std::uint32_t> camera) {
  static const std::regex name(R"(depth_t(\d+)_c(\d+)\.addm)");
  std::map<std::uint32_t, std::vector<TraversalFeature>> by_camera;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string file = e.path().filename().string();
    if (!std::regex_match(file, m, name)) continue;
    const auto cam = static_cast<std::uint32_t>(std::stoul(m[2]));
    if (camera && cam != *camera) continue;
    by_camera[cam].push_back({std::stoull(m[1]), downavg_featurize(read_depth_map(e.path()), scale)});
  }
  if (by_camera.empty()) throw UsageError("no depth maps in " + dir.string());
  const PoolMode mode = pool == "max" ? PoolMode::max : PoolMode::mean;
  for (const auto& [cam, feats] : by_camera) {
    fs::path target = out;
    if (by_camera.size() > 1) {
      target = out.parent_path() / (out.stem().string() + "_c" + std::to_string(cam) + out.extension().string());
    }
    const FeatureTensor t = pool_traversals(std::span<const TraversalFeature>(feats), mode);
    write_tensor(target, t);
    std::cout << target.string() << " " << t.channels << "x" << t.height << "x" << t.width
              << " traversals=" << feats.size() << "\n";
  }
  return 0;
}

/// `count` points drawn cyclically from `source`.
PointCloudD tiled(const PointCloudD& source, std::size_t count) {
  PointCloudD out;
  out.frame = source.frame;
  out.points.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.points.push_back(source.points[k % source.size()]);
  return out;
}

int cmd_bench(const RenderArgs& a, unsigned repeat, std::uint32_t scale, std::size_t scaling_points,
              unsigned threads) {
  const TraversalStore store = TraversalStore::open(a.store);
  const RigidPose ego = load_pose(a.pose);
  const auto cams = load_cameras(a.cameras);
  bench::PipelineConfig cfg;
  cfg.repeat = repeat;
  cfg.query = query_config(a);
  cfg.render = render_options(a, 1);
  cfg.scale = scale;
  cfg.threads = threads;
  const auto report = bench::run_pipeline(store, ego, cams, cfg);
  report.write(std::cout);
  if (scaling_points > 0 && !cams.empty()) {
    PointCloudD scene{{}, Frame::global};
    if (!store.empty()) {
      for (const auto& m : store.query_frames(ego.translation(), cfg.query)) {
        const auto c = densify(unique_frames(m));
        scene.points.insert(scene.points.end(), c.points.points.begin(), c.points.points.end());
      }
    }
    if (scene.empty()) throw UsageError("scaling needs at least one traversal near the pose");
    const auto s = bench::render_scaling(tiled(scene, scaling_points), tiled(scene, 2 * scaling_points), ego,
                                         cams.front(), std::max(repeat, 5u), cfg.render);
    s.write(std::cout);
  }
  return 0;
}

int cmd_synth(const fs::path& scene_path, std::size_t traversals, double spacing, const fs::path& out,
              const std::string& export_dir, const std::string& gt_pose,
              const std::vector<std::string>& cameras, const std::string& gt_dir, double max_depth) {
  const synth::SceneSpec scene = synth::load_scene(scene_path);
  auto travs = synth::generate_traversals(scene, traversals, spacing);
  if (!export_dir.empty()) {
    for (std::size_t n = 0; n < travs.size(); ++n) {
      const fs::path dir = fs::path(export_dir) / ("traversal_" + std::to_string(n));
      fs::create_directories(dir);
      for (const auto& f : travs[n]) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "%06lld", static_cast<long long>(f.frame_index));
        write_ply(dir / (std::string(stem) + ".ply"), f.points);
        std::ofstream pose(dir / (std::string(stem) + ".pose"));
        write_pose_fields(pose, f.pose);
        pose << "timestamp = " << f.timestamp << "\n";
      }
    }
  }
  TraversalStore store;
  std::size_t frames = 0;
  for (auto& t : travs) {
    frames += t.size();
    if (!t.empty()) store.ingest_traversal(std::move(t));
  }
  store.save(out);
  if (!gt_dir.empty()) {
    if (gt_pose.empty() || cameras.empty()) throw UsageError("--gt-dir needs --gt-pose and --cameras");
    const RigidPose ego = load_pose(gt_pose);
    const auto cams = load_cameras(cameras);
    fs::create_directories(gt_dir);
    for (std::size_t i = 0; i < cams.size(); ++i) {
      DepthMap gt = synth::gt_depth(scene, ego, cams[i], max_depth);
      gt.camera_id = static_cast<std::uint32_t>(i);
      write_depth_map(fs::path(gt_dir) / ("gt_c" + std::to_string(i) + ".addm"), gt);
    }
  }
  std::cout << "traversals=" << store.traversal_count() << "\nframes=" << frames
            << "\nbytes=" << fs::file_size(out) << "\n";
  return 0;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

int fail(const std::string& kind, const std::string& msg, int code) {
  std::cerr << "asyncdepth: error: " << kind << ": " << one_line(msg) << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Depth features from past LiDAR traversals", "asyncdepth"};
  app.set_config("--config", "", "Read option values from a key = value file (flag names as keys)");
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = 1;
  app.add_option("--threads", threads, "Worker threads; results do not depend on it")
      ->envname("ASYNCDEPTH_THREADS")
      ->check(CLI::Range(1u, 1024u));

  // build-store
  auto* build = app.add_subcommand("build-store", "Ingest per-frame clouds and poses into a store file");
  std::string build_in, build_out;
  double build_spacing = 0.0;
  build->add_option("--input", build_in, "Directory of traversal directories")->required();
  build->add_option("--out", build_out, "Store file to write")->required();
  build->add_option("--frame-spacing", build_spacing, "Keep a frame every s meters (0 keeps all)")
      ->check(CLI::NonNegativeNumber);

  // render and bench share the query flags
  RenderArgs ra;
  auto add_query_flags = [&](CLI::App* sub) {
    sub->add_option("--store", ra.store, "Store file")->required()->check(CLI::ExistingFile);
    sub->add_option("--pose", ra.pose, "Ego pose descriptor")->required()->check(CLI::ExistingFile);
    sub->add_option("--cameras", ra.cameras, "Camera descriptors, in camera-id order")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--offsets", ra.offsets, "Arc-length offsets in meters")->delimiter(',');
    sub->add_option("--max-traversals", ra.max_traversals, "Traversals to use")->check(CLI::PositiveNumber);
    sub->add_option("--max-depth", ra.max_depth, "Discard returns beyond this depth; 0 disables");
    sub->add_option("--search-radius", ra.search_radius, "Traversal search radius in meters");
    sub->add_option("--exclude-start", ra.exclude_start, "Skip traversals overlapping this time window");
    sub->add_option("--exclude-end", ra.exclude_end);
    sub->add_option("--reduce", ra.reduce, "Per-pixel reduction")->check(CLI::IsMember({"max", "percentile"}));
    sub->add_option("--percentile", ra.percentile, "Percentile for --reduce percentile")->check(CLI::Range(0.0, 100.0));
  };

  auto* render = app.add_subcommand("render", "Write one depth map per (traversal, camera)");
  add_query_flags(render);
  render->add_option("--out", ra.out, "Output directory")->required();
  render->add_option("--sigma-t", ra.sigma_t, "Localization noise std in meters")->check(CLI::NonNegativeNumber);
  render->add_option("--sigma-r", ra.sigma_r, "Yaw noise std in degrees")->check(CLI::NonNegativeNumber);
  render->add_option("--seed", ra.seed, "Noise seed");
  render->add_flag("--perturb-stored", ra.perturb_stored, "Also perturb the poses of stored frames");
  render->add_flag("--pgm", ra.pgm, "Also write 16-bit PGM previews");

  auto* feat = app.add_subcommand("featurize", "Downsample and pool depth maps into a feature tensor");
  std::string depth_dir, feat_out, feat_mode = "downavg", feat_pool = "mean";
  std::uint32_t feat_scale = kDefaultFeatureScale;
  std::optional<std::uint32_t> feat_camera;
  feat->add_option("--depth-dir", depth_dir, "Directory written by render")->required()->check(CLI::ExistingDirectory);
  feat->add_option("--mode", feat_mode, "Featurizer")->check(CLI::IsMember({"downavg"}));
  feat->add_option("--scale", feat_scale, "Downsampling factor")->check(CLI::PositiveNumber);
  feat->add_option("--pool", feat_pool, "Pooling across traversals")->check(CLI::IsMember({"mean", "max"}));
  feat->add_option("--camera", feat_camera, "Only this camera id");
  feat->add_option("--out", feat_out, "Tensor file; gets a _c<i> suffix per camera when several")->required();

  auto* bench_cmd = app.add_subcommand("bench", "Time the query to feature pipeline");
  add_query_flags(bench_cmd);
  unsigned repeat = 10;
  std::size_t scaling_points = 0;
  bench_cmd->add_option("--repeat", repeat, "Runs")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--scale", feat_scale, "Featurizer downsampling factor")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--scaling-points", scaling_points,
                        "Also time rendering N and 2N points drawn from the scene");

  auto* score = app.add_subcommand("score", "Detection score from aggregated metrics");
  double s_map = 0, s_ate = 0, s_ase = 0, s_aoe = 0;
  score->add_option("--map", s_map, "mAP in [0, 1]")->required();
  score->add_option("--ate", s_ate, "Average translation error")->required();
  score->add_option("--ase", s_ase, "Average scale error")->required();
  score->add_option("--aoe", s_aoe, "Average orientation error")->required();

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic multi-traversal store");
  std::string scene_file, synth_out, export_dir, gt_pose, gt_dir;
  std::vector<std::string> synth_cams;
  std::size_t synth_n = 5;
  double synth_spacing = 5.0, synth_max_depth = kDefaultMaxDepth;
  synth_cmd->add_option("--scene", scene_file, "Scene description")->required()->check(CLI::ExistingFile);
  synth_cmd->add_option("--traversals", synth_n, "Traversals to generate")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--frame-spacing", synth_spacing, "Meters between frames")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--out", synth_out, "Store file to write")->required();
  synth_cmd->add_option("--export-dir", export_dir, "Also write PLY frames and pose descriptors here");
  synth_cmd->add_option("--gt-pose", gt_pose, "Ego pose for ground-truth depth")->check(CLI::ExistingFile);
  synth_cmd->add_option("--cameras", synth_cams, "Cameras for ground-truth depth")->check(CLI::ExistingFile);
  synth_cmd->add_option("--gt-dir", gt_dir, "Write ground-truth depth maps here");
  synth_cmd->add_option("--max-depth", synth_max_depth, "Ground-truth depth limit; 0 disables");

  auto* perturb = app.add_subcommand("perturb", "Apply localization noise to a pose descriptor");
  std::string p_pose, p_out;
  NoiseSpec p_noise;
  perturb->add_option("--pose", p_pose, "Pose descriptor")->required()->check(CLI::ExistingFile);
  perturb->add_option("--sigma-t", p_noise.sigma_t, "Translation noise std in meters")->check(CLI::NonNegativeNumber);
  perturb->add_option("--sigma-r", p_noise.sigma_r, "Yaw noise std in degrees")->check(CLI::NonNegativeNumber);
  perturb->add_option("--seed", p_noise.seed, "Noise seed");
  perturb->add_option("--out", p_out, "Output descriptor (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (build->parsed()) return cmd_build_store(build_in, build_out, build_spacing);
    if (render->parsed()) return cmd_render(ra, threads);
    if (feat->parsed()) return cmd_featurize(depth_dir, feat_scale, feat_pool, feat_out, feat_camera);
    if (bench_cmd->parsed()) return cmd_bench(ra, repeat, feat_scale, scaling_points, threads);
    if (score->parsed()) {
      std::printf("%.4f\n", detection_score(s_map, {s_ate, s_ase, s_aoe}));
      return 0;
    }
    if (synth_cmd->parsed()) {
      return cmd_synth(scene_file, synth_n, synth_spacing, synth_out, export_dir, gt_pose, synth_cams, gt_dir,
                       synth_max_depth);
    }
    if (perturb->parsed()) {
      PerturbRng rng(p_noise);
      const RigidPose out = perturb_pose(load_pose(p_pose), p_noise, rng);
      if (p_out.empty()) {
        write_pose_fields(std::cout, out);
      } else {
        save_pose(p_out, out);
      }
      return 0;
    }
  } catch (const UsageError& e) {
    return fail("usage", e.what(), 2);
  } catch (const IngestError& e) {
    return fail("ingest", "frame " + std::to_string(e.index()) + ": " + e.what(), 3);
  } catch (const ContractViolation& e) {
    return fail("contract", e.what(), 3);
  } catch (const FormatError& e) {
    return fail("format", e.what(), 4);
  } catch (const fs::filesystem_error& e) {
    return fail("io", e.what(), 5);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
