#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "asyncdepth/depth_renderer.hpp"
#include "test_util.hpp"

using namespace asyncdepth;

namespace {

CameraModel small_camera() { return CameraModel::pinhole(50.0, 50.0, 32.0, 24.0, 64, 48); }

FrameRecord frame_with(TraversalId id, std::int64_t index, const RigidPose& pose,
                       std::vector<Eigen::Vector3f> pts) {
  FrameRecord f;
  f.traversal_id = id;
  f.frame_index = index;
  f.pose = pose;
  f.points.points = std::move(pts);
  return f;
}

PointCloudD global_cloud(std::vector<Eigen::Vector3d> pts) { return {std::move(pts), Frame::global}; }

PointCloudD random_cloud(testutil::Rng& rng, const RigidPose& ego, const CameraModel& cam, std::size_t n) {
  return testutil::frustum_points(rng, ego, cam, n, 0.5, 80.0, 0.2);
}

bool bit_equal(const DepthMap& a, const DepthMap& b) {
  if (a.width != b.width || a.height != b.height) return false;
  return std::equal(a.data.begin(), a.data.end(), b.data.begin(), [](float x, float y) {
    return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y);
  });
}

}  // namespace

TEST(Densify, IdentityPoseKeepsPoints) {
  const std::vector<FrameRecord> frames{frame_with(3, 0, {}, {{1, 2, 3}, {-4, 5, 0.5f}})};
  const DensifiedCloud c = densify(frames);
  EXPECT_EQ(c.traversal_id, 3u);
  EXPECT_EQ(c.points.frame, Frame::global);
  ASSERT_EQ(c.points.size(), 2u);
  EXPECT_EQ(c.points.points[0], Eigen::Vector3d(1, 2, 3));
  EXPECT_EQ(c.points.points[1], Eigen::Vector3d(-4, 5, 0.5));
}

TEST(Densify, ConcatenatesInFrameOrderWithoutDedup) {
  std::vector<Eigen::Vector3f> ten(10, Eigen::Vector3f(1, 1, 1));
  const std::vector<FrameRecord> frames{frame_with(0, 0, {}, ten),
                                        frame_with(0, 1, RigidPose::from_translation({5, 0, 0}), ten)};
  const DensifiedCloud c = densify(frames);
  ASSERT_EQ(c.points.size(), 20u);
  EXPECT_EQ(c.points.points[0], Eigen::Vector3d(1, 1, 1));
  EXPECT_EQ(c.points.points[10], Eigen::Vector3d(6, 1, 1));
  EXPECT_EQ(c.source_frames, (std::vector<std::int64_t>{0, 1}));
}

TEST(Densify, MixedTraversalsAreRejected) {
  const std::vector<FrameRecord> frames{frame_with(0, 0, {}, {{1, 1, 1}}), frame_with(1, 0, {}, {{1, 1, 1}})};
  EXPECT_THROW(densify(frames), ContractViolation);
}

TEST(RenderDepth, EmptyCloudIsAllSentinel) {
  const DepthMap m = render_points(global_cloud({}), {}, small_camera());
  EXPECT_EQ(m.width, 64u);
  EXPECT_EQ(m.height, 48u);
  EXPECT_EQ(m.covered_pixels(), 0u);
  for (float d : m.data) EXPECT_EQ(d, kEmptyDepth);
}

TEST(RenderDepth, SamePixelKeepsFarthest) {
  // identity ego and extrinsics: camera axes coincide with global axes
  const CameraModel cam = small_camera();
  const DepthMap m = render_points(global_cloud({{0.0, 0.0, 5.0}, {0.0, 0.0, 12.0}}), {}, cam);
  EXPECT_EQ(m.at(32, 24), 12.0f);
  EXPECT_EQ(m.covered_pixels(), 1u);
  const DepthMap rev = render_points(global_cloud({{0.0, 0.0, 12.0}, {0.0, 0.0, 5.0}}), {}, cam);
  EXPECT_EQ(rev.at(32, 24), 12.0f);
}

TEST(RenderDepth, RejectsNonGlobalCloud) {
  PointCloudD pc{{{0, 0, 1}}, Frame::sensor_local};
  EXPECT_THROW(render_points(pc, {}, small_camera()), ContractViolation);
}

TEST(RenderDepth, WallAtTwentyMetersReadsTwenty) {
  // a dense wall 20 m ahead of a looking-forward camera on a yawed ego
  const RigidPose ego = RigidPose::from_yaw(0.7, {12.0, -3.0, 0.0});
  const CameraModel cam = CameraModel::pinhole(300, 300, 200, 100, 400, 200, looking_extrinsics(0.0, {1.5, 0, 1.6}));
  const RigidPose cam_to_global = compose(ego, cam.extrinsics().inverse());
  std::vector<Eigen::Vector3d> pts;
  for (double x = -15.0; x <= 15.0; x += 0.02) {
    for (double y = -7.0; y <= 7.0; y += 0.02) pts.push_back(cam_to_global.apply({x, y, 20.0}));
  }
  const DepthMap m = render_points(global_cloud(pts), ego, cam);
  EXPECT_EQ(m.covered_pixels(), std::size_t{400} * 200);
  for (float d : m.data) EXPECT_NEAR(d, 20.0, 1e-4);
}

TEST(RenderDepth, ClipDiscardsFarReturnsBeforeMax) {
  const CameraModel cam = small_camera();
  const auto cloud = global_cloud({{0, 0, 30}, {0, 0, 70}, {20, 0, 80}});
  const DepthMap clipped = render_points(cloud, {}, cam);
  EXPECT_EQ(clipped.at(32, 24), 30.0f);
  EXPECT_EQ(clipped.covered_pixels(), 1u);
  RenderOptions unclipped;
  unclipped.max_depth = 0.0;
  const DepthMap all = render_points(cloud, {}, cam, unclipped);
  EXPECT_EQ(all.at(32, 24), 70.0f);
  EXPECT_EQ(all.covered_pixels(), 2u);
}

TEST(RenderDepth, ValuesAreSentinelOrBeyondZNear) {
  testutil::Rng rng(31);
  const CameraModel cam = small_camera();
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 5000; ++i) {
    pts.emplace_back(testutil::uniform(rng, -1, 1), testutil::uniform(rng, -1, 1), testutil::uniform(rng, -0.01, 0.05));
  }
  const DepthMap m = render_points(global_cloud(pts), {}, cam);
  for (float d : m.data) EXPECT_TRUE(d == kEmptyDepth || d > kDefaultZNear);
}

TEST(RenderDepth, UnionEqualsPixelwiseMax) {
  testutil::Rng rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    const RigidPose ego = testutil::random_pose(rng);
    const CameraModel cam = testutil::random_camera(rng);
    const auto a = random_cloud(rng, ego, cam, 1 + trial * 37);
    const auto b = random_cloud(rng, ego, cam, 2 + trial * 11);
    PointCloudD ab = a;
    ab.points.insert(ab.points.end(), b.points.begin(), b.points.end());
    const DepthMap ra = render_points(a, ego, cam);
    EXPECT_TRUE(bit_equal(render_points(ab, ego, cam), pixelwise_max(ra, render_points(b, ego, cam))));
    EXPECT_TRUE(bit_equal(pixelwise_max(ra, render_points(global_cloud({}), ego, cam)), ra));
  }
}

TEST(RenderDepth, PointOrderDoesNotMatter) {
  testutil::Rng rng(33);
  const RigidPose ego = testutil::random_pose(rng);
  const CameraModel cam = testutil::random_camera(rng);
  auto cloud = random_cloud(rng, ego, cam, 20000);
  const DepthMap ref = render_points(cloud, ego, cam);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(cloud.points.begin(), cloud.points.end(), rng);
    EXPECT_TRUE(bit_equal(render_points(cloud, ego, cam), ref));
  }
}

TEST(RenderDepth, EveryPixelValueComesFromAnInputPoint) {
  testutil::Rng rng(34);
  for (int trial = 0; trial < 20; ++trial) {
    const RigidPose ego = testutil::random_pose(rng);
    const CameraModel cam = testutil::random_camera(rng);
    const auto cloud = random_cloud(rng, ego, cam, 300);
    const DepthMap m = render_points(cloud, ego, cam);
    const CameraProjector proj(ego, cam);
    std::vector<float> depths;
    for (const auto& p : cloud.points) depths.push_back(static_cast<float>(proj.to_camera(p).z()));
    for (float d : m.data) {
      if (d == kEmptyDepth) continue;
      EXPECT_NE(std::find(depths.begin(), depths.end(), d), depths.end());
    }
  }
}

TEST(RenderDepth, CommonRigidMotionLeavesMapUnchanged) {
  // dyadic coordinates and axis-aligned rotations keep every operation exact
  const CameraModel cam = CameraModel::pinhole(80, 80, 40, 30, 80, 60, looking_extrinsics(0.0, {1, 0, 1.5}));
  const RigidPose ego = RigidPose::from_translation({3, -2, 0});
  const RigidPose motion = RigidPose::from_translation({64, -128, 0});
  testutil::Rng rng(35);
  auto cloud = random_cloud(rng, ego, cam, 2000);
  for (auto& p : cloud.points) p = (p * 1024.0).array().round().matrix() / 1024.0;
  PointCloudD moved = cloud;
  for (auto& p : moved.points) p = motion.apply(p);
  EXPECT_TRUE(bit_equal(render_points(cloud, ego, cam), render_points(moved, compose(motion, ego), cam)));
}

TEST(RenderDepth, ThreadCountDoesNotChangeOutput) {
  testutil::Rng rng(36);
  const RigidPose ego = testutil::random_pose(rng);
  const CameraModel cam = testutil::random_camera(rng);
  const auto cloud = random_cloud(rng, ego, cam, 50000);
  const DepthMap one = render_points(cloud, ego, cam);
  for (unsigned t : {2u, 3u, 8u}) {
    RenderOptions opts;
    opts.threads = t;
    EXPECT_TRUE(bit_equal(render_points(cloud, ego, cam, opts), one));
  }
}

TEST(RenderDepth, PercentileReduction) {
  const CameraModel cam = small_camera();
  const auto cloud = global_cloud({{0, 0, 4}, {0, 0, 8}, {0, 0, 2}, {0, 0, 6}});
  RenderOptions opts;
  opts.reduce = DepthReduce::percentile;
  opts.percentile = 50.0;
  EXPECT_EQ(render_points(cloud, {}, cam, opts).at(32, 24), 4.0f);
  opts.percentile = 100.0;
  EXPECT_EQ(render_points(cloud, {}, cam, opts).at(32, 24), 8.0f);
  opts.percentile = 0.0;
  EXPECT_EQ(render_points(cloud, {}, cam, opts).at(32, 24), 2.0f);
}

TEST(RenderAll, GridPerTraversalAndCamera) {
  TraversalStore store;
  for (int t = 0; t < 3; ++t) {
    std::vector<FrameRecord> frames;
    for (int f = 0; f < 5; ++f) {
      // points 15 m ahead of each frame along +x
      frames.push_back(frame_with(0, f, RigidPose::from_translation({10.0 * f - 20.0, 0.5 * t, 0}),
                                  {{15, 0, 1}, {15, 1, 1.5f}, {15, -1, 0.5f}}));
    }
    store.ingest_traversal(frames);
  }
  const std::vector<CameraModel> cams{
      CameraModel::pinhole(100, 100, 50, 40, 100, 80, looking_extrinsics(0.0, {0, 0, 1})),
      CameraModel::pinhole(100, 100, 50, 40, 100, 80, looking_extrinsics(M_PI, {0, 0, 1}))};
  const DepthGrid grid = render_all({}, cams, QueryConfig::surround(2), store, {}, 2);
  EXPECT_EQ(grid.traversals, (std::vector<TraversalId>{0, 1}));
  ASSERT_EQ(grid.maps.size(), 4u);
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_EQ(grid.at(n, i).camera_id, i);
      EXPECT_EQ(grid.at(n, i).traversal_id, grid.traversals[n]);
      EXPECT_GT(grid.at(n, i).covered_pixels(), 0u);
    }
  }
  // the threaded grid equals the single-threaded one
  const DepthGrid seq = render_all({}, cams, QueryConfig::surround(2), store, {}, 1);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_TRUE(bit_equal(grid.maps[k], seq.maps[k]));
}

TEST(RenderAll, NoTraversalGivesEmptyGridAndDiagnostic) {
  TraversalStore store;
  const std::vector<CameraModel> cams{small_camera()};
  const DepthGrid g = render_all({}, cams, QueryConfig::surround(), store);
  EXPECT_TRUE(g.empty());
  EXPECT_TRUE(g.maps.empty());
  ASSERT_EQ(g.diagnostics.size(), 1u);
}

TEST(RenderAll, RepeatedFrameAcrossOffsetsCountsOnce) {
  TraversalMatch m;
  auto f = std::make_shared<const FrameRecord>(frame_with(0, 0, {}, {{1, 1, 1}}));
  m.frames = {f, f, f};
  EXPECT_EQ(unique_frames(m).size(), 1u);
}

TEST(DepthMapFile, RoundTripIsBitExact) {
  DepthMap m = DepthMap::empty(7, 5);
  testutil::Rng rng(37);
  for (auto& d : m.data) {
    if (testutil::uniform(rng, 0, 1) < 0.6) d = static_cast<float>(testutil::uniform(rng, 0.01, 60));
  }
  std::stringstream ss;
  write_depth_map(ss, m);
  EXPECT_EQ(ss.str().size(), 12u + 4u * 35u);
  const DepthMap back = read_depth_map(ss);
  EXPECT_TRUE(bit_equal(back, m));

  std::stringstream bad("ADTF");
  EXPECT_THROW(read_depth_map(bad), FormatError);
}

TEST(DepthMapFile, PgmExportQuantizesMillimeters) {
  DepthMap m = DepthMap::empty(2, 1);
  m.at(1, 0) = 12.3456f;
  const auto path = testutil::scratch_dir("pgm") / "d.pgm";
  export_pgm16(path, m);
  std::ifstream in(path, std::ios::binary);
  std::string magic, dims_w, dims_h, maxv;
  in >> magic >> dims_w >> dims_h >> maxv;
  in.get();
  unsigned char px[4];
  in.read(reinterpret_cast<char*>(px), 4);
  EXPECT_EQ(magic, "P5");
  EXPECT_EQ(maxv, "65535");
  EXPECT_EQ(px[0] * 256 + px[1], 0);
  EXPECT_EQ(px[2] * 256 + px[3], 12346);
}
