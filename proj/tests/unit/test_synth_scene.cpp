#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "asyncdepth/depth_featurizer.hpp"
#include "asyncdepth/synth_scene.hpp"
#include "scenes.hpp"
#include "test_util.hpp"

using namespace asyncdepth;
using namespace asyncdepth::synth;

namespace {

SceneSpec bare_scene() {
  SceneSpec s;
  s.ground_z.reset();
  s.route = {{0, 0, 0}, {10, 0, 0}};
  return s;
}

/// Fraction of pixels covered in `rendered` that match `gt` within tol.
double agreement(const DepthMap& rendered, const DepthMap& gt, double tol) {
  std::size_t covered = 0, ok = 0;
  for (std::size_t i = 0; i < rendered.data.size(); ++i) {
    if (rendered.data[i] == kEmptyDepth) continue;
    ++covered;
    if (gt.data[i] != kEmptyDepth && std::abs(rendered.data[i] - gt.data[i]) <= tol) ++ok;
  }
  return covered == 0 ? 0.0 : static_cast<double>(ok) / static_cast<double>(covered);
}

}  // namespace

TEST(RayCast, EmptySceneGivesEmptySweep) {
  EXPECT_TRUE(raycast_sweep(bare_scene(), RigidPose::from_translation({0, 0, 1.8})).empty());
}

TEST(RayCast, GroundHitAtFortyFiveDegrees) {
  const Ray ray{{0, 0, 2}, Eigen::Vector3d(1, 0, -1).normalized()};
  const auto t = intersect_plane_z(ray, 0.0);
  ASSERT_TRUE(t);
  EXPECT_NEAR(*t, 2.0 * std::sqrt(2.0), 1e-12);
  EXPECT_FALSE(intersect_plane_z({{0, 0, 2}, {1, 0, 1}}, 0.0));
  EXPECT_FALSE(intersect_plane_z({{0, 0, 2}, {1, 0, 0}}, 0.0));
}

TEST(RayCast, BoxFaceAtNine) {
  const Box box{{10, 0, 0}, {2, 2, 2}, 0.0};
  const auto t = intersect_box({{0, 0, 0}, {1, 0, 0}}, box);
  ASSERT_TRUE(t);
  EXPECT_DOUBLE_EQ(*t, 9.0);
  EXPECT_FALSE(intersect_box({{0, 0, 0}, {-1, 0, 0}}, box));
  EXPECT_FALSE(intersect_box({{0, 5, 0}, {1, 0, 0}}, box));
  // a yawed box: the corner faces the ray at distance 10 - sqrt(2)
  const Box turned{{10, 0, 0}, {2, 2, 2}, 45.0};
  EXPECT_NEAR(*intersect_box({{0, 0, 0}, {1, 0, 0}}, turned), 10.0 - std::sqrt(2.0), 1e-12);
}

TEST(RayCast, SweepPointsLieOnSurfaces) {
  SceneSpec s = bare_scene();
  s.ground_z = 0.0;
  s.static_boxes = {Box{{15, 3, 1}, {2, 2, 2}, 20.0}};
  const RigidPose sensor = RigidPose::from_yaw(0.3, {1, 2, 1.8});
  const PointCloud pc = raycast_sweep(s, sensor);
  ASSERT_FALSE(pc.empty());
  for (const auto& p : pc.points) {
    const Eigen::Vector3d g = sensor.apply(p.cast<double>());
    const Eigen::Vector3d local =
        Eigen::AngleAxisd(-20.0 * kDegToRad, Eigen::Vector3d::UnitZ()) * (g - Eigen::Vector3d(15, 3, 1));
    const bool on_ground = std::abs(g.z()) < 1e-4;
    const bool on_box = (local.cwiseAbs().array() <= 1.0 + 1e-4).all() &&
                        (local.cwiseAbs().array() >= 1.0 - 1e-4).any();
    EXPECT_TRUE(on_ground || on_box) << g.transpose();
    EXPECT_LE(p.cast<double>().norm(), s.lidar.max_range + 1e-3);
  }
}

TEST(RayCast, SweepIsDeterministic) {
  SceneSpec s = testutil::panel_scene();
  s.lidar.range_noise = 0.02;
  const RigidPose sensor = RigidPose::from_translation({5, 0, 1.8});
  EXPECT_EQ(raycast_sweep(s, sensor, {}, 3).points, raycast_sweep(s, sensor, {}, 3).points);
  EXPECT_NE(raycast_sweep(s, sensor, {}, 3).points, raycast_sweep(s, sensor, {}, 4).points);
}

TEST(GtDepth, FrontoParallelWall) {
  SceneSpec s = bare_scene();
  s.static_boxes = {Box{{30, 0, 0}, {2, 100, 100}, 0.0}};
  const CameraModel cam = CameraModel::pinhole(100, 100, 50, 40, 100, 80, looking_extrinsics(0.0, {0, 0, 1.5}));
  const DepthMap gt = gt_depth(s, RigidPose::from_translation({4, 0, 0}), cam);
  for (float d : gt.data) EXPECT_NEAR(d, 25.0, 1e-9);
  const DepthMap clipped = gt_depth(s, RigidPose::from_translation({4, 0, 0}), cam, 20.0);
  EXPECT_EQ(clipped.covered_pixels(), 0u);
}

TEST(Traversals, GeneratedAlongRouteWithSpacing) {
  const SceneSpec s = testutil::panel_scene();
  const auto travs = generate_traversals(s, 2, 5.0);
  ASSERT_EQ(travs.size(), 2u);
  for (std::size_t n = 0; n < 2; ++n) {
    ASSERT_EQ(travs[n].size(), 5u);
    for (std::size_t f = 0; f < 5; ++f) {
      EXPECT_EQ(travs[n][f].traversal_id, n);
      EXPECT_NEAR(travs[n][f].ego_position().x(), 5.0 * f, 0.5);
      EXPECT_NEAR(travs[n][f].ego_position().z(), s.lidar.mount_height, 1e-12);
    }
  }
  // different traversals get different jitter
  EXPECT_FALSE(travs[0][1].pose == travs[1][1].pose);
  // and regeneration is reproducible
  EXPECT_EQ(generate_traversals(s, 2, 5.0)[1][3].points.points, travs[1][3].points.points);
}

TEST(Traversals, RenderMatchesGroundTruthOnTransientFreeScene) {
  const SceneSpec s = testutil::panel_scene();
  const auto travs = generate_traversals(s, 1, testutil::kPanelSpacing);
  const DensifiedCloud cloud = densify(testutil::panel_frames(travs[0]));
  const DepthMap rendered = render_depth(cloud, testutil::panel_ego(), testutil::panel_camera());
  const DepthMap gt = gt_depth(s, testutil::panel_ego(), testutil::panel_camera());
  EXPECT_GT(rendered.covered_pixels(), 1000u);
  EXPECT_GE(agreement(rendered, gt, 1e-4), 0.99);
}

TEST(Traversals, TransientShowsInOnlyOneTraversal) {
  SceneSpec s = testutil::panel_scene();
  // a parked car in front of the backdrop during traversal 0 only
  s.transients = {{Box{{24.0, -1.0, 1.0}, {4.0, 2.0, 2.0}, 0.0}}};
  const auto travs = generate_traversals(s, 2, testutil::kPanelSpacing);
  const RigidPose ego = testutil::panel_ego();
  const CameraModel cam = testutil::panel_camera();
  const DepthMap gt = gt_depth(s, ego, cam);
  const DepthMap with = render_depth(densify(testutil::panel_frames(travs[0])), ego, cam);
  const DepthMap without = render_depth(densify(testutil::panel_frames(travs[1])), ego, cam);

  EXPECT_GE(agreement(without, gt, 1e-4), 0.99);

  const std::vector<FeatureTensor> feats{downavg_featurize(with, 1), downavg_featurize(without, 1)};
  const FeatureTensor pooled = pool_traversals(feats, PoolMode::mean);
  std::size_t transient_pixels = 0, pooled_off = 0;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    if (with.data[i] == kEmptyDepth || without.data[i] == kEmptyDepth || gt.data[i] == kEmptyDepth) continue;
    if (gt.data[i] - with.data[i] > 1.0) {
      ++transient_pixels;
      if (std::abs(pooled.data[i] - gt.data[i]) > 1e-3) ++pooled_off;
    }
  }
  EXPECT_GT(transient_pixels, 20u);
  EXPECT_EQ(pooled_off, transient_pixels);
}

TEST(SceneFile, RoundTrip) {
  SceneSpec s = testutil::panel_scene();
  s.transients = {{}, {Box{{1.5, 2.25, 0.125}, {1, 2, 3}, 33.3}}};
  s.lidar.range_noise = 0.01;
  std::stringstream ss;
  write_scene(ss, s);
  const SceneSpec back = parse_scene(ss);
  std::stringstream again;
  write_scene(again, back);
  EXPECT_EQ(ss.str(), again.str());
  EXPECT_FALSE(back.ground_z);
  ASSERT_EQ(back.transients.size(), 2u);
  EXPECT_EQ(back.transients[1][0].yaw_deg, 33.3);
}

TEST(SceneFile, Errors) {
  std::stringstream unknown("route = 0 0 0\nroute = 1 0 0\ncolour = red\n");
  EXPECT_THROW(parse_scene(unknown), FormatError);
  std::stringstream short_box("box = 1 2 3\nroute = 0 0 0\nroute = 1 0 0\n");
  EXPECT_THROW(parse_scene(short_box), FormatError);
  std::stringstream flat("box = 0 0 0 1 0 1 0\nroute = 0 0 0\nroute = 1 0 0\n");
  EXPECT_THROW(parse_scene(flat), ContractViolation);
  std::stringstream no_route("ground_z = 0\n");
  EXPECT_THROW(parse_scene(no_route), ContractViolation);
}
