#include <gtest/gtest.h>

#include <sstream>

#include "asyncdepth/descriptor_io.hpp"
#include "test_util.hpp"

using namespace asyncdepth;

TEST(DescriptorIo, ParsesCameraFile) {
  std::istringstream in(R"(# front camera
fx = 100
fy: 110
cx = 160
cy = 120
width = 320
height = 240
qw = 1
qx = 0
qy = 0
qz = 0
tx = 0.5
ty = 0
tz = -1.5
)");
  const CameraModel cam = camera_from_key_values(parse_key_values(in));
  EXPECT_EQ(cam.fx(), 100);
  EXPECT_EQ(cam.fy(), 110);
  EXPECT_EQ(cam.width(), 320u);
  EXPECT_EQ(cam.height(), 240u);
  EXPECT_EQ(cam.extrinsics().translation(), Eigen::Vector3d(0.5, 0, -1.5));
}

TEST(DescriptorIo, MissingOrMalformedFieldsFail) {
  std::istringstream missing("fx = 1\n");
  EXPECT_THROW(camera_from_key_values(parse_key_values(missing)), FormatError);
  std::istringstream junk("qw = one\nqx=0\nqy=0\nqz=0\ntx=0\nty=0\ntz=0\n");
  EXPECT_THROW(pose_from_key_values(parse_key_values(junk)), FormatError);
  std::istringstream no_sep("just words\n");
  EXPECT_THROW(parse_key_values(no_sep), FormatError);
  std::istringstream frac_width("fx=1\nfy=1\ncx=1\ncy=1\nwidth=3.5\nheight=4\nqw=1\nqx=0\nqy=0\nqz=0\ntx=0\nty=0\ntz=0\n");
  EXPECT_THROW(camera_from_key_values(parse_key_values(frac_width)), FormatError);
}

TEST(DescriptorIo, SaveLoadRoundTripIsExact) {
  testutil::Rng rng(11);
  const auto dir = testutil::scratch_dir("descriptor_io");
  for (int i = 0; i < 20; ++i) {
    const CameraModel cam = testutil::random_camera(rng);
    save_camera(dir / "cam.txt", cam);
    const CameraModel back = load_camera(dir / "cam.txt");
    EXPECT_EQ(back.intrinsics(), cam.intrinsics());
    EXPECT_EQ(back.extrinsics(), cam.extrinsics());
    EXPECT_EQ(back.width(), cam.width());

    const RigidPose pose = testutil::random_pose(rng, 1e5);
    save_pose(dir / "pose.txt", pose);
    EXPECT_EQ(load_pose(dir / "pose.txt"), pose);
  }
}
