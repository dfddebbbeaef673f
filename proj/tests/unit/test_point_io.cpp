#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "asyncdepth/point_io.hpp"
#include "test_util.hpp"

using namespace asyncdepth;

namespace {

PointCloud sample_cloud() {
  return {{{1.5f, -2.25f, 3.0f}, {0.1f, 0.2f, 0.3f}, {-1e4f, 7.0f, 1e-3f}}, Frame::sensor_local};
}

}  // namespace

TEST(PlyIo, BinaryAndAsciiRoundTrip) {
  for (bool binary : {true, false}) {
    std::stringstream ss;
    write_ply(ss, sample_cloud(), binary);
    const PointCloud back = read_ply(ss);
    EXPECT_EQ(back.points, sample_cloud().points) << (binary ? "binary" : "ascii");
  }
}

TEST(PlyIo, SkipsExtraPropertiesAndElements) {
  std::stringstream ss;
  ss << "ply\nformat ascii 1.0\ncomment made by hand\n"
     << "element vertex 2\nproperty double x\nproperty uchar intensity\nproperty double y\n"
     << "property double z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n"
     << "1 200 2 3\n4 100 5 6\n3 0 1 1\n";
  const PointCloud pc = read_ply(ss);
  ASSERT_EQ(pc.size(), 2u);
  EXPECT_EQ(pc.points[1], Eigen::Vector3f(4, 5, 6));
}

TEST(PlyIo, ReadsBigEndianBinary) {
  std::stringstream ss;
  ss << "ply\nformat binary_big_endian 1.0\nelement vertex 1\n"
     << "property float x\nproperty float y\nproperty float z\nend_header\n";
  for (float f : {1.0f, -2.0f, 0.5f}) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int s = 24; s >= 0; s -= 8) ss.put(static_cast<char>((bits >> s) & 0xFF));
  }
  const PointCloud pc = read_ply(ss);
  ASSERT_EQ(pc.size(), 1u);
  EXPECT_EQ(pc.points[0], Eigen::Vector3f(1, -2, 0.5));
}

TEST(PlyIo, RejectsMalformedInput) {
  std::stringstream bad_magic("plx\n");
  EXPECT_THROW(read_ply(bad_magic), FormatError);
  std::stringstream no_xyz("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n");
  EXPECT_THROW(read_ply(no_xyz), FormatError);
  std::stringstream truncated(
      "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
      "property float z\nend_header\n1 2 3\n");
  EXPECT_THROW(read_ply(truncated), FormatError);
}

TEST(XyzBlob, RoundTripAndSizeCheck) {
  const auto dir = testutil::scratch_dir("point_io");
  write_xyz_blob(dir / "f.bin", sample_cloud());
  EXPECT_EQ(std::filesystem::file_size(dir / "f.bin"), 36u);
  EXPECT_EQ(read_xyz_blob(dir / "f.bin").points, sample_cloud().points);
  std::ofstream(dir / "bad.bin", std::ios::binary) << "12345";
  EXPECT_THROW(read_xyz_blob(dir / "bad.bin"), FormatError);
}
