#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "asyncdepth/errors.hpp"

namespace asyncdepth {

/// Which coordinate system a point cloud is expressed in.
enum class Frame : std::uint8_t { sensor_local, global, camera_local };

inline std::string_view to_string(Frame f) {
  switch (f) {
    case Frame::sensor_local: return "sensor-local";
    case Frame::global: return "global";
    case Frame::camera_local: return "camera-local";
  }
  return "unknown";
}

template <typename Scalar>
struct BasicPointCloud {
  using Point = Eigen::Matrix<Scalar, 3, 1>;

  std::vector<Point> points;
  Frame frame = Frame::sensor_local;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }

  bool all_finite() const {
    for (const auto& p : points) {
      if (!p.allFinite()) return false;
    }
    return true;
  }
};

/// Storage payload: f32 coordinates.
using PointCloud = BasicPointCloud<float>;
/// Transformed payload: f64 coordinates, used once a pose has been applied.
using PointCloudD = BasicPointCloud<double>;

inline void require_frame(Frame got, Frame want, std::string_view op) {
  if (got != want) {
    throw ContractViolation(std::string(op) + ": expected " + std::string(to_string(want)) +
                            " point cloud, got " + std::string(to_string(got)));
  }
}

/// Proper rigid transform x -> R x + t. Rotation kept as a unit quaternion.
class RigidPose {
 public:
  RigidPose() : rotation_(Eigen::Quaterniond::Identity()), translation_(Eigen::Vector3d::Zero()) {}

  /// Normalizes `rotation` unless it is already unit to within 1e-12, so
  /// stored unit quaternions survive a round trip bit-exactly. Throws on a
  /// non-finite or zero quaternion.
  RigidPose(const Eigen::Quaterniond& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {
    const double n = rotation_.norm();
    if (!std::isfinite(n) || n < 1e-12 || !translation_.allFinite()) {
      throw ContractViolation("RigidPose: rotation must be a finite non-zero quaternion and "
                              "translation finite");
    }
    if (std::abs(n - 1.0) > 1e-12) rotation_.coeffs() /= n;
  }

  static RigidPose identity() { return {}; }

  static RigidPose from_translation(const Eigen::Vector3d& t) {
    return {Eigen::Quaterniond::Identity(), t};
  }

  /// `rotation` must be orthonormal with determinant +1 (checked loosely).
  static RigidPose from_matrix(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& t) {
    if ((rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() >
            1e-6 ||
        rotation.determinant() < 0.0) {
      throw ContractViolation("RigidPose: matrix is not a proper rotation");
    }
    return {Eigen::Quaterniond(rotation), t};
  }

  /// Rotation about the +z axis by `yaw` radians.
  static RigidPose from_yaw(double yaw, const Eigen::Vector3d& t) {
    return {Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ())), t};
  }

  const Eigen::Quaterniond& rotation() const noexcept { return rotation_; }
  const Eigen::Vector3d& translation() const noexcept { return translation_; }
  Eigen::Matrix3d rotation_matrix() const { return rotation_.toRotationMatrix(); }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_matrix();
    m.topRightCorner<3, 1>() = translation_;
    return m;
  }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }

  RigidPose inverse() const {
    const Eigen::Quaterniond inv = rotation_.conjugate();
    return {inv, -(inv * translation_)};
  }

  friend bool operator==(const RigidPose& a, const RigidPose& b) {
    return a.rotation_.coeffs() == b.rotation_.coeffs() && a.translation_ == b.translation_;
  }

 private:
  Eigen::Quaterniond rotation_;
  Eigen::Vector3d translation_;
};

/// The transform that applies `b` first, then `a`.
inline RigidPose compose(const RigidPose& a, const RigidPose& b) {
  return {a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation()};
}

inline RigidPose operator*(const RigidPose& a, const RigidPose& b) { return compose(a, b); }

/// Pinhole camera: intrinsics K plus the ego->camera extrinsic transform.
/// Camera-local axes: z along the optical axis, u (columns) along x, v (rows) along y.
class CameraModel {
 public:
  CameraModel(const Eigen::Matrix3d& intrinsics, const RigidPose& extrinsics, std::uint32_t width,
              std::uint32_t height)
      : intrinsics_(intrinsics), extrinsics_(extrinsics), width_(width), height_(height) {
    validate();
  }

  static CameraModel pinhole(double fx, double fy, double cx, double cy, std::uint32_t width,
                             std::uint32_t height, const RigidPose& extrinsics = {}) {
    Eigen::Matrix3d k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return {k, extrinsics, width, height};
  }

  const Eigen::Matrix3d& intrinsics() const noexcept { return intrinsics_; }
  const RigidPose& extrinsics() const noexcept { return extrinsics_; }
  std::uint32_t width() const noexcept { return width_; }
  std::uint32_t height() const noexcept { return height_; }
  double fx() const { return intrinsics_(0, 0); }
  double fy() const { return intrinsics_(1, 1); }
  double cx() const { return intrinsics_(0, 2); }
  double cy() const { return intrinsics_(1, 2); }

 private:
  void validate() const {
    if (!intrinsics_.allFinite()) throw ContractViolation("CameraModel: non-finite intrinsics");
    if (intrinsics_(2, 0) != 0.0 || intrinsics_(2, 1) != 0.0 || intrinsics_(2, 2) != 1.0 ||
        intrinsics_(1, 0) != 0.0) {
      throw ContractViolation("CameraModel: intrinsics must be upper triangular with K[2][2] = 1");
    }
    if (!(fx() > 0.0) || !(fy() > 0.0)) {
      throw ContractViolation("CameraModel: focal lengths must be positive");
    }
    if (width_ == 0 || height_ == 0) throw ContractViolation("CameraModel: empty image");
    if (!(cx() >= 0.0 && cx() < width_ && cy() >= 0.0 && cy() < height_)) {
      throw ContractViolation("CameraModel: principal point outside the image");
    }
  }

  Eigen::Matrix3d intrinsics_;
  RigidPose extrinsics_;
  std::uint32_t width_;
  std::uint32_t height_;
};

/// Ego->camera extrinsics for a camera at `position` (ego frame: x forward,
/// y left, z up) looking horizontally along ego heading `yaw` radians.
/// Camera axes: x right, y down, z forward.
inline RigidPose looking_extrinsics(double yaw, const Eigen::Vector3d& position) {
  Eigen::Matrix3d base;  // ego axes -> camera axes at yaw 0
  base << 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0;
  const Eigen::Matrix3d r = base * Eigen::AngleAxisd(-yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  return RigidPose(Eigen::Quaterniond(r), -(r * position));
}

inline constexpr double kDefaultZNear = 1e-3;

struct PixelDepth {
  std::int32_t u;  // column
  std::int32_t v;  // row
  double depth;

  friend bool operator==(const PixelDepth&, const PixelDepth&) = default;
};

struct ProjectionResult {
  std::vector<PixelDepth> pixels;
  std::size_t dropped = 0;
};

/// Global point -> camera-local point -> pixel, for one (ego pose, camera) pair.
/// transform_to_camera, project_points and the renderer all evaluate through
/// this type so that their arithmetic is identical.
class CameraProjector {
 public:
  CameraProjector(const RigidPose& ego, const CameraModel& cam, double z_near = kDefaultZNear)
      : chain_(compose(cam.extrinsics(), ego.inverse())),
        rotation_(chain_.rotation_matrix()),
        translation_(chain_.translation()),
        k_(cam.intrinsics()),
        width_(cam.width()),
        height_(cam.height()),
        z_near_(z_near) {}

  /// Projection only; the point is already camera-local.
  CameraProjector(const CameraModel& cam, double z_near = kDefaultZNear)
      : rotation_(Eigen::Matrix3d::Identity()),
        translation_(Eigen::Vector3d::Zero()),
        k_(cam.intrinsics()),
        width_(cam.width()),
        height_(cam.height()),
        z_near_(z_near) {}

  const RigidPose& chain() const noexcept { return chain_; }

  Eigen::Vector3d to_camera(const Eigen::Vector3d& p) const {
    return rotation_ * p + translation_;
  }

  /// False when the point is behind z_near or floors outside the image.
  bool project(const Eigen::Vector3d& q, PixelDepth& out) const {
    const double z = q.z();
    if (!(z > z_near_)) return false;
    const double u_hat = (k_(0, 0) * q.x() + k_(0, 1) * q.y() + k_(0, 2) * z) / z;
    const double v_hat = (k_(1, 1) * q.y() + k_(1, 2) * z) / z;
    const double u = std::floor(u_hat);
    const double v = std::floor(v_hat);
    if (!(u >= 0.0 && u < width_ && v >= 0.0 && v < height_)) return false;
    out = {static_cast<std::int32_t>(u), static_cast<std::int32_t>(v), z};
    return true;
  }

  std::uint32_t width() const noexcept { return width_; }
  std::uint32_t height() const noexcept { return height_; }
  double z_near() const noexcept { return z_near_; }

 private:
  RigidPose chain_;
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
  Eigen::Matrix3d k_;
  std::uint32_t width_;
  std::uint32_t height_;
  double z_near_;
};

/// q_cam = T * G^-1 * q for every point of a global cloud.
template <typename Scalar>
PointCloudD transform_to_camera(const BasicPointCloud<Scalar>& pc, const RigidPose& ego,
                                const CameraModel& cam) {
  require_frame(pc.frame, Frame::global, "transform_to_camera");
  const CameraProjector proj(ego, cam);
  PointCloudD out;
  out.frame = Frame::camera_local;
  out.points.reserve(pc.size());
  for (const auto& p : pc.points) out.points.push_back(proj.to_camera(p.template cast<double>()));
  return out;
}

/// Pinhole projection with floor-to-pixel. Points behind z_near or outside
/// the image are dropped and counted.
template <typename Scalar>
ProjectionResult project_points(const BasicPointCloud<Scalar>& pc, const CameraModel& cam,
                                double z_near = kDefaultZNear) {
  require_frame(pc.frame, Frame::camera_local, "project_points");
  const CameraProjector proj(cam, z_near);
  ProjectionResult result;
  result.pixels.reserve(pc.size());
  PixelDepth px{};
  for (const auto& p : pc.points) {
    if (proj.project(p.template cast<double>(), px)) {
      result.pixels.push_back(px);
    } else {
      ++result.dropped;
    }
  }
  return result;
}

/// Applies `pose` to every point; the caller states the resulting frame.
template <typename Scalar>
PointCloudD transform_points(const BasicPointCloud<Scalar>& pc, const RigidPose& pose,
                             Frame result_frame) {
  const Eigen::Matrix3d r = pose.rotation_matrix();
  const Eigen::Vector3d& t = pose.translation();
  PointCloudD out;
  out.frame = result_frame;
  out.points.reserve(pc.size());
  for (const auto& p : pc.points) out.points.push_back(r * p.template cast<double>() + t);
  return out;
}

}  // namespace asyncdepth
