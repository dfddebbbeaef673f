#pragma once

// Simulated localization error.
//
// Each call draws, in this order, from a std::mt19937_64 seeded with
// NoiseSpec::seed: one N(0,1) for the translation magnitude, three N(0,1) for
// the direction (normalized, which is uniform on the unit sphere) and one
// N(0,1) for the yaw. The stream advances the same way whatever the sigmas.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "asyncdepth/errors.hpp"
#include "asyncdepth/geometry.hpp"

namespace asyncdepth {

struct NoiseSpec {
  double sigma_t = 0.0;  // meters
  double sigma_r = 0.0;  // degrees of yaw
  std::uint64_t seed = 0;

  void validate() const {
    if (!(sigma_t >= 0.0) || !(sigma_r >= 0.0) || !std::isfinite(sigma_t) ||
        !std::isfinite(sigma_r)) {
      throw ContractViolation("NoiseSpec: sigmas must be finite and non-negative");
    }
  }
};

/// One draw of the noise model.
struct PoseNoise {
  double magnitude = 0.0;  // epsilon ~ N(0, sigma_t^2), meters
  Eigen::Vector3d direction = Eigen::Vector3d::UnitX();
  double yaw_deg = 0.0;  // ~ N(0, sigma_r^2)

  Eigen::Vector3d offset() const { return magnitude * direction; }
};

/// Per-executor random state. Not to be shared between threads.
class PerturbRng {
 public:
  explicit PerturbRng(std::uint64_t seed) : engine_(seed) {}
  explicit PerturbRng(const NoiseSpec& spec) : engine_(spec.seed) {}

  PoseNoise draw(const NoiseSpec& spec) {
    spec.validate();
    PoseNoise n;
    n.magnitude = spec.sigma_t * normal_(engine_);
    Eigen::Vector3d d;
    do {
      d = {normal_(engine_), normal_(engine_), normal_(engine_)};
    } while (d.squaredNorm() < 1e-24);
    n.direction = d.normalized();
    n.yaw_deg = spec.sigma_r * normal_(engine_);
    return n;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Shifts the translation by noise.offset() and turns the heading by
/// noise.yaw_deg about the global +z axis through the pose origin. Pitch and
/// roll are unchanged. Zero sigmas leave the pose bit-identical.
inline RigidPose apply_noise(const RigidPose& pose, const NoiseSpec& spec, const PoseNoise& noise) {
  Eigen::Quaterniond rotation = pose.rotation();
  Eigen::Vector3d translation = pose.translation();
  if (spec.sigma_t > 0.0) translation += noise.offset();
  if (spec.sigma_r > 0.0) {
    const double yaw = noise.yaw_deg * std::numbers::pi / 180.0;
    rotation = Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ())) * rotation;
  }
  if (spec.sigma_t == 0.0 && spec.sigma_r == 0.0) return pose;
  return {rotation, translation};
}

inline RigidPose perturb_pose(const RigidPose& pose, const NoiseSpec& spec, PerturbRng& rng) {
  return apply_noise(pose, spec, rng.draw(spec));
}

/// Yaw about +z in degrees of a pose, ZYX convention.
inline double yaw_degrees(const RigidPose& pose) {
  const Eigen::Matrix3d r = pose.rotation_matrix();
  return std::atan2(r(1, 0), r(0, 0)) * 180.0 / std::numbers::pi;
}

}  // namespace asyncdepth
