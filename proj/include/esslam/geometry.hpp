#pragma once

#include <Eigen/Core>

#include "esslam/rng.hpp"

namespace esslam {

// Wraps to (-pi, pi].
double normalize_angle(double a);

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Eigen::Vector3d vector() const { return {x, y, theta}; }
  static Pose2 from_vector(const Eigen::Vector3d& v) { return {v[0], v[1], normalize_angle(v[2])}; }
};

// Target expressed in the reference frame; dpsi is the object heading relative to the camera heading.
struct RelPose {
  double dx = 0.0;
  double dy = 0.0;
  double dpsi = 0.0;

  Eigen::Vector3d vector() const { return {dx, dy, dpsi}; }
  static RelPose from_vector(const Eigen::Vector3d& v) { return {v[0], v[1], normalize_angle(v[2])}; }
};

struct MotionSpec {
  Pose2 action;
  Eigen::Matrix3d noise_cov = Eigen::Matrix3d::Zero();
};

struct SensorSpec {
  double max_range = 10.0;
  double half_angle = 1.0471975511965976;  // 60 degrees
};

Pose2 compose(const Pose2& base, const Pose2& increment);
RelPose between(const Pose2& reference, const Pose2& target);
Pose2 as_pose(const RelPose& r);

// Throws ConfigError unless the covariance is zero (deterministic) or symmetric positive definite.
void validate(const MotionSpec& spec);
void validate(const SensorSpec& spec);

Pose2 sample_motion(const Pose2& pose, const MotionSpec& spec, Rng& rng);

bool in_fov(const Pose2& camera, const Pose2& object, const SensorSpec& sensor);

// Residual-friendly difference: a - b with the angle wrapped.
Eigen::Vector3d pose_difference(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

}  // namespace esslam
