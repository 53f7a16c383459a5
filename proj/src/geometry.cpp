#include "esslam/geometry.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>

#include "esslam/errors.hpp"

namespace esslam {

double normalize_angle(double a) {
  constexpr double pi = std::numbers::pi;
  double r = std::remainder(a, 2.0 * pi);
  if (r <= -pi) r += 2.0 * pi;
  return r;
}

Pose2 compose(const Pose2& base, const Pose2& increment) {
  const double c = std::cos(base.theta), s = std::sin(base.theta);
  return {base.x + c * increment.x - s * increment.y, base.y + s * increment.x + c * increment.y,
          normalize_angle(base.theta + increment.theta)};
}

RelPose between(const Pose2& reference, const Pose2& target) {
  const double c = std::cos(reference.theta), s = std::sin(reference.theta);
  const double tx = target.x - reference.x, ty = target.y - reference.y;
  return {c * tx + s * ty, -s * tx + c * ty, normalize_angle(target.theta - reference.theta)};
}

Pose2 as_pose(const RelPose& r) { return {r.dx, r.dy, normalize_angle(r.dpsi)}; }

void validate(const MotionSpec& spec) {
  const Eigen::Matrix3d& c = spec.noise_cov;
  if (!c.allFinite()) throw ConfigError("motion noise covariance has non-finite entries");
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw ConfigError("motion noise covariance is not symmetric");
  if (c.isZero(0.0)) return;
  Eigen::LLT<Eigen::Matrix3d> llt(c);
  if (llt.info() != Eigen::Success) throw ConfigError("motion noise covariance is not positive definite");
}

void validate(const SensorSpec& spec) {
  if (!(spec.max_range > 0.0)) throw ConfigError("sensor max_range must be positive");
  if (!(spec.half_angle > 0.0 && spec.half_angle <= std::numbers::pi))
    throw ConfigError("sensor half_angle must lie in (0, pi]");
}

Pose2 sample_motion(const Pose2& pose, const MotionSpec& spec, Rng& rng) {
  validate(spec);
  if (spec.noise_cov.isZero(0.0)) return compose(pose, spec.action);
  Eigen::Matrix3d L = spec.noise_cov.llt().matrixL();
  Eigen::Vector3d n = L * standard_normal(3, rng);
  Pose2 inc{spec.action.x + n[0], spec.action.y + n[1], spec.action.theta + n[2]};
  return compose(pose, inc);
}

bool in_fov(const Pose2& camera, const Pose2& object, const SensorSpec& sensor) {
  RelPose r = between(camera, object);
  double range = std::hypot(r.dx, r.dy);
  if (!(range < sensor.max_range)) return false;
  double bearing = std::atan2(r.dy, r.dx);
  return std::abs(bearing) < sensor.half_angle;
}

Eigen::Vector3d pose_difference(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return {a[0] - b[0], a[1] - b[1], normalize_angle(a[2] - b[2])};
}

}  // namespace esslam
