#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "esslam//errors.hpp"
#include "esslam/geometry.hpp"

using namespace esslam;
constexpr double kPi = std::numbers::pi;

namespace {
Eigen::Matrix3d homogeneous(const Pose2& p) {
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 0) = std::cos(p.theta);
  t(0, 1) = -std::sin(p.theta);
  t(1, 0) = std::sin(p.theta);
  t(1, 1) = std::cos(p.theta);
  t(0, 2) = p.x;
  t(1, 2) = p.y;
  return t;
}
}  // namespace

TEST(Geometry, NormalizeAngleRange) {
  EXPECT_NEAR(normalize_angle(3 * kPi / 2), -kPi / 2, 1e-12);
  EXPECT_NEAR(normalize_angle(-kPi), kPi, 1e-12);
  EXPECT_NEAR(normalize_angle(kPi), kPi, 1e-12);
  EXPECT_NEAR(normalize_angle(7.0), 7.0 - 2 * kPi, 1e-12);
}

TEST(Geometry, ComposeMatchesRotationMatrices) {
  const Pose2 a{0, 0, kPi / 2}, b{1, 0, 0};
  const Pose2 c = compose(a, b);
  EXPECT_NEAR(c.x, 0.0, 1e-12);
  EXPECT_NEAR(c.y, 1.0, 1e-12);
  EXPECT_NEAR(c.theta, kPi / 2, 1e-12);
  const Pose2 p{1.3, -0.4, 2.5}, q{-0.7, 2.1, -1.9};
  const Eigen::Matrix3d t = homogeneous(p) * homogeneous(q);
  const Pose2 r = compose(p, q);
  EXPECT_NEAR(r.x, t(0, 2), 1e-12);
  EXPECT_NEAR(r.y, t(1, 2), 1e-12);
  EXPECT_NEAR(r.theta, std::atan2(t(1, 0), t(0, 0)), 1e-12);
}

TEST(Geometry, BetweenMatchesRotationMatrices) {
  const RelPose r = between({0, 0, 0}, {2, 0, kPi / 2});
  EXPECT_NEAR(r.dx, 2.0, 1e-12);
  EXPECT_NEAR(r.dy, 0.0, 1e-12);
  EXPECT_NEAR(r.dpsi, kPi / 2, 1e-12);
  const Pose2 p{1.3, -0.4, 2.5}, q{-0.7, 2.1, -1.9};
  const Eigen::Matrix3d t = homogeneous(p).inverse() * homogeneous(q);
  const RelPose s = between(p, q);
  EXPECT_NEAR(s.dx, t(0, 2), 1e-12);
  EXPECT_NEAR(s.dy, t(1, 2), 1e-12);
  EXPECT_NEAR(s.dpsi, std::atan2(t(1, 0), t(0, 0)), 1e-12);
  const Pose2 back = compose(p, as_pose(s));
  EXPECT_NEAR(back.x, q.x, 1e-12);
  EXPECT_NEAR(back.y, q.y, 1e-12);
}

TEST(Geometry, MotionValidation) {
  MotionSpec ok{{1, 0, 0}, Eigen::Vector3d(0.01, 0.01, 0.001).asDiagonal()};
  EXPECT_NO_THROW(validate(ok));
  EXPECT_NO_THROW(validate(MotionSpec{{1, 0, 0}, Eigen::Matrix3d::Zero()}));
  MotionSpec bad = ok;
  bad.noise_cov(0, 0) = -1.0;
  EXPECT_THROW(validate(bad), ConfigError);
  bad = ok;
  bad.noise_cov(0, 1) = 0.005;
  EXPECT_THROW(validate(bad), ConfigError);
}

TEST(Geometry, DeterministicMotionIsComposition) {
  Rng rng(1);
  const Pose2 p = sample_motion({1, 2, 0.3}, MotionSpec{{1, 0, 0.1}, Eigen::Matrix3d::Zero()}, rng);
  const Pose2 q = compose({1, 2, 0.3}, {1, 0, 0.1});
  EXPECT_DOUBLE_EQ(p.x, q.x);
  EXPECT_DOUBLE_EQ(p.y, q.y);
  EXPECT_DOUBLE_EQ(p.theta, q.theta);
}

TEST(Geometry, MotionSampleMeanWithinThreeSigma) {
  Rng rng(7);
  const Eigen::Vector3d sig(0.1, 0.05, 0.02);
  const MotionSpec spec{{1, 0.5, 0.2}, sig.cwiseAbs2().asDiagonal()};
  const int n = 100000;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) mean += between({0, 0, 0}, sample_motion({0, 0, 0}, spec, rng)).vector();
  mean /= n;
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(mean[i], spec.action.vector()[i], 3 * sig[i] / std::sqrt(n) + 1e-12);
}

TEST(Geometry, FieldOfView) {
  const SensorSpec s;
  EXPECT_TRUE(in_fov({0, 0, 0}, {5, 0, 0}, s));
  EXPECT_FALSE(in_fov({0, 0, 0}, {11, 0, 0}, s));
  const double b61 = 61.0 * kPi / 180.0, b59 = 59.0 * kPi / 180.0;
  EXPECT_FALSE(in_fov({0, 0, 0}, {5 * std::cos(b61), 5 * std::sin(b61), 0}, s));
  EXPECT_TRUE(in_fov({0, 0, 0}, {5 * std::cos(b59), 5 * std::sin(b59), 0}, s));
  EXPECT_FALSE(in_fov({0, 0, 0}, {-5, 0, 0}, s));
}

TEST(Geometry, SensorValidation) {
  EXPECT_THROW(validate(SensorSpec{-1.0, 1.0}), ConfigError);
  EXPECT_THROW(validate(SensorSpec{10.0, 0.0}), ConfigError);
}
