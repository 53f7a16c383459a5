#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "esslam//errors.hpp"
#include "esslam/factorgraph.hpp"

using namespace esslam;

namespace {
Eigen::MatrixXd cov3(double s) { return Eigen::Matrix3d::Identity() * s; }
}  // namespace

TEST(FactorGraph, LoopRecoversGroundTruth) {
  const Pose2 x0{0, 0, 0}, x1{1, 0, std::numbers::pi / 2}, x2{1, 1, std::numbers::pi};
  Graph g;
  g.add_variable(robot_key(0), Eigen::Vector3d(0.1, -0.1, 0.05));
  g.add_variable(robot_key(1), Eigen::Vector3d(1.2, 0.2, 1.3));
  g.add_variable(robot_key(2), Eigen::Vector3d(0.8, 1.3, 2.9));
  g.add_variable(object_key(7), Eigen::Vector3d(2.5, 0.5, 0.3));
  const Pose2 obj{2, 1, 0.5};
  g.add_factor(PriorFactor{robot_key(0), x0.vector(), cov3(1e-4)});
  const auto rel = [](const Pose2& a, const Pose2& b) { return as_pose(between(a, b)); };
  g.add_factor(OdometryFactor{robot_key(0), robot_key(1), {rel(x0, x1), Eigen::Matrix3d::Identity() * 0.01}});
  g.add_factor(OdometryFactor{robot_key(1), robot_key(2), {rel(x1, x2), Eigen::Matrix3d::Identity() * 0.01}});
  g.add_factor(GeometricFactor{robot_key(0), object_key(7), between(x0, obj), Eigen::Matrix3d::Identity() * 0.01});
  g.add_factor(GeometricFactor{robot_key(2), object_key(7), between(x2, obj), Eigen::Matrix3d::Identity() * 0.01});
  const OptimizeReport r = g.optimize();
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.final_cost, 1e-12);
  for (auto [k, p] : {std::pair{robot_key(0), x0}, {robot_key(1), x1}, {robot_key(2), x2}, {object_key(7), obj}})
    EXPECT_LE(pose_difference(g.value(k), p.vector()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FactorGraph, ChainMarginalVarianceGrows) {
  Graph g;
  const double q = 0.01, p0 = 1e-4;
  g.add_variable(robot_key(0), Eigen::Vector3d::Zero());
  g.add_factor(PriorFactor{robot_key(0), Eigen::Vector3d::Zero(), cov3(p0)});
  for (int k = 1; k <= 5; ++k) {
    g.add_variable(robot_key(k), Eigen::Vector3d(k, 0, 0));
    g.add_factor(OdometryFactor{robot_key(k - 1), robot_key(k), {Pose2{1, 0, 0}, Eigen::Matrix3d::Identity() * q}});
  }
  g.optimize();
  double prev = 0.0;
  for (int k = 0; k <= 5; ++k) {
    const MarginalGaussian mg = g.marginal({robot_key(k)});
    EXPECT_GT(mg.cov(0, 0), prev);
    // straight chain with zero heading: x variance is the linear sum
    EXPECT_NEAR(mg.cov(0, 0), p0 + k * q, 1e-9);
    prev = mg.cov(0, 0);
  }
}

TEST(FactorGraph, RejectsFactorWithUnknownKey) {
  Graph g;
  g.add_variable(robot_key(0), Eigen::Vector3d::Zero());
  EXPECT_THROW(g.add_factor(OdometryFactor{robot_key(0), robot_key(1), {}}), InputError);
}

TEST(FactorGraph, LinearGaussianEvidenceIsExact) {
  // x ~ N(1, 2), y | x ~ N(x, 3): integral over x of the product is N(y; 1, 5).
  Graph g;
  g.add_variable(lambda_key(1, 0), Eigen::VectorXd::Constant(1, 0.0));
  g.add_factor(PriorFactor{lambda_key(1, 0), Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Constant(1, 1, 2.0)});
  g.add_factor(PriorFactor{lambda_key(1, 0), Eigen::VectorXd::Constant(1, 0.4), Eigen::MatrixXd::Constant(1, 1, 3.0)});
  g.optimize();
  const double y = 0.4, v = 5.0;
  EXPECT_NEAR(g.log_evidence(), -0.5 * (y - 1) * (y - 1) / v - 0.5 * std::log(2 * std::numbers::pi * v), 1e-9);
}

TEST(FactorGraph, LaplaceEvidenceMatchesMonteCarloOnNearLinearProblem) {
  // One object seen from a known pose: evidence over the object pose, compared with importance sampling.
  Graph g;
  const Pose2 cam{0, 0, 0.3};
  g.add_variable(robot_key(0), cam.vector());
  g.add_variable(object_key(1), Eigen::Vector3d(3, 1, 0.5));
  g.add_factor(PriorFactor{robot_key(0), cam.vector(), cov3(1e-8)});
  g.add_factor(PriorFactor{object_key(1), Eigen::Vector3d(3, 1, 0.5), cov3(0.04)});
  const RelPose z{3.05, 0.15, 0.22};
  const Eigen::Matrix3d r = Eigen::Vector3d(0.01, 0.01, 0.004).asDiagonal();
  g.add_factor(GeometricFactor{robot_key(0), object_key(1), z, r});
  g.optimize();
  const double laplace = g.log_evidence();
  Rng rng(31);
  const int n = 200000;
  double acc = 0.0;
  const auto logn = [](const Eigen::Vector3d& d, const Eigen::Matrix3d& c) {
    return -0.5 * d.dot(c.inverse() * d) - 0.5 * std::log((2 * std::numbers::pi * c).determinant());
  };
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d o = Eigen::Vector3d(3, 1, 0.5) + 0.2 * standard_normal(3, rng);
    acc += std::exp(logn(pose_difference(between(cam, Pose2::from_vector(o)).vector(), z.vector()), r));
  }
  // the prior on the camera integrates to ~1 at its tight width
  EXPECT_NEAR(laplace, std::log(acc / n), 0.05);
}

TEST(FactorGraph, CondensedKeepsMarginal) {
  Graph g;
  g.add_variable(robot_key(0), Eigen::Vector3d::Zero());
  g.add_variable(robot_key(1), Eigen::Vector3d(1, 0, 0));
  g.add_variable(object_key(3), Eigen::Vector3d(3, 1, 0));
  g.add_factor(PriorFactor{robot_key(0), Eigen::Vector3d::Zero(), cov3(1e-3)});
  g.add_factor(OdometryFactor{robot_key(0), robot_key(1), {Pose2{1, 0, 0.1}, Eigen::Matrix3d::Identity() * 0.01}});
  g.add_factor(GeometricFactor{robot_key(1), object_key(3), RelPose{2, 1, 0}, Eigen::Matrix3d::Identity() * 0.02});
  g.optimize();
  const MarginalGaussian before = g.marginal({robot_key(1), object_key(3)});
  Graph c = g.condensed({robot_key(1), object_key(3)});
  EXPECT_EQ(c.num_variables(), 2u);
  const MarginalGaussian after = c.marginal({robot_key(1), object_key(3)});
  EXPECT_LE((before.cov - after.cov).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LE((before.mean - after.mean).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FactorGraph, JlpResidualExample) {
  auto model = std::make_shared<ClassifierModel>(ClassifierModel::model1());
  Graph g;
  g.add_variable(robot_key(0), Eigen::Vector3d::Zero());
  g.add_variable(object_key(1), Eigen::Vector3d(3, 0, 0));
  g.add_variable(lambda_key(1, 0), Eigen::VectorXd::Zero(1));
  g.add_variable(lambda_key(1, 1), Eigen::VectorXd::Zero(1));
  const double sig = std::sqrt(0.5);
  JlpFactor f{lambda_key(1, 0), lambda_key(1, 1), robot_key(0), object_key(1), Eigen::VectorXd::Constant(1, 1.0),
              Eigen::MatrixXd::Constant(1, 1, sig), model};
  const FactorEval e = jlp_residual(f, g);
  const double phi = 2.0 / sig;
  EXPECT_NEAR(e.residual[0], -phi, 1e-9);
  EXPECT_NEAR(e.cov(0, 0), phi * phi * sig + kJlpEpsilon, 1e-9);
  EXPECT_NEAR(e.cov(0, 0), 5.657, 1e-3);
  g.set_value(object_key(1), Eigen::Vector3d(3, 0, std::numbers::pi / 2));
  const FactorEval a = jlp_residual(f, g);
  EXPECT_NEAR(a.residual[0], 0.0, 1e-12);
  EXPECT_NEAR(a.cov(0, 0), kJlpEpsilon, 1e-15);
}

TEST(FactorGraph, LambdaHistoryEliminationKeepsLatestMarginal) {
  Graph g;
  g.add_variable(lambda_key(1, 0), Eigen::VectorXd::Zero(1));
  g.add_variable(lambda_key(1, 1), Eigen::VectorXd::Zero(1));
  g.add_variable(lambda_key(1, 2), Eigen::VectorXd::Zero(1));
  g.add_factor(PriorFactor{lambda_key(1, 0), Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 4.0)});
  g.add_factor(LinearFactor{{lambda_key(1, 0), lambda_key(1, 1)}, Eigen::VectorXd::Zero(2),
                            Eigen::RowVector2d(-1.0, 1.0) / std::sqrt(0.5), Eigen::VectorXd::Constant(1, 2.0)});
  g.add_factor(LinearFactor{{lambda_key(1, 1), lambda_key(1, 2)}, Eigen::VectorXd::Zero(2),
                            Eigen::RowVector2d(-1.0, 1.0) / std::sqrt(0.25), Eigen::VectorXd::Constant(1, 1.0)});
  g.optimize();
  const MarginalGaussian before = g.marginal({lambda_key(1, 2)});
  marginalize_lambda_history(g, 1, true);
  EXPECT_FALSE(g.has(lambda_key(1, 0)));
  EXPECT_FALSE(g.has(lambda_key(1, 1)));
  g.optimize();
  const MarginalGaussian after = g.marginal({lambda_key(1, 2)});
  EXPECT_NEAR(before.mean[0], after.mean[0], 1e-9);
  EXPECT_NEAR(before.cov(0, 0), after.cov(0, 0), 1e-9);
}
