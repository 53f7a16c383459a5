#include <gtest/gtest.h>

#include <numbers>

#include <Eigen/Dense>

#include "esslam//errors.hpp"
#include "support.hpp"

using namespace esslam;
using namespace esslam::testing;
constexpr double kPi = std::numbers::pi;

namespace {
ModelPtr model1() { return std::make_shared<ClassifierModel>(ClassifierModel::model1()); }

std::vector<Pose2> straight(int steps) {
  std::vector<Pose2> p;
  for (int k = 0; k <= steps; ++k) p.push_back({static_cast<double>(k), 0, 0});
  return p;
}
}  // namespace

TEST(InferenceMH, MatchesEnumerationOracle) {
  const auto inst = make_instance(model1(), straight(3), {{1, {6, 2, 0.4}}, {2, {7, -1, 2.8}}}, {{1, 0}, {2, 1}}, 3, 5);
  const MHBelief b = run_known_mh(inst, 3, 0.0);
  const auto oracle = enumerate_posterior(inst, 3);
  for (int id : {1, 2}) EXPECT_LE((class_posterior(b, id) - oracle.at(id)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(InferenceMH, InformativeViewpointIncreasesTrueClassWeight) {
  const auto inst = make_instance(model1(), straight(6), {{1, {9, 0.5, 0.0}}}, {{1, 0}}, 1, 3);
  MHConfig cfg;
  cfg.model = inst.model;
  cfg.num_weights = 1;
  cfg.prior_cov = Eigen::Matrix3d::Identity() * kTight;
  cfg.geometric_cov = Eigen::Matrix3d::Identity() * kTight;
  MHBelief b(cfg, inst.path[0]);
  double prev = 0.5;
  for (std::size_t k = 1; k < inst.path.size(); ++k) {
    const auto& cloud = inst.clouds[k - 1].at(1);
    mh_update(b, {{1, between(inst.path[k], inst.objects.at(1))}}, {{1, cloud}},
              {as_pose(between(inst.path[k - 1], inst.path[k])), Eigen::Matrix3d::Identity() * kTight});
    const double p = class_posterior(b, 1)[0];
    // a step raises the weight exactly when its likelihood ratio exceeds one
    const double lr = semantic_loglik(*inst.model, 0, between(inst.path[k], inst.objects.at(1)), cloud[0]) -
                      semantic_loglik(*inst.model, 1, between(inst.path[k], inst.objects.at(1)), cloud[0]);
    if (lr > 0) EXPECT_GT(p, prev);
    auto truncated = inst;
    truncated.path.resize(k + 1);
    truncated.clouds.resize(k);
    EXPECT_NEAR(p, enumerate_posterior(truncated, 1).at(1)[0], 1e-6);
    prev = p;
  }
}

TEST(InferenceMH, AliasingViewpointLeavesWeightsUnchanged) {
  const auto inst = make_instance(model1(), straight(5), {{1, {9, 0.5, kPi / 2}}}, {{1, 0}}, 10, 3);
  const MHBelief b = run_known_mh(inst, 10, 0.0);
  for (const auto& p : lambda_particles(b, 1)) EXPECT_NEAR(p[0], 0.5, 1e-6);
}

TEST(InferenceMH, RejectsMismatchedInputs) {
  MHConfig cfg;
  cfg.model = model1();
  cfg.num_weights = 2;
  MHBelief b(cfg, {});
  const MotionSpec mv{{1, 0, 0}, Eigen::Matrix3d::Identity() * 1e-4};
  const std::vector<LogitVec> cloud{LogitVec::Zero(1), LogitVec::Zero(1)};
  EXPECT_THROW(mh_update(b, {{1, {3, 0, 0}}}, {}, mv), InputError);
  EXPECT_THROW(mh_update(b, {{1, {3, 0, 0}}}, {{1, {LogitVec::Zero(1)}}}, mv), InputError);
  EXPECT_THROW(mh_update(b, {{1, {3, 0, 0}}, {1, {3, 0, 0}}}, {{1, cloud}, {1, cloud}}, mv), InputError);
  EXPECT_NO_THROW(mh_update(b, {{1, {3, 0, 0}}}, {{1, cloud}}, mv));
}

TEST(InferenceMH, PruningKeepsArgmax) {
  Rng rng(13);
  for (int t = 0; t < 200; ++t) {
    HybridBelief hb;
    const int n = 2 + t % 6;
    for (int i = 0; i < n; ++i) hb.realizations[{i}].weight = std::pow(uniform01(rng), 6);
    double total = 0.0;
    for (auto& [c, e] : hb.realizations) total += e.weight;
    ClassRealization best;
    double bw = -1;
    for (auto& [c, e] : hb.realizations) {
      e.weight /= total;
      if (e.weight > bw) bw = e.weight, best = c;
    }
    prune(hb, 0.05);
    ASSERT_TRUE(hb.realizations.count(best));
    for (const auto& [c, e] : hb.realizations) EXPECT_GE(hb.realizations.at(best).weight, e.weight);
  }
}

TEST(InferenceMH, PoseMixtureTracksJlpPose) {
  const auto inst = make_instance(model1(), straight(4), {{1, {7, 1, 0.0}}}, {{1, 0}}, 10, 9);
  MHConfig mc;
  mc.model = inst.model;
  MHBelief mh(mc, inst.path[0]);
  JLPConfig jc;
  jc.model = inst.model;
  JLPBelief jlp(jc, inst.path[0]);
  Rng rng(4);
  const Eigen::Matrix3d q = Eigen::Vector3d(0.01, 0.01, 0.001).asDiagonal();
  for (std::size_t k = 1; k < inst.path.size(); ++k) {
    RelPose z = between(inst.path[k], inst.objects.at(1));
    const Eigen::Vector3d n = Eigen::Vector3d(0.1, 0.1, 0.02).cwiseProduct(standard_normal(3, rng));
    z = RelPose::from_vector(z.vector() + n);
    const MotionSpec mv{as_pose(between(inst.path[k - 1], inst.path[k])), q};
    mh_update(mh, {{1, z}}, {{1, inst.clouds[k - 1].at(1)}}, mv);
    jlp_update(jlp, {{1, z}}, {{1, gaussian_fit(inst.clouds[k - 1].at(1))}}, mv);
  }
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& c : pose_marginal_mixture(mh, {object_key(1)})) mean += c.weight * c.gaussian.mean;
  const MarginalGaussian j = jlp.graph().marginal({object_key(1)});
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(mean[i], j.mean[i], 3 * std::sqrt(j.cov(i, i)));
}

TEST(InferenceJLP, SingleStepIncrement) {
  auto model = model1();
  KnownPoseInstance inst{model, {{0, 0, 0}, {1, 0, 0}}, {{1, {5, 0, 0}}}, {{1, 0}}, {}};
  inst.clouds.push_back({{1, {LogitVec::Constant(1, 1.0 - 0.5), LogitVec::Constant(1, 1.0 + 0.5)}}});
  const JLPBelief b = run_known_jlp(inst);
  EXPECT_NEAR(lambda_posterior(b, 1).mean[0], 2.0 / std::sqrt(0.5), 1e-6);
}

TEST(InferenceJLP, MatchesLogitRecursion) {
  const auto inst = make_instance(model1(), straight(8), {{1, {10, 1, 0.7}}, {2, {9, -2, 2.5}}}, {{1, 0}, {2, 1}}, 10, 21);
  const JLPBelief b = run_known_jlp(inst);
  const auto ref = logit_recursion(inst);
  for (int id : {1, 2}) EXPECT_NEAR(lambda_posterior(b, id).mean[0], ref.at(id)[0], 1e-6);
}

TEST(InferenceJLP, InformativeUpdateShrinksCovariance) {
  auto inst = make_instance(model1(), straight(2), {{1, {8, 0.5, 0.2}}}, {{1, 1}}, 10, 2);
  auto one = inst;
  one.path.resize(2);
  one.clouds.resize(1);
  const GaussianParams a = lambda_posterior(run_known_jlp(one), 1);
  const GaussianParams b = lambda_posterior(run_known_jlp(inst), 1);
  EXPECT_LT(b.cov(0, 0), a.cov(0, 0));
}

TEST(InferenceJLP, AliasingUpdateKeepsCovariance) {
  auto inst = make_instance(model1(), straight(2), {{1, {8, 0.5, kPi / 2}}}, {{1, 1}}, 10, 2);
  auto one = inst;
  one.path.resize(2);
  one.clouds.resize(1);
  const GaussianParams a = lambda_posterior(run_known_jlp(one), 1);
  const GaussianParams b = lambda_posterior(run_known_jlp(inst), 1);
  EXPECT_NEAR(b.cov(0, 0), a.cov(0, 0), 1e-4);
  EXPECT_NEAR(b.mean[0], 0.0, 1e-9);
}

TEST(InferenceJLP, HistoryMarginalizationPreservesLatest) {
  const auto inst = make_instance(model1(), straight(6), {{1, {9, 1, 0.3}}}, {{1, 0}}, 10, 6);
  JLPConfig cfg;
  cfg.model = inst.model;
  cfg.prior_cov = Eigen::Matrix3d::Identity() * kTight;
  cfg.geometric_cov = Eigen::Matrix3d::Identity() * kTight;
  cfg.keep_full_chain = false;
  JLPBelief b(cfg, inst.path[0]);
  for (std::size_t k = 1; k < inst.path.size(); ++k)
    jlp_update(b, {{1, between(inst.path[k], inst.objects.at(1))}}, {{1, gaussian_fit(inst.clouds[k - 1].at(1))}},
               {as_pose(between(inst.path[k - 1], inst.path[k])), Eigen::Matrix3d::Identity() * kTight});
  const GaussianParams full = lambda_posterior(run_known_jlp(inst), 1);
  const GaussianParams small = lambda_posterior(b, 1);
  EXPECT_NEAR(full.mean[0], small.mean[0], 1e-6);
  EXPECT_NEAR(full.cov(0, 0), small.cov(0, 0), 1e-6);
}

TEST(InferenceJLP, AgreesWithMhOnLemmaOneScene) {
  const auto inst = make_instance(model1(), straight(5), {{1, {9, 1, 0.4}}}, {{1, 0}}, 25, 8);
  const MHBelief mh = run_known_mh(inst, 25, 1e-3);
  const JLPBelief jlp = run_known_jlp(inst);
  Rng rng(1);
  EXPECT_NEAR(class_posterior_jlp(jlp, 1, 100000, rng)[0], class_posterior(mh, 1)[0], 0.02);
}
