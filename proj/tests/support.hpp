#pragma once

#include <cmath>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "esslam//inference_jlp.hpp"
#include "esslam/inference_mh.hpp"

namespace esslam::testing {

// Robot path with known poses, static objects and per-step classifier clouds.
struct KnownPoseInstance {
  ModelPtr model;
  std::vector<Pose2> path;  // path[0] is the start
  std::map<int, Pose2> objects;
  std::map<int, int> classes;
  std::vector<std::map<int, std::vector<LogitVec>>> clouds;  // clouds[k-1] for step k
};

inline KnownPoseInstance make_instance(ModelPtr model, std::vector<Pose2> path, std::map<int, Pose2> objects,
                                       std::map<int, int> classes, int W, std::uint64_t seed) {
  KnownPoseInstance inst{model, std::move(path), std::move(objects), std::move(classes), {}};
  Rng rng(seed);
  for (std::size_t k = 1; k < inst.path.size(); ++k) {
    std::map<int, std::vector<LogitVec>> step;
    for (const auto& [id, pose] : inst.objects)
      step[id] = sample_cloud(*model, inst.classes.at(id), between(inst.path[k], pose), W, rng);
    inst.clouds.push_back(step);
  }
  return inst;
}

inline constexpr double kTight = 1e-10;

inline MHBelief run_known_mh(const KnownPoseInstance& inst, int W, double prune_threshold) {
  MHConfig cfg;
  cfg.model = inst.model;
  cfg.num_weights = W;
  cfg.prior_cov = Eigen::Matrix3d::Identity() * kTight;
  cfg.geometric_cov = Eigen::Matrix3d::Identity() * kTight;
  cfg.prune_threshold = prune_threshold;
  MHBelief b(cfg, inst.path[0]);
  for (std::size_t k = 1; k < inst.path.size(); ++k) {
    std::vector<GeoMeasurement> geo;
    std::vector<SemanticObservation> sem;
    for (const auto& [id, cloud] : inst.clouds[k - 1]) {
      geo.push_back({id, between(inst.path[k], inst.objects.at(id))});
      sem.push_back({id, cloud});
    }
    mh_update(b, geo, sem, {as_pose(between(inst.path[k - 1], inst.path[k])), Eigen::Matrix3d::Identity() * kTight});
  }
  return b;
}

inline JLPBelief run_known_jlp(const KnownPoseInstance& inst, double lambda_prior_var = 4.0) {
  JLPConfig cfg;
  cfg.model = inst.model;
  cfg.prior_cov = Eigen::Matrix3d::Identity() * kTight;
  cfg.geometric_cov = Eigen::Matrix3d::Identity() * kTight;
  cfg.lambda_prior_var = lambda_prior_var;
  JLPBelief b(cfg, inst.path[0]);
  for (std::size_t k = 1; k < inst.path.size(); ++k) {
    std::vector<GeoMeasurement> geo;
    std::vector<SemanticStats> sem;
    for (const auto& [id, cloud] : inst.clouds[k - 1]) {
      geo.push_back({id, between(inst.path[k], inst.objects.at(id))});
      sem.push_back({id, gaussian_fit(cloud)});
    }
    jlp_update(b, geo, sem, {as_pose(between(inst.path[k - 1], inst.path[k])), Eigen::Matrix3d::Identity() * kTight});
  }
  return b;
}

// Exhaustive enumeration over (C, w): for each weight realization w the class posterior is
// proportional to the product over steps and objects of N(lg_{k,w,o}; h_{C_o}, Sigma_{C_o}); the
// reported posterior is the average over w.
inline std::map<int, ProbVec> enumerate_posterior(const KnownPoseInstance& inst, int W) {
  const int m = inst.model->num_classes();
  std::vector<int> ids;
  for (const auto& [id, p] : inst.objects) ids.push_back(id);
  const int n = static_cast<int>(ids.size());
  int combos = 1;
  for (int i = 0; i < n; ++i) combos *= m;
  std::map<int, ProbVec> out;
  for (int id : ids) out[id] = ProbVec::Zero(m);
  for (int w = 0; w < W; ++w) {
    std::vector<double> logp(combos, 0.0);
    for (int c = 0; c < combos; ++c) {
      int code = c;
      for (int i = 0; i < n; ++i) {
        const int cls = code % m;
        code /= m;
        for (std::size_t k = 1; k < inst.path.size(); ++k) {
          const auto& step = inst.clouds[k - 1];
          auto it = step.find(ids[i]);
          if (it == step.end()) continue;
          const GaussianParams g = inst.model->eval(cls, between(inst.path[k], inst.objects.at(ids[i])));
          const Eigen::VectorXd r = it->second[w] - g.mean;
          logp[c] += -0.5 * r.dot(g.cov.inverse() * r) - 0.5 * std::log((2 * M_PI * g.cov).determinant());
        }
      }
    }
    double mx = logp[0];
    for (double v : logp) mx = std::max(mx, v);
    double z = 0.0;
    for (double& v : logp) z += (v = std::exp(v - mx));
    for (int c = 0; c < combos; ++c) {
      int code = c;
      for (int i = 0; i < n; ++i) {
        out[ids[i]][code % m] += logp[c] / z / W;
        code /= m;
      }
    }
  }
  return out;
}

// Direct logit-Bayes recursion: l_k = l_{k-1} + Phi_k E(lg_k) - phi_k / 2 from a zero prior mean.
inline std::map<int, Eigen::VectorXd> logit_recursion(const KnownPoseInstance& inst) {
  std::map<int, Eigen::VectorXd> l;
  for (std::size_t k = 1; k < inst.path.size(); ++k)
    for (const auto& [id, cloud] : inst.clouds[k - 1]) {
      const RelPose x = between(inst.path[k], inst.objects.at(id));
      if (!l.count(id)) l[id] = Eigen::VectorXd::Zero(inst.model->logit_dim());
      const GaussianParams g = gaussian_fit(cloud);
      l[id] += phi_matrix(*inst.model, x) * g.mean - 0.5 * phi_vector(*inst.model, x);
    }
  return l;
}

}  // namespace esslam::testing
