#pragma once

#include <map>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "esslam/clsmodel.hpp"
#include "esslam/factorgraph.hpp"
#include "esslam/inference_mh.hpp"
#include "esslam/simplex.hpp"

namespace esslam {

struct SemanticStats {
  int object = 0;
  GaussianParams lg;  // E(l gamma), Sigma(l gamma)
};

struct JLPConfig {
  ModelPtr model;
  Eigen::Matrix3d prior_cov = Eigen::Matrix3d::Identity() * 1e-6;
  Eigen::Matrix3d geometric_cov = Eigen::Vector3d(0.01, 0.01, 0.0004).asDiagonal();
  double lambda_prior_var = 4.0;
  bool keep_full_chain = true;
  int max_variables = 500;
};

class JLPBelief {
 public:
  JLPBelief(JLPConfig config, const Pose2& start);

  const JLPConfig& config() const { return config_; }
  int num_classes() const { return config_.model->num_classes(); }
  int step() const { return step_; }
  const Graph& graph() const { return graph_; }
  Graph& graph() { return graph_; }
  const std::map<int, Key>& latest() const { return latest_; }
  std::vector<int> objects() const;
  bool knows(int object) const { return latest_.count(object) > 0; }

  JLPBelief condensed() const;

 private:
  friend void jlp_update(JLPBelief&, const std::vector<GeoMeasurement>&, const std::vector<SemanticStats>&,
                         const MotionSpec&);
  JLPConfig config_;
  Graph graph_;
  int step_ = 0;
  std::vector<int> order_;
  std::map<int, Key> latest_;
};

void jlp_update(JLPBelief& belief, const std::vector<GeoMeasurement>& geo, const std::vector<SemanticStats>& sem,
                const MotionSpec& action);

GaussianParams lambda_posterior(const JLPBelief& belief, int object);
std::map<int, GaussianParams> lambda_posteriors(const JLPBelief& belief);
ProbVec class_posterior_jlp(const JLPBelief& belief, int object, int n_mc, Rng& rng);
ProbVec class_posterior_jlp(const GaussianParams& lambda, int n_mc, Rng& rng);

nlohmann::json snapshot(const JLPBelief& belief);

}  // namespace esslam
