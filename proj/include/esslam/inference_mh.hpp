#pragma once

#include <map>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "esslam/clsmodel.hpp"
#include "esslam/factorgraph.hpp"
#include "esslam/geometry.hpp"
#include "esslam/simplex.hpp"

namespace esslam {

struct GeoMeasurement {
  int object = 0;
  RelPose z;
};

struct SemanticObservation {
  int object = 0;
  std::vector<LogitVec> cloud;  // one entry per weight realization
};

struct MHConfig {
  ModelPtr model;
  int num_weights = 10;
  Eigen::Matrix3d prior_cov = Eigen::Matrix3d::Identity() * 1e-6;
  Eigen::Matrix3d geometric_cov = Eigen::Vector3d(0.01, 0.01, 0.0004).asDiagonal();
  double prune_threshold = 1e-3;
};

// Classes of the belief's objects, in the order the objects were first observed.
using ClassRealization = std::vector<int>;

struct RealizationEntry {
  Graph graph;
  double weight = 1.0;
  double log_evidence = 0.0;
};

struct HybridBelief {
  int w = 0;
  std::map<ClassRealization, RealizationEntry> realizations;
};

class MHBelief {
 public:
  MHBelief(MHConfig config, const Pose2& start);

  const MHConfig& config() const { return config_; }
  int num_classes() const { return config_.model->num_classes(); }
  int step() const { return step_; }
  const std::vector<int>& objects() const { return objects_; }
  bool knows(int object) const;
  int object_index(int object) const;
  const std::vector<HybridBelief>& beliefs() const { return beliefs_; }
  std::vector<HybridBelief>& beliefs() { return beliefs_; }

  // Replaces every conditional graph by its marginal over the latest pose and the objects.
  MHBelief condensed() const;

 private:
  friend void mh_update(MHBelief&, const std::vector<GeoMeasurement>&, const std::vector<SemanticObservation>&,
                        const MotionSpec&);
  MHConfig config_;
  int step_ = 0;
  std::vector<int> objects_;
  std::vector<HybridBelief> beliefs_;
};

void mh_update(MHBelief& belief, const std::vector<GeoMeasurement>& geo, const std::vector<SemanticObservation>& sem,
               const MotionSpec& action);

std::vector<ProbVec> lambda_particles(const MHBelief& belief, int object);
ProbVec class_posterior(const MHBelief& belief, int object);

struct MixtureComponent {
  double weight = 0.0;
  ClassRealization realization;
  int w = 0;
  MarginalGaussian gaussian;
};

std::vector<MixtureComponent> pose_marginal_mixture(const MHBelief& belief, const std::vector<Key>& keys);

void prune(HybridBelief& belief, double threshold);
void prune(MHBelief& belief, double threshold);

nlohmann::json snapshot(const MHBelief& belief);

}  // namespace esslam
