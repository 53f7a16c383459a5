#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "esslam/clsmodel.hpp"
#include "esslam/geometry.hpp"
#include "esslam/inference_mh.hpp"
#include "esslam/planning.hpp"

namespace esslam {

struct ObjectSpec {
  int id = 0;
  Pose2 pose;
  int cls = 0;  // 0-based
};

struct PlannerSpec {
  RewardSpec reward;
  PlanConfig plan;
};

struct Scenario {
  std::string name = "scenario";
  int num_classes = 2;
  std::string model_id = "model-1";
  ModelPtr model;
  std::vector<ObjectSpec> objects;
  Pose2 start;
  SensorSpec sensor;
  Eigen::Vector3d motion_sigma{0.05, 0.05, 0.01};
  Eigen::Vector3d geometric_sigma{0.1, 0.1, 0.02};
  Eigen::Vector3d prior_sigma{1e-3, 1e-3, 1e-3};
  int num_weights = 10;
  int steps = 20;
  std::uint64_t seed = 1;
  std::vector<Pose2> trajectory;
  std::optional<PlannerSpec> planner;
  std::vector<Pose2> primitives = default_primitives();
  double lambda_prior_var = 4.0;
  double prune_threshold = 1e-3;
  int n_mc = 10000;
  std::optional<LambdaFamily> metric_family;  // entropy reported in metrics; engine default when unset
  bool weu_mean = false;  // WEU consumes the cloud mean instead of its first member

  Eigen::Matrix3d motion_cov() const { return motion_sigma.cwiseAbs2().asDiagonal(); }
  Eigen::Matrix3d geometric_cov() const { return geometric_sigma.cwiseAbs2().asDiagonal(); }
  Eigen::Matrix3d prior_cov() const { return prior_sigma.cwiseAbs2().asDiagonal(); }
};

Scenario scenario_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
Scenario load_scenario(const std::string& path);
nlohmann::json scenario_to_json(const Scenario& s);

// Same sensing and noise as `base`, n objects scattered along the straight drive with random classes and headings.
Scenario random_layout(const Scenario& base, int n_objects, std::uint64_t layout_seed);

struct WorldStep {
  Pose2 truth;
  std::vector<GeoMeasurement> geo;
  std::vector<SemanticObservation> clouds;
};

// Noise streams are keyed by (scenario seed, step, object), so the measurement of an object at a
// given step and true relative pose does not depend on what else was visible.
WorldStep step_world(const Scenario& scenario, const Pose2& state, const Pose2& action, int step);

double msde(const ProbVec& posterior, int true_class);

struct ObjectMetrics {
  int id = 0;
  bool observed = false;
  double msde = 0.0;
  double entropy = 0.0;
  ProbVec posterior;
};

struct StepMetrics {
  int step = 0;
  std::vector<ObjectMetrics> objects;
  double avg_msde = 0.0;
  double sum_entropy = 0.0;
  double seconds = 0.0;
};

struct RunResult {
  Engine engine = Engine::MH;
  std::optional<RewardSpec> reward;
  std::vector<StepMetrics> steps;
  std::vector<Pose2> truth;  // truth[0] is the start
  std::vector<int> actions;  // primitive index, -1 for scripted actions
  std::vector<Pose2> applied;
  nlohmann::json plan_trace = nlohmann::json::array();
};

RunResult run_scenario(const Scenario& scenario, Engine engine, const std::optional<RewardSpec>& reward = std::nullopt);

}  // namespace esslam
