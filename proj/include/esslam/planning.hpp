#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "esslam/geometry.hpp"
#include "esslam/inference_jlp.hpp"
#include "esslam/inference_mh.hpp"

namespace esslam {

enum class Engine { MH, JLP, WEU };
enum class RewardKind { R1, R2 };
enum class LambdaFamily { Dirichlet, LogisticGaussian, LgUpper, LgLower };

Engine parse_engine(const std::string& s);
RewardKind parse_reward(const std::string& s);
LambdaFamily parse_family(const std::string& s);
std::string to_string(Engine e);
std::string to_string(RewardKind r);
std::string to_string(LambdaFamily f);

struct RewardSpec {
  RewardKind kind = RewardKind::R1;
  double r_max = std::numeric_limits<double>::infinity();
  LambdaFamily family = LambdaFamily::Dirichlet;
  int n_mc = 10000;
};

struct PlanConfig {
  int horizon = 5;
  int n_samples = 1;
  int budget = 200;
  double exploration_c = 2.0;
  std::uint64_t seed = 0;
};

struct PlanningProblem {
  std::vector<Pose2> primitives;
  SensorSpec sensor;
  Eigen::Matrix3d motion_cov = Eigen::Vector3d(0.0025, 0.0025, 0.0001).asDiagonal();
  RewardSpec reward;
  PlanConfig config;
};

// forward, forward-left, forward-right, hard-left, hard-right
std::vector<Pose2> default_primitives();

// Throws ConfigError for engine/reward combinations outside the compatibility matrix.
void check_compatibility(Engine engine, const RewardSpec& spec);

std::vector<int> predict_observed(const Pose2& camera, const std::map<int, Pose2>& objects, const SensorSpec& sensor);

struct MHGenerated {
  std::vector<GeoMeasurement> geo;
  std::vector<SemanticObservation> sem;
  int w = 0;
  ClassRealization realization;
};

struct JLPGenerated {
  std::vector<GeoMeasurement> geo;
  std::vector<SemanticStats> sem;
  std::map<int, int> classes;
};

MHGenerated mh_generate(const MHBelief& belief, const MotionSpec& action, const SensorSpec& sensor, Rng& rng);
JLPGenerated jlp_generate(const JLPBelief& belief, const MotionSpec& action, const SensorSpec& sensor, Rng& rng);

double lambda_entropy(const std::vector<ProbVec>& particles, LambdaFamily family, int n_mc, Rng& rng);
double lambda_entropy(const GaussianParams& lambda, LambdaFamily family, int n_mc, Rng& rng);

double reward_r1(const std::vector<double>& entropies, double r_max);
double reward_r2(const std::vector<ProbVec>& means);

double belief_reward(const MHBelief& belief, const RewardSpec& spec, Rng& rng);
double belief_reward(const JLPBelief& belief, const RewardSpec& spec, Rng& rng);

// Recursive sampled objective over a fixed action sequence, averaged once per depth.
double objective(const MHBelief& belief, const std::vector<Pose2>& actions, const PlanningProblem& problem, Rng& rng);
double objective(const JLPBelief& belief, const std::vector<Pose2>& actions, const PlanningProblem& problem, Rng& rng);

struct PlanResult {
  int best = 0;
  std::vector<double> values;
  std::vector<int> visits;
  nlohmann::json to_json() const;
};

// Seed of the rng stream used by MCTS iteration `iteration`.
std::uint64_t rollout_seed(std::uint64_t seed, int iteration);

PlanResult mcts_plan(const MHBelief& belief, const PlanningProblem& problem);
PlanResult mcts_plan(const JLPBelief& belief, const PlanningProblem& problem);

}  // namespace esslam
