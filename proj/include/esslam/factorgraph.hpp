#pragma once

#include <compare>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "esslam/clsmodel.hpp"
#include "esslam/geometry.hpp"

namespace esslam {

struct Key {
  enum class Kind : int { Robot = 0, Object = 1, Lambda = 2 };
  Kind kind = Kind::Robot;
  int id = 0;   // time step for robot poses, object id otherwise
  int seq = 0;  // lambda chain position

  auto operator<=>(const Key&) const = default;
  bool is_pose() const { return kind != Kind::Lambda; }
  std::string str() const;
};

inline Key robot_key(int step) { return {Key::Kind::Robot, step, 0}; }
inline Key object_key(int object) { return {Key::Kind::Object, object, 0}; }
inline Key lambda_key(int object, int seq) { return {Key::Kind::Lambda, object, seq}; }

inline constexpr double kJlpEpsilon = 1e-6;
inline constexpr double kNumericStep = 1e-6;

struct PriorFactor {
  Key key;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct OdometryFactor {
  Key from, to;
  MotionSpec motion;
};

struct GeometricFactor {
  Key pose, object;
  RelPose measured;
  Eigen::Matrix3d cov;
};

struct JlpFactor {
  Key prev, next, pose, object;
  Eigen::VectorXd lg_mean;
  Eigen::MatrixXd lg_cov;
  ModelPtr model;
};

// Semantic likelihood N(lg; h_c(x_rel), Sigma_c(x_rel)) of one class realization.
struct SemanticFactor {
  Key pose, object;
  int cls = 0;
  LogitVec lg;
  ModelPtr model;
};

// 0.5 ||A (x - x_lin) - b||^2 over stacked keys; produced by marginalization.
struct LinearFactor {
  std::vector<Key> keys;
  Eigen::VectorXd lin;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

using Factor = std::variant<PriorFactor, OdometryFactor, GeometricFactor, JlpFactor, SemanticFactor, LinearFactor>;

std::vector<Key> factor_keys(const Factor& f);
std::string factor_type(const Factor& f);

struct FactorEval {
  Eigen::VectorXd residual;
  Eigen::MatrixXd cov;  // empty for LinearFactor (already whitened)
};

struct OptimizeOptions {
  int max_iterations = 100;
  double rel_tol = 1e-9;
};

struct OptimizeReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
};

struct MarginalGaussian {
  std::vector<Key> keys;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

class Graph {
 public:
  bool has(const Key& k) const { return values_.count(k) > 0; }
  void add_variable(const Key& k, const Eigen::VectorXd& initial);
  void add_factor(Factor f);
  void remove_variable(const Key& k);

  const Eigen::VectorXd& value(const Key& k) const;
  void set_value(const Key& k, const Eigen::VectorXd& v);
  Pose2 pose(const Key& k) const { return Pose2::from_vector(value(k)); }

  std::size_t num_variables() const { return values_.size(); }
  std::size_t num_factors() const { return factors_.size(); }
  int dimension() const;
  const std::vector<Factor>& factors() const { return factors_; }
  std::vector<Key> keys() const;

  FactorEval evaluate(const Factor& f) const;
  double cost() const;
  OptimizeReport optimize(const OptimizeOptions& opts = {});
  MarginalGaussian marginal(const std::vector<Key>& keys) const;

  // Laplace approximation of log of the integral of the product of all factor densities.
  double log_evidence() const;

  // Graph over `keep` whose only factor is the current joint marginal of those keys.
  Graph condensed(const std::vector<Key>& keep) const;

  nlohmann::json to_json() const;

  // Builds whitened normal equations at the current values (exposed for marginalization).
  struct Normal {
    std::vector<Key> order;
    std::map<Key, int> offset;
    Eigen::MatrixXd H;
    Eigen::VectorXd g;
    double cost = 0.0;
    double log_norm = 0.0;  // sum over factors of -0.5 log|2 pi cov|
  };
  Normal normal_equations() const;
  Normal normal_equations(const std::vector<std::size_t>& factor_subset, const std::vector<Key>& order) const;

  std::vector<Factor>& mutable_factors() { return factors_; }

 private:
  struct Whitened {
    Eigen::VectorXd r;
    std::vector<Eigen::MatrixXd> J;
    double log_norm = 0.0;
  };
  Whitened whiten(const Factor& f) const;
  void retract(const std::vector<Key>& order, const std::map<Key, int>& offset, const Eigen::VectorXd& delta);

  std::map<Key, Eigen::VectorXd> values_;
  std::vector<Factor> factors_;
};

// Eliminates all but the latest lambda node of `object` by Schur complement when keep_latest is set.
void marginalize_lambda_history(Graph& graph, int object, bool keep_latest);

// Residual and noise of a JLP factor at the given values.
FactorEval jlp_residual(const JlpFactor& f, const Graph& graph);

}  // namespace esslam
