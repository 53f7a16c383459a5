#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "esslam/geometry.hpp"
#include "esslam/rng.hpp"
#include "esslam/simplex.hpp"

namespace esslam {

// Classes are 0-based in the C++ API (class c here is class c+1 in scenario files and reports).

// h_c(psi) = h_amp cos(2 psi) + h_off, R_c(psi) = r_off + r_amp cos(psi), Sigma_c = sqrt(1/R_c) I.
struct CosineClassParams {
  Eigen::VectorXd h_amp;
  Eigen::VectorXd h_off;
  double r_off = 1.4;
  double r_amp = 0.0;
};

struct CosineSpec {
  std::vector<CosineClassParams> classes;
};

struct GridNode {
  double psi = 0.0;
  std::vector<GaussianParams> classes;
};

// Nodes sorted by psi in (-pi, pi]; linear periodic interpolation of mean and covariance.
struct GridSpec {
  std::vector<GridNode> nodes;
};

class ClassifierModel {
 public:
  ClassifierModel(int num_classes, CosineSpec spec);
  ClassifierModel(int num_classes, GridSpec spec);

  static ClassifierModel model1();
  static ClassifierModel model2();

  int num_classes() const { return m_; }
  int logit_dim() const { return m_ - 1; }
  bool is_grid() const { return std::holds_alternative<GridSpec>(backing_); }
  const CosineSpec* cosine() const { return std::get_if<CosineSpec>(&backing_); }
  const GridSpec* grid() const { return std::get_if<GridSpec>(&backing_); }

  // True when all class covariances coincide at every viewpoint.
  bool shared_covariance() const;

  GaussianParams eval(int c, const RelPose& x) const;
  GaussianParams eval_psi(int c, double psi) const;

  nlohmann::json to_json() const;
  static ClassifierModel from_json(const nlohmann::json& j);

 private:
  void check() const;

  int m_;
  std::variant<CosineSpec, GridSpec> backing_;
};

using ModelPtr = std::shared_ptr<const ClassifierModel>;

ClassifierModel load_model(const std::string& path);
void save_model(const ClassifierModel& model, const std::string& path);

std::vector<LogitVec> sample_cloud(const ClassifierModel& model, int c, const RelPose& x, int size, Rng& rng);
double semantic_loglik(const ClassifierModel& model, int c, const RelPose& x, const LogitVec& lg);
Eigen::MatrixXd phi_matrix(const ClassifierModel& model, const RelPose& x);
Eigen::VectorXd phi_vector(const ClassifierModel& model, const RelPose& x);
Eigen::VectorXd loglik_ratio_vector(const ClassifierModel& model, const RelPose& x, const LogitVec& lg);

struct TrainingRecord {
  RelPose pose;
  std::vector<LogitVec> cloud;
};
using TrainingSet = std::vector<TrainingRecord>;

struct FitOptions {
  int iterations = 500;
  double grad_tol = 1e-12;
};

struct FitResult {
  ClassifierModel model;
  std::vector<std::string> warnings;
};

// data[c] holds the records of class c; node covariances minimize
// MSE(Sigma_c, sample cov) + kappa * sum_{i<m} ||Sigma_i^-1 - Sigma_m^-1||_F^2.
FitResult fit_grid_model(const std::vector<TrainingSet>& data, double kappa = 0.005, const FitOptions& opts = {});

// Per-node objective value used by the fit (exposed for tests).
double frobenius_penalty(const std::vector<Eigen::MatrixXd>& covs);

}  // namespace esslam
