#pragma once

#include <vector>

#include <Eigen/Core>

#include "esslam/rng.hpp"

namespace esslam {

using ProbVec = Eigen::VectorXd;   // length m, on the simplex
using LogitVec = Eigen::VectorXd;  // length m-1, log(p_i / p_m)

inline constexpr double kProbClamp = 1e-9;
inline // Identical samples have no finite Dirichlet MLE; the fit stops (unconverged) at this total precision.
constexpr double kMaxDirichletPrecision = 1e10;
constexpr double kCovRidge = 1e-9;

struct GaussianParams {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct DirichletParams {
  Eigen::VectorXd alpha;
  bool converged = true;
  int iterations = 0;
};

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

LogitVec logit(const ProbVec& p);
ProbVec inv_logit(const LogitVec& v);
double shannon_entropy(const ProbVec& p);

GaussianParams gaussian_fit(const std::vector<LogitVec>& samples);

// Differential entropy of the Gaussian itself, 0.5 log((2 pi e)^d |cov|).
double gaussian_entropy(const GaussianParams& g);

// Entropy of lambda = inv_logit(l) for l ~ N(g); value and Monte-Carlo standard error.
McEstimate lg_entropy_numeric(const GaussianParams& g, int n_mc, Rng& rng);
double lg_entropy_upper(const GaussianParams& g);
double lg_entropy_lower(const GaussianParams& g);

DirichletParams dirichlet_fit(const std::vector<ProbVec>& samples);
double dirichlet_entropy(const Eigen::VectorXd& alpha);
inline double dirichlet_entropy(const DirichletParams& d) { return dirichlet_entropy(d.alpha); }

double digamma(double x);
double trigamma(double x);
double inverse_digamma(double y);

// Draws from N(g) through its Cholesky factor.
Eigen::VectorXd sample_gaussian(const GaussianParams& g, Rng& rng);

}  // namespace esslam
