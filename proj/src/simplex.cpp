#include "esslam/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "esslam/errors.hpp"

namespace esslam {

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

// log(1 + sum exp(v_i)) without overflow.
double log1p_sum_exp(const Eigen::VectorXd& v) {
  double mx = 0.0;
  for (int i = 0; i < v.size(); ++i) mx = std::max(mx, v[i]);
  double s = std::exp(-mx);
  for (int i = 0; i < v.size(); ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericError("covariance is not positive definite");
  return llt.matrixL();
}

}  // namespace

LogitVec logit(const ProbVec& p) {
  const int m = static_cast<int>(p.size());
  if (m < 1) throw NumericError("logit of an empty vector");
  for (int i = 0; i < m; ++i)
    if (!std::isfinite(p[i]) || p[i] < 0.0) throw NumericError("logit requires finite nonnegative probabilities");
  const double pm = clamp_prob(p[m - 1]);
  LogitVec v(m - 1);
  for (int i = 0; i < m - 1; ++i) v[i] = std::log(clamp_prob(p[i]) / pm);
  return v;
}

ProbVec inv_logit(const LogitVec& v) {
  const int d = static_cast<int>(v.size());
  double mx = 0.0;
  for (int i = 0; i < d; ++i) mx = std::max(mx, v[i]);
  ProbVec p(d + 1);
  for (int i = 0; i < d; ++i) p[i] = std::exp(v[i] - mx);
  p[d] = std::exp(-mx);
  p /= p.sum();
  return p;
}

double shannon_entropy(const ProbVec& p) {
  double h = 0.0;
  for (int i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  return h;
}

GaussianParams gaussian_fit(const std::vector<LogitVec>& samples) {
  if (samples.size() < 2) throw InputError("gaussian_fit needs at least 2 samples");
  const int d = static_cast<int>(samples.front().size());
  const double n = static_cast<double>(samples.size());
  GaussianParams g{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d)};
  for (const auto& s : samples) g.mean += s;
  g.mean /= n;
  for (const auto& s : samples) {
    Eigen::VectorXd c = s - g.mean;
    g.cov.noalias() += c * c.transpose();
  }
  g.cov /= (n - 1.0);
  g.cov.diagonal().array() += kCovRidge;
  return g;
}

double gaussian_entropy(const GaussianParams& g) {
  const int d = static_cast<int>(g.mean.size());
  Eigen::MatrixXd L = cholesky_lower(g.cov);
  double logdet = 2.0 * L.diagonal().array().log().sum();
  return 0.5 * (d * std::log(2.0 * std::numbers::pi * std::numbers::e) + logdet);
}

Eigen::VectorXd sample_gaussian(const GaussianParams& g, Rng& rng) {
  Eigen::MatrixXd L = cholesky_lower(g.cov);
  return g.mean + L * standard_normal(static_cast<int>(g.mean.size()), rng);
}

McEstimate lg_entropy_numeric(const GaussianParams& g, int n_mc, Rng& rng) {
  if (n_mc < 100) throw ConfigError("lg_entropy_numeric needs n_mc >= 100");
  const int d = static_cast<int>(g.mean.size());
  const int m = d + 1;
  Eigen::MatrixXd L = cholesky_lower(g.cov);
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n_mc; ++i) {
    Eigen::VectorXd x = g.mean + L * standard_normal(d, rng);
    double t = log1p_sum_exp(x);
    sum += t;
    sum_sq += t * t;
  }
  const double mean = sum / n_mc;
  const double var = std::max(0.0, (sum_sq - n_mc * mean * mean) / (n_mc - 1));
  McEstimate e;
  e.value = gaussian_entropy(g) + g.mean.sum() - m * mean;
  e.std_error = m * std::sqrt(var / n_mc);
  return e;
}

double lg_entropy_upper(const GaussianParams& g) {
  const int m = static_cast<int>(g.mean.size()) + 1;
  double mx = 0.0;
  for (int i = 0; i < g.mean.size(); ++i) mx = std::max(mx, g.mean[i]);
  return gaussian_entropy(g) + g.mean.sum() - m * mx;
}

double lg_entropy_lower(const GaussianParams& g) {
  const int m = static_cast<int>(g.mean.size()) + 1;
  const double sigma_max = g.cov.diagonal().maxCoeff();
  return lg_entropy_upper(g) - m * std::log(static_cast<double>(m)) - std::sqrt(sigma_max / (2.0 * std::numbers::pi));
}

double digamma(double x) { return boost::math::digamma(x); }
double trigamma(double x) { return boost::math::trigamma(x); }

double inverse_digamma(double y) {
  // Minka's initialization followed by Newton steps.
  const double euler = 0.5772156649015329;
  double x = y >= -2.22 ? std::exp(y) + 0.5 : -1.0 / (y + euler);
  for (int it = 0; it < 50; ++it) {
    double step = (digamma(x) - y) / trigamma(x);
    double nx = x - step;
    if (nx <= 0.0) nx = 0.5 * x;
    if (std::abs(nx - x) <= 1e-15 * std::max(1.0, std::abs(x))) {
      x = nx;
      break;
    }
    x = nx;
  }
  return x;
}

DirichletParams dirichlet_fit(const std::vector<ProbVec>& samples) {
  if (samples.size() < 2) throw InputError("dirichlet_fit needs at least 2 samples");
  const int m = static_cast<int>(samples.front().size());
  const double n = static_cast<double>(samples.size());
  Eigen::VectorXd mean_log = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd mean_p = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd mean_p2 = Eigen::VectorXd::Zero(m);
  for (const auto& s : samples) {
    if (s.size() != m) throw InputError("dirichlet_fit samples differ in length");
    for (int i = 0; i < m; ++i) {
      double p = clamp_prob(s[i]);
      mean_log[i] += std::log(p);
      mean_p[i] += p;
      mean_p2[i] += p * p;
    }
  }
  mean_log /= n;
  mean_p /= n;
  mean_p2 /= n;
  mean_p /= mean_p.sum();

  // Moment initializer: precision from the average of the per-component estimates.
  double precision = 0.0;
  int used = 0;
  for (int i = 0; i < m; ++i) {
    double var = mean_p2[i] - mean_p[i] * mean_p[i];
    if (var > 1e-300 && mean_p[i] * (1.0 - mean_p[i]) > var) {
      precision += mean_p[i] * (1.0 - mean_p[i]) / var - 1.0;
      ++used;
    }
  }
  precision = used > 0 ? precision / used : static_cast<double>(m);
  if (!(precision > 0.0) || !std::isfinite(precision)) precision = static_cast<double>(m);

  DirichletParams out;
  out.alpha = precision * mean_p;
  out.converged = false;
  for (int it = 1; it <= 1000; ++it) {
    const double psi0 = digamma(out.alpha.sum());
    Eigen::VectorXd next(m);
    for (int i = 0; i < m; ++i) next[i] = inverse_digamma(psi0 + mean_log[i]);
    const double change = (next - out.alpha).cwiseAbs().maxCoeff();
    out.alpha = next;
    out.iterations = it;
    if (!(out.alpha.sum() < kMaxDirichletPrecision)) {
      out.alpha *= kMaxDirichletPrecision / out.alpha.sum();
      break;
    }
    if (change < 1e-8) {
      out.converged = true;
      break;
    }
  }
  return out;
}

double dirichlet_entropy(const Eigen::VectorXd& alpha) {
  const int m = static_cast<int>(alpha.size());
  for (int i = 0; i < m; ++i) {
    if (alpha[i] == 0.0) return -std::numeric_limits<double>::infinity();
    if (!(alpha[i] > 0.0)) throw NumericError("dirichlet_entropy requires positive alpha");
  }
  const double a0 = alpha.sum();
  double log_b = -std::lgamma(a0);
  double tail = 0.0;
  for (int i = 0; i < m; ++i) {
    log_b += std::lgamma(alpha[i]);
    tail += (alpha[i] - 1.0) * digamma(alpha[i]);
  }
  return log_b + (a0 - m) * digamma(a0) - tail;
}

}  // namespace esslam
