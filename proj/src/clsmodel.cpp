#include "esslam/clsmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "esslam/errors.hpp"

namespace esslam {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Eigen::VectorXd json_vec(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

Eigen::MatrixXd json_mat(const nlohmann::json& j) {
  const int r = static_cast<int>(j.size());
  const int c = r > 0 ? static_cast<int>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int k = 0; k < c; ++k) m(i, k) = j.at(i).at(k).get<double>();
  return m;
}

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json mat_json(const Eigen::MatrixXd& m) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    j.push_back(row);
  }
  return j;
}

bool same_node_psi(double a, double b) { return std::abs(normalize_angle(a - b)) < 1e-9; }

}  // namespace

ClassifierModel::ClassifierModel(int num_classes, CosineSpec spec) : m_(num_classes), backing_(std::move(spec)) {
  check();
}

ClassifierModel::ClassifierModel(int num_classes, GridSpec spec) : m_(num_classes), backing_(std::move(spec)) {
  auto& nodes = std::get<GridSpec>(backing_).nodes;
  for (auto& n : nodes) n.psi = normalize_angle(n.psi);
  std::sort(nodes.begin(), nodes.end(), [](const GridNode& a, const GridNode& b) { return a.psi < b.psi; });
  check();
}

void ClassifierModel::check() const {
  if (m_ < 1) throw ConfigError("classifier model needs at least one class");
  const int d = m_ - 1;
  if (const auto* cs = cosine()) {
    if (static_cast<int>(cs->classes.size()) != m_) throw ConfigError("cosine model: class count mismatch");
    for (const auto& c : cs->classes) {
      if (c.h_amp.size() != d || c.h_off.size() != d) throw ConfigError("cosine model: h dimension must be m-1");
      if (!(c.r_off - std::abs(c.r_amp) > 0.0)) throw ConfigError("cosine model: R(psi) must stay positive");
    }
  } else {
    const auto& g = *grid();
    if (g.nodes.empty()) throw ConfigError("grid model has no nodes");
    for (const auto& n : g.nodes) {
      if (static_cast<int>(n.classes.size()) != m_) throw ConfigError("grid model: class count mismatch at a node");
      for (const auto& p : n.classes) {
        if (p.mean.size() != d || p.cov.rows() != d || p.cov.cols() != d)
          throw ConfigError("grid model: node dimension must be m-1");
        if (d > 0 && Eigen::LLT<Eigen::MatrixXd>(p.cov + kCovRidge * Eigen::MatrixXd::Identity(d, d)).info() !=
                         Eigen::Success)
          throw ConfigError("grid model: node covariance is not positive definite");
      }
    }
  }
}

ClassifierModel ClassifierModel::model1() {
  CosineSpec s;
  s.classes.push_back({Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Constant(1, 0.5), 1.4, 0.6});
  s.classes.push_back({Eigen::VectorXd::Constant(1, -0.5), Eigen::VectorXd::Constant(1, -0.5), 1.4, 0.6});
  return ClassifierModel(2, s);
}

ClassifierModel ClassifierModel::model2() {
  CosineSpec s;
  s.classes.push_back({Eigen::VectorXd::Constant(1, 0.3), Eigen::VectorXd::Constant(1, 0.3), 1.4, 0.6});
  s.classes.push_back({Eigen::VectorXd::Constant(1, -0.3), Eigen::VectorXd::Constant(1, -0.3), 1.4, -0.6});
  return ClassifierModel(2, s);
}

bool ClassifierModel::shared_covariance() const {
  if (const auto* cs = cosine()) {
    for (const auto& c : cs->classes)
      if (c.r_off != cs->classes.front().r_off || c.r_amp != cs->classes.front().r_amp) return false;
    return true;
  }
  for (const auto& n : grid()->nodes)
    for (const auto& p : n.classes)
      if (p.cov != n.classes.front().cov) return false;
  return true;
}

GaussianParams ClassifierModel::eval(int c, const RelPose& x) const { return eval_psi(c, x.dpsi); }

GaussianParams ClassifierModel::eval_psi(int c, double psi) const {
  if (c < 0 || c >= m_) throw InputError("class index out of range");
  const int d = m_ - 1;
  if (const auto* cs = cosine()) {
    const auto& p = cs->classes[c];
    const double r = p.r_off + p.r_amp * std::cos(psi);
    GaussianParams g;
    g.mean = p.h_amp * std::cos(2.0 * psi) + p.h_off;
    g.cov = std::sqrt(1.0 / r) * Eigen::MatrixXd::Identity(d, d);
    return g;
  }
  const auto& nodes = grid()->nodes;
  const double q = normalize_angle(psi);
  GaussianParams g;
  if (nodes.size() == 1) {
    g = nodes.front().classes[c];
  } else {
    // Find the segment [a, b] containing q, wrapping from the last node to the first.
    std::size_t hi = 0;
    while (hi < nodes.size() && nodes[hi].psi < q) ++hi;
    const GridNode& a = hi == 0 ? nodes.back() : nodes[hi - 1];
    const GridNode& b = hi == nodes.size() ? nodes.front() : nodes[hi];
    double span = b.psi - a.psi;
    double off = q - a.psi;
    if (span <= 0.0) span += kTwoPi;
    if (off < 0.0) off += kTwoPi;
    const double t = span > 0.0 ? std::clamp(off / span, 0.0, 1.0) : 0.0;
    g.mean = (1.0 - t) * a.classes[c].mean + t * b.classes[c].mean;
    g.cov = (1.0 - t) * a.classes[c].cov + t * b.classes[c].cov;
  }
  g.cov.diagonal().array() += kCovRidge;
  return g;
}

nlohmann::json ClassifierModel::to_json() const {
  nlohmann::json j;
  j["m"] = m_;
  if (const auto* cs = cosine()) {
    j["type"] = "cosine";
    for (const auto& c : cs->classes)
      j["classes"].push_back({{"h_amp", vec_json(c.h_amp)}, {"h_off", vec_json(c.h_off)}, {"r_off", c.r_off},
                              {"r_amp", c.r_amp}});
  } else {
    j["type"] = "grid";
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : grid()->nodes) {
      nlohmann::json node{{"psi", n.psi}};
      for (const auto& p : n.classes) node["classes"].push_back({{"mean", vec_json(p.mean)}, {"cov", mat_json(p.cov)}});
      j["nodes"].push_back(node);
    }
  }
  return j;
}

ClassifierModel ClassifierModel::from_json(const nlohmann::json& j) {
  try {
    const int m = j.at("m").get<int>();
    const std::string type = j.at("type").get<std::string>();
    if (type == "cosine") {
      CosineSpec s;
      for (const auto& c : j.at("classes"))
        s.classes.push_back({json_vec(c.at("h_amp")), json_vec(c.at("h_off")), c.at("r_off").get<double>(),
                             c.at("r_amp").get<double>()});
      return ClassifierModel(m, s);
    }
    if (type == "grid") {
      GridSpec s;
      for (const auto& n : j.at("nodes")) {
        GridNode node;
        node.psi = n.at("psi").get<double>();
        for (const auto& c : n.at("classes")) {
          GaussianParams p{json_vec(c.at("mean")), json_mat(c.at("cov"))};
          if (m == 2 && p.cov.size() == 0) p.cov = Eigen::MatrixXd::Zero(1, 1);
          node.classes.push_back(p);
        }
        s.nodes.push_back(node);
      }
      return ClassifierModel(m, s);
    }
    throw ConfigError("unknown model type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model document: ") + e.what());
  }
}

ClassifierModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse model file " + path + ": " + e.what());
  }
  return ClassifierModel::from_json(j);
}

void save_model(const ClassifierModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write model file: " + path);
  out << model.to_json().dump(2) << '\n';
}

std::vector<LogitVec> sample_cloud(const ClassifierModel& model, int c, const RelPose& x, int size, Rng& rng) {
  if (size < 1) throw InputError("cloud size must be positive");
  GaussianParams g = model.eval(c, x);
  Eigen::MatrixXd L = g.cov.llt().matrixL();
  std::vector<LogitVec> out;
  out.reserve(size);
  for (int i = 0; i < size; ++i) out.push_back(g.mean + L * standard_normal(static_cast<int>(g.mean.size()), rng));
  return out;
}

double semantic_loglik(const ClassifierModel& model, int c, const RelPose& x, const LogitVec& lg) {
  GaussianParams g = model.eval(c, x);
  const int d = static_cast<int>(g.mean.size());
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  Eigen::VectorXd r = lg - g.mean;
  Eigen::VectorXd w = llt.matrixL().solve(r);
  double logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  return -0.5 * (w.squaredNorm() + logdet + d * std::log(kTwoPi));
}

Eigen::MatrixXd phi_matrix(const ClassifierModel& model, const RelPose& x) {
  const int m = model.num_classes(), d = m - 1;
  GaussianParams gm = model.eval(m - 1, x);
  Eigen::RowVectorXd last = gm.cov.llt().solve(gm.mean).transpose();
  Eigen::MatrixXd phi(d, d);
  for (int i = 0; i < d; ++i) {
    GaussianParams gi = model.eval(i, x);
    phi.row(i) = gi.cov.llt().solve(gi.mean).transpose() - last;
  }
  return phi;
}

Eigen::VectorXd phi_vector(const ClassifierModel& model, const RelPose& x) {
  const int m = model.num_classes(), d = m - 1;
  GaussianParams gm = model.eval(m - 1, x);
  const double last = gm.mean.dot(gm.cov.llt().solve(gm.mean));
  Eigen::VectorXd phi(d);
  for (int i = 0; i < d; ++i) {
    GaussianParams gi = model.eval(i, x);
    phi[i] = gi.mean.dot(gi.cov.llt().solve(gi.mean)) - last;
  }
  return phi;
}

Eigen::VectorXd loglik_ratio_vector(const ClassifierModel& model, const RelPose& x, const LogitVec& lg) {
  const int m = model.num_classes(), d = m - 1;
  const double last = semantic_loglik(model, m - 1, x, lg);
  Eigen::VectorXd r(d);
  for (int i = 0; i < d; ++i) r[i] = semantic_loglik(model, i, x, lg) - last;
  return r;
}

double frobenius_penalty(const std::vector<Eigen::MatrixXd>& covs) {
  const std::size_t m = covs.size();
  if (m < 2) return 0.0;
  Eigen::MatrixXd last_inv = covs.back().inverse();
  double f = 0.0;
  for (std::size_t i = 0; i + 1 < m; ++i) f += (covs[i].inverse() - last_inv).squaredNorm();
  return f;
}

namespace {

// Log-Cholesky parameters: lower triangle row-major, diagonal stored as log.
Eigen::VectorXd to_logchol(const Eigen::MatrixXd& cov) {
  const int d = static_cast<int>(cov.rows());
  Eigen::MatrixXd L = cov.llt().matrixL();
  Eigen::VectorXd p(d * (d + 1) / 2);
  int k = 0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) p[k++] = i == j ? std::log(L(i, i)) : L(i, j);
  return p;
}

Eigen::MatrixXd from_logchol(const Eigen::VectorXd& p, int offset, int d) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(d, d);
  int k = offset;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) L(i, j) = i == j ? std::exp(p[k++]) : p[k++];
  return L * L.transpose();
}

struct NodeObjective {
  std::vector<Eigen::MatrixXd> targets;
  double kappa;
  int d;

  std::vector<Eigen::MatrixXd> covs(const Eigen::VectorXd& p) const {
    const int np = d * (d + 1) / 2;
    std::vector<Eigen::MatrixXd> out;
    for (std::size_t c = 0; c < targets.size(); ++c) out.push_back(from_logchol(p, static_cast<int>(c) * np, d));
    return out;
  }

  double operator()(const Eigen::VectorXd& p) const {
    auto cs = covs(p);
    double v = 0.0;
    for (std::size_t c = 0; c < cs.size(); ++c) v += (cs[c] - targets[c]).squaredNorm() / (d * d);
    return v + kappa * frobenius_penalty(cs);
  }
};

Eigen::VectorXd numeric_gradient(const NodeObjective& f, const Eigen::VectorXd& p) {
  Eigen::VectorXd g(p.size());
  for (int i = 0; i < p.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(p[i]));
    Eigen::VectorXd a = p, b = p;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

}  // namespace

FitResult fit_grid_model(const std::vector<TrainingSet>& data, double kappa, const FitOptions& opts) {
  if (kappa < 0.0) throw ConfigError("kappa must be nonnegative");
  const int m = static_cast<int>(data.size());
  if (m < 2) throw ConfigError("fit_grid_model needs at least two classes");
  const int d = m - 1;

  std::vector<double> grid;
  for (const auto& set : data)
    for (const auto& r : set) {
      const double psi = normalize_angle(r.pose.dpsi);
      if (std::none_of(grid.begin(), grid.end(), [&](double g) { return same_node_psi(g, psi); })) grid.push_back(psi);
    }
  std::sort(grid.begin(), grid.end());
  if (grid.empty()) throw ConfigError("fit_grid_model: empty training set");

  std::vector<std::string> warnings;
  // Sample statistics per class per node, when present.
  std::vector<std::vector<std::optional<GaussianParams>>> stats(m, std::vector<std::optional<GaussianParams>>(grid.size()));
  for (int c = 0; c < m; ++c) {
    for (const auto& r : data[c]) {
      if (r.cloud.size() < 2) throw InputError("training cloud needs at least 2 members");
      const double psi = normalize_angle(r.pose.dpsi);
      std::size_t k = 0;
      while (!same_node_psi(grid[k], psi)) ++k;
      GaussianParams g = gaussian_fit(r.cloud);
      g.cov.diagonal().array() -= kCovRidge;
      stats[c][k] = g;
    }
  }
  // Fill gaps from each class's own neighbors.
  for (int c = 0; c < m; ++c) {
    GridSpec own;
    for (std::size_t k = 0; k < grid.size(); ++k)
      if (stats[c][k]) {
        GridNode n;
        n.psi = grid[k];
        n.classes.assign(m, *stats[c][k]);
        own.nodes.push_back(n);
      }
    if (own.nodes.empty()) throw ConfigError("fit_grid_model: class " + std::to_string(c + 1) + " has no data");
    ClassifierModel interp(m, own);
    for (std::size_t k = 0; k < grid.size(); ++k)
      if (!stats[c][k]) {
        GaussianParams g = interp.eval_psi(c, grid[k]);
        g.cov.diagonal().array() -= kCovRidge;
        stats[c][k] = g;
        warnings.push_back("class " + std::to_string(c + 1) + " has no data at psi=" + std::to_string(grid[k]) +
                           "; interpolated from neighbors");
      }
  }

  GridSpec spec;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    NodeObjective f;
    f.kappa = kappa;
    f.d = d;
    for (int c = 0; c < m; ++c) {
      Eigen::MatrixXd t = stats[c][k]->cov;
      t.diagonal().array() += kCovRidge;
      f.targets.push_back(t);
    }
    const int np = d * (d + 1) / 2;
    Eigen::VectorXd p(m * np);
    for (int c = 0; c < m; ++c) p.segment(c * np, np) = to_logchol(f.targets[c]);

    double value = f(p);
    double step = 1.0;
    for (int it = 0; it < opts.iterations && kappa > 0.0; ++it) {
      Eigen::VectorXd g = numeric_gradient(f, p);
      if (g.norm() < opts.grad_tol) break;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        Eigen::VectorXd cand = p - step * g;
        double v = f(cand);
        if (v <= value - 1e-4 * step * g.squaredNorm()) {
          p = cand;
          value = v;
          accepted = true;
          step *= 2.0;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
    }

    GridNode node;
    node.psi = grid[k];
    auto covs = f.covs(p);
    for (int c = 0; c < m; ++c) {
      Eigen::MatrixXd cov = kappa > 0.0 ? covs[c] : f.targets[c];
      node.classes.push_back({stats[c][k]->mean, cov});
    }
    spec.nodes.push_back(node);
  }
  return {ClassifierModel(m, spec), warnings};
}

}  // namespace esslam
