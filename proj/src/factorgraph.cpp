#include "esslam/factorgraph.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <set>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "esslam/errors.hpp"

namespace esslam {

namespace {

using Lookup = std::function<const Eigen::VectorXd&(const Key&)>;

struct LocalEval {
  Eigen::VectorXd r;
  Eigen::MatrixXd cov;
  std::vector<int> angles;  // residual components that are angles
};

Eigen::VectorXd stacked_difference(const std::vector<Key>& keys, const Eigen::VectorXd& lin, const Lookup& val) {
  Eigen::VectorXd d(lin.size());
  int off = 0;
  for (const auto& k : keys) {
    const Eigen::VectorXd& v = val(k);
    const int n = static_cast<int>(v.size());
    if (k.is_pose())
      d.segment(off, 3) = pose_difference(v, lin.segment(off, 3));
    else
      d.segment(off, n) = v - lin.segment(off, n);
    off += n;
  }
  return d;
}

LocalEval eval_local(const Factor& factor, const Lookup& val, bool with_cov) {
  LocalEval e;
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, PriorFactor>) {
          const Eigen::VectorXd& v = val(f.key);
          if (f.key.is_pose()) {
            e.r = pose_difference(v, f.mean);
            e.angles = {2};
          } else {
            e.r = v - f.mean;
          }
          if (with_cov) e.cov = f.cov;
        } else if constexpr (std::is_same_v<T, OdometryFactor>) {
          RelPose rel = between(Pose2::from_vector(val(f.from)), Pose2::from_vector(val(f.to)));
          e.r = pose_difference(rel.vector(), f.motion.action.vector());
          e.angles = {2};
          if (with_cov) e.cov = f.motion.noise_cov;
        } else if constexpr (std::is_same_v<T, GeometricFactor>) {
          RelPose rel = between(Pose2::from_vector(val(f.pose)), Pose2::from_vector(val(f.object)));
          e.r = pose_difference(rel.vector(), f.measured.vector());
          e.angles = {2};
          if (with_cov) e.cov = f.cov;
        } else if constexpr (std::is_same_v<T, JlpFactor>) {
          RelPose rel = between(Pose2::from_vector(val(f.pose)), Pose2::from_vector(val(f.object)));
          Eigen::MatrixXd Phi = phi_matrix(*f.model, rel);
          Eigen::VectorXd phi = phi_vector(*f.model, rel);
          e.r = val(f.next) - val(f.prev) - Phi * f.lg_mean + 0.5 * phi;
          if (with_cov) {
            const int d = static_cast<int>(phi.size());
            e.cov = Phi * f.lg_cov * Phi.transpose() + kJlpEpsilon * Eigen::MatrixXd::Identity(d, d);
          }
        } else if constexpr (std::is_same_v<T, SemanticFactor>) {
          RelPose rel = between(Pose2::from_vector(val(f.pose)), Pose2::from_vector(val(f.object)));
          GaussianParams g = f.model->eval(f.cls, rel);
          e.r = f.lg - g.mean;
          if (with_cov) e.cov = g.cov;
        } else {
          e.r = f.A * stacked_difference(f.keys, f.lin, val) - f.b;
        }
      },
      factor);
  return e;
}

}  // namespace

std::string Key::str() const {
  switch (kind) {
    case Kind::Robot:
      return "x" + std::to_string(id);
    case Kind::Object:
      return "o" + std::to_string(id);
    default:
      return "l" + std::to_string(id) + "_" + std::to_string(seq);
  }
}

std::vector<Key> factor_keys(const Factor& f) {
  return std::visit(
      [](const auto& x) -> std::vector<Key> {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, PriorFactor>) return {x.key};
        else if constexpr (std::is_same_v<T, OdometryFactor>) return {x.from, x.to};
        else if constexpr (std::is_same_v<T, GeometricFactor>) return {x.pose, x.object};
        else if constexpr (std::is_same_v<T, JlpFactor>) return {x.prev, x.next, x.pose, x.object};
        else if constexpr (std::is_same_v<T, SemanticFactor>) return {x.pose, x.object};
        else return x.keys;
      },
      f);
}

std::string factor_type(const Factor& f) {
  static const char* names[] = {"prior", "odometry", "geometric", "jlp", "semantic", "linear"};
  return names[f.index()];
}

void Graph::add_variable(const Key& k, const Eigen::VectorXd& initial) {
  if (has(k)) throw InputError("variable " + k.str() + " already exists");
  Eigen::VectorXd v = initial;
  if (k.is_pose()) {
    if (v.size() != 3) throw InputError("pose variable " + k.str() + " must have dimension 3");
    v[2] = normalize_angle(v[2]);
  }
  values_.emplace(k, v);
}

void Graph::add_factor(Factor f) {
  for (const auto& k : factor_keys(f))
    if (!has(k)) throw InputError("factor references missing variable " + k.str());
  factors_.push_back(std::move(f));
}

void Graph::remove_variable(const Key& k) { values_.erase(k); }

const Eigen::VectorXd& Graph::value(const Key& k) const {
  auto it = values_.find(k);
  if (it == values_.end()) throw InputError("unknown variable " + k.str());
  return it->second;
}

void Graph::set_value(const Key& k, const Eigen::VectorXd& v) {
  auto it = values_.find(k);
  if (it == values_.end()) throw InputError("unknown variable " + k.str());
  it->second = v;
  if (k.is_pose()) it->second[2] = normalize_angle(v[2]);
}

int Graph::dimension() const {
  int d = 0;
  for (const auto& [k, v] : values_) d += static_cast<int>(v.size());
  return d;
}

std::vector<Key> Graph::keys() const {
  std::vector<Key> out;
  out.reserve(values_.size());
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

FactorEval Graph::evaluate(const Factor& f) const {
  Lookup val = [this](const Key& k) -> const Eigen::VectorXd& { return value(k); };
  LocalEval e = eval_local(f, val, true);
  return {e.r, e.cov};
}

FactorEval jlp_residual(const JlpFactor& f, const Graph& graph) { return graph.evaluate(Factor(f)); }

Graph::Whitened Graph::whiten(const Factor& f) const {
  const std::vector<Key> keys = factor_keys(f);
  std::map<Key, Eigen::VectorXd> local;
  for (const auto& k : keys) local[k] = value(k);
  Lookup val = [&local](const Key& k) -> const Eigen::VectorXd& { return local.at(k); };

  LocalEval base = eval_local(f, val, true);
  const int nr = static_cast<int>(base.r.size());
  Whitened w;
  w.J.resize(keys.size());

  const auto* lin = std::get_if<LinearFactor>(&f);
  const auto* jlp = std::get_if<JlpFactor>(&f);
  const auto* prior = std::get_if<PriorFactor>(&f);

  for (std::size_t i = 0; i < keys.size(); ++i) {
    const Key& k = keys[i];
    const int n = static_cast<int>(local[k].size());
    if (lin) {
      int off = 0;
      for (std::size_t j = 0; j < i; ++j) off += static_cast<int>(local[keys[j]].size());
      w.J[i] = lin->A.middleCols(off, n);
    } else if (prior) {
      w.J[i] = Eigen::MatrixXd::Identity(nr, n);
    } else if (jlp && !k.is_pose()) {
      w.J[i] = (k == jlp->next ? 1.0 : -1.0) * Eigen::MatrixXd::Identity(nr, n);
    } else {
      Eigen::MatrixXd J(nr, n);
      for (int c = 0; c < n; ++c) {
        const double orig = local[k][c];
        local[k][c] = orig + kNumericStep;
        Eigen::VectorXd rp = eval_local(f, val, false).r;
        local[k][c] = orig - kNumericStep;
        Eigen::VectorXd rm = eval_local(f, val, false).r;
        local[k][c] = orig;
        Eigen::VectorXd diff = rp - rm;
        for (int a : base.angles) diff[a] = normalize_angle(diff[a]);
        J.col(c) = diff / (2.0 * kNumericStep);
      }
      w.J[i] = J;
    }
  }

  if (lin) {
    w.r = base.r;
    return w;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(base.cov);
  if (llt.info() != Eigen::Success)
    throw NumericError("factor '" + factor_type(f) + "' has a covariance that is not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  w.r = L.triangularView<Eigen::Lower>().solve(base.r);
  for (auto& J : w.J) J = L.triangularView<Eigen::Lower>().solve(J);
  w.log_norm = -(L.diagonal().array().log().sum() + 0.5 * nr * std::log(2.0 * std::numbers::pi));
  return w;
}

double Graph::cost() const {
  Lookup val = [this](const Key& k) -> const Eigen::VectorXd& { return value(k); };
  double c = 0.0;
  for (const auto& f : factors_) {
    LocalEval e = eval_local(f, val, true);
    if (std::holds_alternative<LinearFactor>(f)) {
      c += 0.5 * e.r.squaredNorm();
    } else {
      Eigen::LLT<Eigen::MatrixXd> llt(e.cov);
      if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
      c += 0.5 * llt.matrixL().solve(e.r).squaredNorm();
    }
  }
  return c;
}

Graph::Normal Graph::normal_equations(const std::vector<std::size_t>& subset, const std::vector<Key>& order) const {
  Normal n;
  n.order = order;
  int dim = 0;
  for (const auto& k : order) {
    n.offset[k] = dim;
    dim += static_cast<int>(value(k).size());
  }
  n.H = Eigen::MatrixXd::Zero(dim, dim);
  n.g = Eigen::VectorXd::Zero(dim);
  for (std::size_t idx : subset) {
    const Factor& f = factors_[idx];
    const std::vector<Key> keys = factor_keys(f);
    Whitened w = whiten(f);
    n.cost += 0.5 * w.r.squaredNorm();
    n.log_norm += w.log_norm;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const int oi = n.offset.at(keys[i]);
      const int ni = static_cast<int>(w.J[i].cols());
      n.g.segment(oi, ni).noalias() += w.J[i].transpose() * w.r;
      for (std::size_t j = 0; j < keys.size(); ++j) {
        const int oj = n.offset.at(keys[j]);
        const int nj = static_cast<int>(w.J[j].cols());
        n.H.block(oi, oj, ni, nj).noalias() += w.J[i].transpose() * w.J[j];
      }
    }
  }
  return n;
}

Graph::Normal Graph::normal_equations() const {
  std::vector<std::size_t> all(factors_.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return normal_equations(all, keys());
}

void Graph::retract(const std::vector<Key>& order, const std::map<Key, int>& offset, const Eigen::VectorXd& delta) {
  for (const auto& k : order) {
    Eigen::VectorXd& v = values_.at(k);
    v += delta.segment(offset.at(k), v.size());
    if (k.is_pose()) v[2] = normalize_angle(v[2]);
  }
}

OptimizeReport Graph::optimize(const OptimizeOptions& opts) {
  OptimizeReport rep;
  double cost_now = cost();
  rep.initial_cost = cost_now;
  double damping = 1e-8;
  for (int it = 0; it < opts.max_iterations; ++it) {
    Normal n = normal_equations();
    cost_now = n.cost;
    if (n.H.rows() == 0) break;
    bool accepted = false;
    double new_cost = cost_now;
    const auto saved = values_;
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::MatrixXd A = n.H;
      for (int i = 0; i < A.rows(); ++i) A(i, i) += damping * std::max(n.H(i, i), 1e-9);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
      Eigen::VectorXd delta = -ldlt.solve(n.g);
      if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
        damping *= 10.0;
        continue;
      }
      retract(n.order, n.offset, delta);
      new_cost = cost();
      if (new_cost <= cost_now) {
        accepted = true;
        damping = std::max(damping * 0.1, 1e-12);
        break;
      }
      values_ = saved;
      damping *= 10.0;
    }
    rep.iterations = it + 1;
    if (!accepted) {
      rep.converged = true;
      break;
    }
    const double change = cost_now - new_cost;
    cost_now = new_cost;
    if (change <= opts.rel_tol * cost_now || cost_now < 1e-30) {
      rep.converged = true;
      break;
    }
  }
  rep.final_cost = cost_now;
  if (!std::isfinite(cost_now)) throw OptimizationError("optimization diverged to a non-finite cost");
  return rep;
}

MarginalGaussian Graph::marginal(const std::vector<Key>& keys) const {
  Normal n = normal_equations();
  Eigen::LLT<Eigen::MatrixXd> llt(n.H);
  if (llt.info() != Eigen::Success) throw NumericError("singular information matrix (gauge not fixed)");
  int sel = 0;
  for (const auto& k : keys) sel += static_cast<int>(value(k).size());
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n.H.rows(), sel);
  MarginalGaussian m;
  m.keys = keys;
  m.mean.resize(sel);
  int c = 0;
  for (const auto& k : keys) {
    const int dk = static_cast<int>(value(k).size());
    m.mean.segment(c, dk) = value(k);
    for (int i = 0; i < dk; ++i) E(n.offset.at(k) + i, c + i) = 1.0;
    c += dk;
  }
  Eigen::MatrixXd X = llt.solve(E);
  m.cov = E.transpose() * X;
  m.cov = 0.5 * (m.cov + m.cov.transpose());
  return m;
}

double Graph::log_evidence() const {
  Normal n = normal_equations();
  Eigen::LLT<Eigen::MatrixXd> llt(n.H);
  if (llt.info() != Eigen::Success) throw NumericError("singular information matrix in evidence");
  const double logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  return -n.cost + n.log_norm - 0.5 * logdet + 0.5 * n.H.rows() * std::log(2.0 * std::numbers::pi);
}

Graph Graph::condensed(const std::vector<Key>& keep) const {
  MarginalGaussian m = marginal(keep);
  Eigen::MatrixXd info = m.cov.inverse();
  info = 0.5 * (info + info.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) throw NumericError("condensed marginal is not positive definite");
  Graph g;
  for (const auto& k : keep) g.add_variable(k, value(k));
  LinearFactor lf;
  lf.keys = keep;
  lf.lin = m.mean;
  lf.A = llt.matrixU();
  lf.b = Eigen::VectorXd::Zero(m.mean.size());
  g.add_factor(lf);
  return g;
}

nlohmann::json Graph::to_json() const {
  nlohmann::json j;
  j["variables"] = nlohmann::json::array();
  for (const auto& [k, v] : values_)
    j["variables"].push_back({{"key", k.str()}, {"value", std::vector<double>(v.data(), v.data() + v.size())}});
  j["factors"] = nlohmann::json::array();
  double total = 0.0;
  for (const auto& f : factors_) {
    Whitened w = whiten(f);
    const double c = 0.5 * w.r.squaredNorm();
    total += c;
    nlohmann::json keys = nlohmann::json::array();
    for (const auto& k : factor_keys(f)) keys.push_back(k.str());
    j["factors"].push_back({{"type", factor_type(f)}, {"keys", keys}, {"cost", c}});
  }
  j["cost"] = total;
  return j;
}

void marginalize_lambda_history(Graph& graph, int object, bool keep_latest) {
  if (!keep_latest) return;
  std::vector<Key> chain;
  for (const auto& k : graph.keys())
    if (k.kind == Key::Kind::Lambda && k.id == object) chain.push_back(k);
  if (chain.size() < 2) return;
  std::sort(chain.begin(), chain.end());
  const std::set<Key> old(chain.begin(), chain.end() - 1);

  std::vector<std::size_t> subset;
  std::set<Key> sep_set;
  const auto& factors = graph.factors();
  for (std::size_t i = 0; i < factors.size(); ++i) {
    auto keys = factor_keys(factors[i]);
    if (std::none_of(keys.begin(), keys.end(), [&](const Key& k) { return old.count(k) > 0; })) continue;
    subset.push_back(i);
    for (const auto& k : keys)
      if (!old.count(k)) sep_set.insert(k);
  }
  std::vector<Key> order(old.begin(), old.end());
  const std::vector<Key> sep(sep_set.begin(), sep_set.end());
  order.insert(order.end(), sep.begin(), sep.end());

  Graph::Normal n = graph.normal_equations(subset, order);
  int no = 0;
  for (const auto& k : old) no += static_cast<int>(graph.value(k).size());
  const int ns = static_cast<int>(n.H.rows()) - no;

  LinearFactor lf;
  lf.keys = sep;
  lf.lin.resize(ns);
  int off = 0;
  for (const auto& k : sep) {
    const Eigen::VectorXd& v = graph.value(k);
    lf.lin.segment(off, v.size()) = v;
    off += static_cast<int>(v.size());
  }
  if (ns > 0) {
    const Eigen::MatrixXd Hoo = n.H.topLeftCorner(no, no);
    const Eigen::MatrixXd Hos = n.H.topRightCorner(no, ns);
    const Eigen::MatrixXd Hss = n.H.bottomRightCorner(ns, ns);
    Eigen::LLT<Eigen::MatrixXd> llt(Hoo);
    if (llt.info() != Eigen::Success) throw NumericError("lambda history block is singular");
    Eigen::MatrixXd S = Hss - Hos.transpose() * llt.solve(Hos);
    Eigen::VectorXd gs = n.g.tail(ns) - Hos.transpose() * llt.solve(n.g.head(no));
    S = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    const double tol = 1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    std::vector<int> keep_idx;
    for (int i = 0; i < ns; ++i)
      if (es.eigenvalues()[i] > tol) keep_idx.push_back(i);
    lf.A.resize(static_cast<int>(keep_idx.size()), ns);
    lf.b.resize(static_cast<int>(keep_idx.size()));
    for (std::size_t r = 0; r < keep_idx.size(); ++r) {
      const double ev = es.eigenvalues()[keep_idx[r]];
      const Eigen::VectorXd v = es.eigenvectors().col(keep_idx[r]);
      lf.A.row(static_cast<int>(r)) = std::sqrt(ev) * v.transpose();
      lf.b[static_cast<int>(r)] = -v.dot(gs) / std::sqrt(ev);
    }
  }

  auto& fs = graph.mutable_factors();
  std::vector<Factor> kept;
  kept.reserve(fs.size());
  for (std::size_t i = 0; i < fs.size(); ++i)
    if (!std::binary_search(subset.begin(), subset.end(), i)) kept.push_back(std::move(fs[i]));
  fs = std::move(kept);
  for (const auto& k : old) graph.remove_variable(k);
  if (ns > 0 && lf.A.rows() > 0) graph.add_factor(lf);
}

}  // namespace esslam
