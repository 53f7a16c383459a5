#include "esslam/inference_jlp.hpp"

#include <set>

#include <Eigen/Cholesky>

#include "esslam/errors.hpp"

namespace esslam {

JLPBelief::JLPBelief(JLPConfig config, const Pose2& start) : config_(std::move(config)) {
  if (!config_.model) throw ConfigError("JLP belief needs a classifier model");
  if (!(config_.lambda_prior_var > 0.0)) throw ConfigError("lambda prior variance must be positive");
  graph_.add_variable(robot_key(0), start.vector());
  graph_.add_factor(PriorFactor{robot_key(0), start.vector(), config_.prior_cov});
}

std::vector<int> JLPBelief::objects() const { return order_; }

JLPBelief JLPBelief::condensed() const {
  JLPBelief out = *this;
  std::vector<Key> keep{robot_key(step_)};
  for (int o : order_) keep.push_back(object_key(o));
  for (int o : order_) keep.push_back(latest_.at(o));
  out.graph_ = graph_.condensed(keep);
  return out;
}

void jlp_update(JLPBelief& belief, const std::vector<GeoMeasurement>& geo, const std::vector<SemanticStats>& sem,
                const MotionSpec& action) {
  validate(action);
  if (action.noise_cov.isZero(0.0)) throw ConfigError("odometry factors need a positive definite motion covariance");
  const int d = belief.num_classes() - 1;
  std::set<int> geo_ids, sem_ids;
  for (const auto& g : geo)
    if (!geo_ids.insert(g.object).second) throw InputError("duplicate geometric measurement");
  for (const auto& s : sem) {
    if (!sem_ids.insert(s.object).second) throw InputError("duplicate semantic statistics");
    if (s.lg.mean.size() != d) throw InputError("semantic statistics have the wrong dimension");
  }
  if (geo_ids != sem_ids) throw InputError("geometric and semantic measurements must cover the same objects");

  Graph& g = belief.graph_;
  const int k = belief.step_ + 1;
  const Key xk = robot_key(k);
  const Pose2 pred = compose(g.pose(robot_key(k - 1)), action.action);
  g.add_variable(xk, pred.vector());
  g.add_factor(OdometryFactor{robot_key(k - 1), xk, action});

  for (const auto& gm : geo) {
    const Key ok = object_key(gm.object);
    if (!g.has(ok)) {
      g.add_variable(ok, compose(pred, as_pose(gm.z)).vector());
      belief.order_.push_back(gm.object);
      if (d > 0) {
        const Key l0 = lambda_key(gm.object, 0);
        g.add_variable(l0, Eigen::VectorXd::Zero(d));
        g.add_factor(PriorFactor{l0, Eigen::VectorXd::Zero(d),
                                 belief.config_.lambda_prior_var * Eigen::MatrixXd::Identity(d, d)});
        belief.latest_[gm.object] = l0;
      } else {
        belief.latest_[gm.object] = ok;
      }
    }
    g.add_factor(GeometricFactor{xk, ok, gm.z, belief.config_.geometric_cov});
  }

  if (d > 0) {
    for (const auto& s : sem) {
      const Key prev = belief.latest_.at(s.object);
      const Key next = lambda_key(s.object, prev.seq + 1);
      const RelPose rel = between(pred, g.pose(object_key(s.object)));
      Eigen::VectorXd init = g.value(prev) + phi_matrix(*belief.config_.model, rel) * s.lg.mean -
                             0.5 * phi_vector(*belief.config_.model, rel);
      g.add_variable(next, init);
      g.add_factor(JlpFactor{prev, next, xk, object_key(s.object), s.lg.mean, s.lg.cov, belief.config_.model});
      belief.latest_[s.object] = next;
    }
  }
  belief.step_ = k;
  if (!geo.empty()) g.optimize();

  const bool compact = !belief.config_.keep_full_chain ||
                       static_cast<int>(g.num_variables()) > belief.config_.max_variables;
  if (compact && d > 0)
    for (int o : belief.order_) marginalize_lambda_history(g, o, true);
}

std::map<int, GaussianParams> lambda_posteriors(const JLPBelief& belief) {
  std::map<int, GaussianParams> out;
  if (belief.latest().empty() || belief.num_classes() < 2) return out;
  std::vector<Key> keys;
  for (int o : belief.objects()) keys.push_back(belief.latest().at(o));
  MarginalGaussian mg = belief.graph().marginal(keys);
  const int d = belief.num_classes() - 1;
  int i = 0;
  for (int o : belief.objects()) {
    out[o] = GaussianParams{mg.mean.segment(i * d, d), mg.cov.block(i * d, i * d, d, d)};
    ++i;
  }
  return out;
}

GaussianParams lambda_posterior(const JLPBelief& belief, int object) {
  if (!belief.knows(object)) throw InputError("unknown object " + std::to_string(object));
  MarginalGaussian mg = belief.graph().marginal({belief.latest().at(object)});
  return {mg.mean, mg.cov};
}

ProbVec class_posterior_jlp(const GaussianParams& lambda, int n_mc, Rng& rng) {
  const int d = static_cast<int>(lambda.mean.size());
  if (n_mc < 1) throw ConfigError("n_mc must be positive");
  Eigen::LLT<Eigen::MatrixXd> llt(lambda.cov);
  if (llt.info() != Eigen::Success) throw NumericError("lambda covariance is not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  ProbVec acc = ProbVec::Zero(d + 1);
  for (int i = 0; i < n_mc; ++i) acc += inv_logit(lambda.mean + L * standard_normal(d, rng));
  return acc / static_cast<double>(n_mc);
}

ProbVec class_posterior_jlp(const JLPBelief& belief, int object, int n_mc, Rng& rng) {
  if (belief.num_classes() == 1) return ProbVec::Ones(1);
  return class_posterior_jlp(lambda_posterior(belief, object), n_mc, rng);
}

nlohmann::json snapshot(const JLPBelief& belief) {
  nlohmann::json j;
  j["engine"] = "jlp";
  j["step"] = belief.step();
  j["objects"] = nlohmann::json::array();
  for (const auto& [o, g] : lambda_posteriors(belief)) {
    nlohmann::json cov = nlohmann::json::array();
    for (int r = 0; r < g.cov.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < g.cov.cols(); ++c) row.push_back(g.cov(r, c));
      cov.push_back(row);
    }
    j["objects"].push_back({{"id", o}, {"lambda_mean", std::vector<double>(g.mean.data(), g.mean.data() + g.mean.size())},
                            {"lambda_cov", cov}});
  }
  const Pose2 x = belief.graph().pose(robot_key(belief.step()));
  j["robot"] = {x.x, x.y, x.theta};
  j["variables"] = belief.graph().num_variables();
  return j;
}

}  // namespace esslam
