#include "esslam/planning.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include <Eigen/Cholesky>

#include "esslam/errors.hpp"

namespace esslam {

Engine parse_engine(const std::string& s) {
  if (s == "mh") return Engine::MH;
  if (s == "jlp") return Engine::JLP;
  if (s == "weu") return Engine::WEU;
  throw ConfigError("unknown engine '" + s + "' (expected mh|jlp|weu)");
}

RewardKind parse_reward(const std::string& s) {
  if (s == "r1") return RewardKind::R1;
  if (s == "r2") return RewardKind::R2;
  throw ConfigError("unknown reward '" + s + "' (expected r1|r2)");
}

LambdaFamily parse_family(const std::string& s) {
  if (s == "dir") return LambdaFamily::Dirichlet;
  if (s == "lg") return LambdaFamily::LogisticGaussian;
  if (s == "lg-ub") return LambdaFamily::LgUpper;
  if (s == "lg-lb") return LambdaFamily::LgLower;
  throw ConfigError("unknown family '" + s + "' (expected dir|lg|lg-ub|lg-lb)");
}

std::string to_string(Engine e) {
  switch (e) {
    case Engine::MH: return "mh";
    case Engine::JLP: return "jlp";
    default: return "weu";
  }
}

std::string to_string(RewardKind r) { return r == RewardKind::R1 ? "r1" : "r2"; }

std::string to_string(LambdaFamily f) {
  switch (f) {
    case LambdaFamily::Dirichlet: return "dir";
    case LambdaFamily::LogisticGaussian: return "lg";
    case LambdaFamily::LgUpper: return "lg-ub";
    default: return "lg-lb";
  }
}

std::vector<Pose2> default_primitives() {
  auto arc = [](double turn) {
    const double s = 1.0;
    if (turn == 0.0) return Pose2{s, 0.0, 0.0};
    return Pose2{s * std::sin(turn) / turn, s * (1.0 - std::cos(turn)) / turn, turn};
  };
  const double soft = std::numbers::pi / 8.0, hard = std::numbers::pi / 4.0;
  return {arc(0.0), arc(soft), arc(-soft), arc(hard), arc(-hard)};
}

void check_compatibility(Engine engine, const RewardSpec& spec) {
  if (spec.kind == RewardKind::R1) {
    if (!(spec.r_max > 0.0)) throw ConfigError("R1 needs r_max > 0");
    if (engine == Engine::WEU)
      throw ConfigError("R1 is not applicable to the WEU baseline: a single belief carries no epistemic spread");
    if (engine == Engine::JLP && spec.family == LambdaFamily::Dirichlet)
      throw ConfigError("JLP is limited to the logistic-Gaussian family (MH: dir|lg|lg-ub|lg-lb, JLP: lg|lg-ub|lg-lb)");
  }
  if (spec.n_mc < 100) throw ConfigError("reward n_mc must be at least 100");
}

std::vector<int> predict_observed(const Pose2& camera, const std::map<int, Pose2>& objects, const SensorSpec& sensor) {
  std::vector<int> out;
  for (const auto& [id, pose] : objects)
    if (in_fov(camera, pose, sensor)) out.push_back(id);
  return out;
}

namespace {

// Joint draw from a Gaussian marginal, angles re-wrapped for pose blocks.
std::map<Key, Eigen::VectorXd> sample_marginal(const MarginalGaussian& mg, const Graph& graph, Rng& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(mg.cov);
  if (llt.info() != Eigen::Success) throw NumericError("marginal covariance is not positive definite");
  Eigen::VectorXd s = mg.mean + Eigen::MatrixXd(llt.matrixL()) * standard_normal(static_cast<int>(mg.mean.size()), rng);
  std::map<Key, Eigen::VectorXd> out;
  int off = 0;
  for (const auto& k : mg.keys) {
    const int n = static_cast<int>(graph.value(k).size());
    Eigen::VectorXd v = s.segment(off, n);
    if (k.is_pose()) v[2] = normalize_angle(v[2]);
    out[k] = v;
    off += n;
  }
  return out;
}

RelPose noisy(const RelPose& r, const Eigen::Matrix3d& cov, Rng& rng) {
  Eigen::Vector3d n = Eigen::Matrix3d(cov.llt().matrixL()) * standard_normal(3, rng);
  return {r.dx + n[0], r.dy + n[1], normalize_angle(r.dpsi + n[2])};
}

}  // namespace

MHGenerated mh_generate(const MHBelief& belief, const MotionSpec& action, const SensorSpec& sensor, Rng& rng) {
  MHGenerated out;
  const int W = belief.config().num_weights;
  out.w = std::uniform_int_distribution<int>(0, W - 1)(rng);
  const HybridBelief& hb = belief.beliefs()[out.w];
  std::vector<double> weights;
  std::vector<const std::pair<const ClassRealization, RealizationEntry>*> entries;
  for (const auto& kv : hb.realizations) {
    weights.push_back(kv.second.weight);
    entries.push_back(&kv);
  }
  const auto& chosen = *entries[sample_categorical(weights, rng)];
  out.realization = chosen.first;
  const Graph& g = chosen.second.graph;

  std::vector<Key> keys{robot_key(belief.step())};
  for (int o : belief.objects()) keys.push_back(object_key(o));
  auto draw = sample_marginal(g.marginal(keys), g, rng);
  const Pose2 xk = Pose2::from_vector(draw.at(robot_key(belief.step())));
  const Pose2 next = sample_motion(xk, action, rng);

  std::map<int, Pose2> objects;
  for (int o : belief.objects()) objects[o] = Pose2::from_vector(draw.at(object_key(o)));
  for (int o : predict_observed(next, objects, sensor)) {
    const RelPose rel = between(next, objects[o]);
    out.geo.push_back({o, noisy(rel, belief.config().geometric_cov, rng)});
    const int c = out.realization[belief.object_index(o)];
    out.sem.push_back({o, sample_cloud(*belief.config().model, c, rel, W, rng)});
  }
  return out;
}

JLPGenerated jlp_generate(const JLPBelief& belief, const MotionSpec& action, const SensorSpec& sensor, Rng& rng) {
  JLPGenerated out;
  const Graph& g = belief.graph();
  std::vector<Key> keys{robot_key(belief.step())};
  const std::vector<int> objs = belief.objects();
  for (int o : objs) keys.push_back(object_key(o));
  const bool semantic = belief.num_classes() > 1;
  if (semantic)
    for (int o : objs) keys.push_back(belief.latest().at(o));
  auto draw = sample_marginal(g.marginal(keys), g, rng);
  const Pose2 xk = Pose2::from_vector(draw.at(robot_key(belief.step())));
  const Pose2 next = sample_motion(xk, action, rng);

  std::map<int, Pose2> objects;
  for (int o : objs) objects[o] = Pose2::from_vector(draw.at(object_key(o)));
  for (int o : predict_observed(next, objects, sensor)) {
    const RelPose rel = between(next, objects[o]);
    out.geo.push_back({o, noisy(rel, belief.config().geometric_cov, rng)});
    int c = 0;
    if (semantic) {
      const ProbVec lam = inv_logit(draw.at(belief.latest().at(o)));
      c = sample_categorical(lam, rng);
    }
    out.classes[o] = c;
    out.sem.push_back({o, belief.config().model->eval(c, rel)});
  }
  return out;
}

double lambda_entropy(const std::vector<ProbVec>& particles, LambdaFamily family, int n_mc, Rng& rng) {
  if (family == LambdaFamily::Dirichlet) return dirichlet_entropy(dirichlet_fit(particles));
  std::vector<LogitVec> logits;
  logits.reserve(particles.size());
  for (const auto& p : particles) logits.push_back(logit(p));
  return lambda_entropy(gaussian_fit(logits), family, n_mc, rng);
}

double lambda_entropy(const GaussianParams& lambda, LambdaFamily family, int n_mc, Rng& rng) {
  switch (family) {
    case LambdaFamily::LogisticGaussian: return lg_entropy_numeric(lambda, n_mc, rng).value;
    case LambdaFamily::LgUpper: return lg_entropy_upper(lambda);
    case LambdaFamily::LgLower: return lg_entropy_lower(lambda);
    default: throw ConfigError("the Dirichlet family needs lambda particles (MH engine only)");
  }
}

double reward_r1(const std::vector<double>& entropies, double r_max) {
  double r = 0.0;
  for (double h : entropies) r += std::min(-h, r_max);
  return r;
}

double reward_r2(const std::vector<ProbVec>& means) {
  double r = 0.0;
  for (const auto& p : means) r -= shannon_entropy(p);
  return r;
}

double belief_reward(const MHBelief& belief, const RewardSpec& spec, Rng& rng) {
  if (spec.kind == RewardKind::R2) {
    std::vector<ProbVec> means;
    for (int o : belief.objects()) means.push_back(class_posterior(belief, o));
    return reward_r2(means);
  }
  std::vector<double> hs;
  for (int o : belief.objects()) hs.push_back(lambda_entropy(lambda_particles(belief, o), spec.family, spec.n_mc, rng));
  return reward_r1(hs, spec.r_max);
}

double belief_reward(const JLPBelief& belief, const RewardSpec& spec, Rng& rng) {
  const auto post = lambda_posteriors(belief);
  if (spec.kind == RewardKind::R2) {
    std::vector<ProbVec> means;
    for (const auto& [o, g] : post) means.push_back(class_posterior_jlp(g, spec.n_mc, rng));
    return reward_r2(means);
  }
  if (spec.family == LambdaFamily::Dirichlet) throw ConfigError("JLP is limited to the logistic-Gaussian family");
  std::vector<double> hs;
  for (const auto& [o, g] : post) hs.push_back(lambda_entropy(g, spec.family, spec.n_mc, rng));
  return reward_r1(hs, spec.r_max);
}

namespace {

void advance(MHBelief& b, const Pose2& a, const PlanningProblem& p, Rng& rng) {
  MotionSpec ms{a, p.motion_cov};
  MHGenerated gen = mh_generate(b, ms, p.sensor, rng);
  mh_update(b, gen.geo, gen.sem, ms);
}

void advance(JLPBelief& b, const Pose2& a, const PlanningProblem& p, Rng& rng) {
  MotionSpec ms{a, p.motion_cov};
  JLPGenerated gen = jlp_generate(b, ms, p.sensor, rng);
  jlp_update(b, gen.geo, gen.sem, ms);
}

template <class Belief>
double objective_rec(const Belief& b, const std::vector<Pose2>& actions, std::size_t depth, const PlanningProblem& p,
                     Rng& rng) {
  if (depth >= actions.size()) return 0.0;
  const int ns = p.config.n_samples;
  double sum = 0.0;
  for (int i = 0; i < ns; ++i) {
    Belief next = b;
    advance(next, actions[depth], p, rng);
    sum += belief_reward(next, p.reward, rng) + objective_rec(next, actions, depth + 1, p, rng);
  }
  return sum / ns;
}

template <class Belief>
double objective_impl(const Belief& b, const std::vector<Pose2>& actions, const PlanningProblem& p, Rng& rng) {
  if (p.config.n_samples < 1) throw ConfigError("n_samples must be at least 1");
  return objective_rec(b, actions, 0, p, rng);
}

struct Node {
  std::vector<int> visits;
  std::vector<double> value_sum;
  std::vector<std::unique_ptr<Node>> children;
  int total = 0;
  explicit Node(int n) : visits(n, 0), value_sum(n, 0.0), children(n) {}
};

template <class Belief>
PlanResult mcts_impl(const Belief& root_belief, const PlanningProblem& p) {
  const int na = static_cast<int>(p.primitives.size());
  if (na == 0) throw ConfigError("motion primitive set is empty");
  if (p.config.horizon < 1) throw ConfigError("planning horizon must be at least 1");
  if (p.config.budget < na) throw ConfigError("MCTS budget must be at least the number of primitives");
  Node root(na);
  for (int iter = 0; iter < p.config.budget; ++iter) {
    Rng rng(rollout_seed(p.config.seed, iter));
    Belief b = root_belief;
    std::vector<std::pair<Node*, int>> path;
    std::vector<double> rewards;
    Node* node = &root;
    bool expanded = false;
    for (int depth = 0; depth < p.config.horizon; ++depth) {
      int a;
      if (!expanded) {
        a = -1;
        for (int i = 0; i < na; ++i)
          if (node->visits[i] == 0) {
            a = i;
            break;
          }
        if (a >= 0) {
          expanded = true;
        } else {
          double best = -std::numeric_limits<double>::infinity();
          for (int i = 0; i < na; ++i) {
            const double q = node->value_sum[i] / node->visits[i] +
                             p.config.exploration_c * std::sqrt(std::log(static_cast<double>(node->total)) / node->visits[i]);
            if (q > best) {
              best = q;
              a = i;
            }
          }
        }
        path.emplace_back(node, a);
        if (!node->children[a]) node->children[a] = std::make_unique<Node>(na);
        node = node->children[a].get();
      } else {
        a = std::uniform_int_distribution<int>(0, na - 1)(rng);
      }
      advance(b, p.primitives[a], p, rng);
      rewards.push_back(belief_reward(b, p.reward, rng));
    }
    double to_go = 0.0;
    std::vector<double> returns(rewards.size());
    for (int t = static_cast<int>(rewards.size()) - 1; t >= 0; --t) {
      to_go += rewards[t];
      returns[t] = to_go;
    }
    for (std::size_t t = 0; t < path.size(); ++t) {
      auto [n, a] = path[t];
      n->visits[a] += 1;
      n->value_sum[a] += returns[t];
      n->total += 1;
    }
  }
  PlanResult res;
  res.visits = root.visits;
  res.values.resize(na);
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < na; ++i) {
    res.values[i] = root.visits[i] > 0 ? root.value_sum[i] / root.visits[i] : -std::numeric_limits<double>::infinity();
    if (res.values[i] > best) {
      best = res.values[i];
      res.best = i;
    }
  }
  return res;
}

}  // namespace

double objective(const MHBelief& b, const std::vector<Pose2>& a, const PlanningProblem& p, Rng& rng) {
  return objective_impl(b, a, p, rng);
}
double objective(const JLPBelief& b, const std::vector<Pose2>& a, const PlanningProblem& p, Rng& rng) {
  return objective_impl(b, a, p, rng);
}

std::uint64_t rollout_seed(std::uint64_t seed, int iteration) {
  return derive_seed(seed, {0x6d637473ULL, static_cast<std::uint64_t>(iteration)});
}

PlanResult mcts_plan(const MHBelief& b, const PlanningProblem& p) { return mcts_impl(b, p); }
PlanResult mcts_plan(const JLPBelief& b, const PlanningProblem& p) { return mcts_impl(b, p); }

nlohmann::json PlanResult::to_json() const {
  nlohmann::json vals = nlohmann::json::array();
  for (double v : values) vals.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
  return {{"best", best}, {"values", vals}, {"visits", visits}};
}

}  // namespace esslam
