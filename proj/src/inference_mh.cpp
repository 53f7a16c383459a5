#include "esslam/inference_mh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "esslam/errors.hpp"

namespace esslam {

namespace {

void normalize_log_weights(std::map<ClassRealization, RealizationEntry>& reals, std::map<ClassRealization, double>& logw) {
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& [c, lw] : logw) mx = std::max(mx, lw);
  double total = 0.0;
  for (auto& [c, e] : reals) {
    e.weight = std::exp(logw.at(c) - mx);
    total += e.weight;
  }
  for (auto& [c, e] : reals) e.weight /= total;
}

}  // namespace

MHBelief::MHBelief(MHConfig config, const Pose2& start) : config_(std::move(config)) {
  if (!config_.model) throw ConfigError("MH belief needs a classifier model");
  if (config_.num_weights < 1) throw ConfigError("MH belief needs at least one weight realization");
  if (config_.prune_threshold < 0.0 || config_.prune_threshold >= 1.0)
    throw ConfigError("prune threshold must lie in [0, 1)");
  Graph g;
  g.add_variable(robot_key(0), start.vector());
  g.add_factor(PriorFactor{robot_key(0), start.vector(), config_.prior_cov});
  const double le = g.log_evidence();
  for (int w = 0; w < config_.num_weights; ++w) {
    HybridBelief hb;
    hb.w = w;
    hb.realizations.emplace(ClassRealization{}, RealizationEntry{g, 1.0, le});
    beliefs_.push_back(std::move(hb));
  }
}

bool MHBelief::knows(int object) const { return object_index(object) >= 0; }

int MHBelief::object_index(int object) const {
  auto it = std::find(objects_.begin(), objects_.end(), object);
  return it == objects_.end() ? -1 : static_cast<int>(it - objects_.begin());
}

MHBelief MHBelief::condensed() const {
  MHBelief out = *this;
  std::vector<Key> keep{robot_key(step_)};
  for (int o : objects_) keep.push_back(object_key(o));
  for (auto& hb : out.beliefs_)
    for (auto& [c, e] : hb.realizations) {
      e.graph = e.graph.condensed(keep);
      e.log_evidence = e.graph.log_evidence();
    }
  return out;
}

void mh_update(MHBelief& belief, const std::vector<GeoMeasurement>& geo, const std::vector<SemanticObservation>& sem,
               const MotionSpec& action) {
  validate(action);
  if (action.noise_cov.isZero(0.0)) throw ConfigError("odometry factors need a positive definite motion covariance");
  const int W = belief.config_.num_weights;
  const int m = belief.num_classes();

  std::set<int> geo_ids, sem_ids;
  for (const auto& g : geo)
    if (!geo_ids.insert(g.object).second) throw InputError("duplicate geometric measurement");
  for (const auto& s : sem) {
    if (!sem_ids.insert(s.object).second) throw InputError("duplicate semantic observation");
    if (static_cast<int>(s.cloud.size()) != W) throw InputError("semantic cloud size differs from |W|");
  }
  if (geo_ids != sem_ids) throw InputError("geometric and semantic measurements must cover the same objects");

  std::vector<int> new_objects;
  for (int o : geo_ids)
    if (!belief.knows(o)) new_objects.push_back(o);
  const int k = belief.step_ + 1;
  const Key xk = robot_key(k);
  std::map<int, const RelPose*> z_of;
  for (const auto& g : geo) z_of[g.object] = &g.z;
  std::vector<int> all_objects = belief.objects_;
  all_objects.insert(all_objects.end(), new_objects.begin(), new_objects.end());

  int branches = 1;
  for (std::size_t i = 0; i < new_objects.size(); ++i) branches *= m;

  for (auto& hb : belief.beliefs_) {
    std::map<ClassRealization, RealizationEntry> next;
    std::map<ClassRealization, double> logw;
    for (auto& [C, entry] : hb.realizations) {
      Graph g = std::move(entry.graph);
      const Pose2 prev = g.pose(robot_key(k - 1));
      const Pose2 pred = compose(prev, action.action);
      g.add_variable(xk, pred.vector());
      g.add_factor(OdometryFactor{robot_key(k - 1), xk, action});
      for (int o : new_objects) g.add_variable(object_key(o), compose(pred, as_pose(*z_of[o])).vector());
      for (const auto& gm : geo) g.add_factor(GeometricFactor{xk, object_key(gm.object), gm.z, belief.config_.geometric_cov});

      for (int b = 0; b < branches; ++b) {
        ClassRealization child = C;
        int code = b;
        for (std::size_t i = 0; i < new_objects.size(); ++i) {
          child.push_back(code % m);
          code /= m;
        }
        Graph cg = (b + 1 == branches) ? std::move(g) : g;
        for (const auto& s : sem) {
          const int idx = static_cast<int>(std::find(all_objects.begin(), all_objects.end(), s.object) - all_objects.begin());
          if (m > 1) cg.add_factor(SemanticFactor{xk, object_key(s.object), child[idx], s.cloud[hb.w], belief.config_.model});
        }
        double le = entry.log_evidence;
        if (!geo.empty()) {
          cg.optimize();
          le = cg.log_evidence();
        }
        logw[child] = std::log(entry.weight) + le - entry.log_evidence;
        next.emplace(child, RealizationEntry{std::move(cg), 0.0, le});
      }
    }
    hb.realizations = std::move(next);
    normalize_log_weights(hb.realizations, logw);
    prune(hb, belief.config_.prune_threshold);
  }
  belief.objects_ = all_objects;
  belief.step_ = k;
}

std::vector<ProbVec> lambda_particles(const MHBelief& belief, int object) {
  const int idx = belief.object_index(object);
  if (idx < 0) throw InputError("unknown object " + std::to_string(object));
  const int m = belief.num_classes();
  std::vector<ProbVec> out;
  for (const auto& hb : belief.beliefs()) {
    ProbVec p = ProbVec::Zero(m);
    for (const auto& [C, e] : hb.realizations) p[C[idx]] += e.weight;
    out.push_back(p / p.sum());
  }
  return out;
}

ProbVec class_posterior(const MHBelief& belief, int object) {
  auto parts = lambda_particles(belief, object);
  ProbVec mean = ProbVec::Zero(belief.num_classes());
  for (const auto& p : parts) mean += p;
  return mean / static_cast<double>(parts.size());
}

std::vector<MixtureComponent> pose_marginal_mixture(const MHBelief& belief, const std::vector<Key>& keys) {
  std::vector<MixtureComponent> out;
  const double W = static_cast<double>(belief.beliefs().size());
  for (const auto& hb : belief.beliefs())
    for (const auto& [C, e] : hb.realizations) out.push_back({e.weight / W, C, hb.w, e.graph.marginal(keys)});
  return out;
}

void prune(HybridBelief& belief, double threshold) {
  if (threshold <= 0.0 || belief.realizations.size() <= 1) return;
  auto best = std::max_element(belief.realizations.begin(), belief.realizations.end(),
                               [](const auto& a, const auto& b) { return a.second.weight < b.second.weight; });
  const ClassRealization keep = best->first;
  for (auto it = belief.realizations.begin(); it != belief.realizations.end();) {
    if (it->second.weight < threshold && it->first != keep)
      it = belief.realizations.erase(it);
    else
      ++it;
  }
  double total = 0.0;
  for (const auto& [c, e] : belief.realizations) total += e.weight;
  for (auto& [c, e] : belief.realizations) e.weight /= total;
}

void prune(MHBelief& belief, double threshold) {
  for (auto& hb : belief.beliefs()) prune(hb, threshold);
}

nlohmann::json snapshot(const MHBelief& belief) {
  nlohmann::json j;
  j["engine"] = belief.config().num_weights == 1 ? "weu" : "mh";
  j["step"] = belief.step();
  j["objects"] = nlohmann::json::array();
  for (int o : belief.objects()) {
    nlohmann::json parts = nlohmann::json::array();
    for (const auto& p : lambda_particles(belief, o)) parts.push_back(std::vector<double>(p.data(), p.data() + p.size()));
    ProbVec post = class_posterior(belief, o);
    j["objects"].push_back({{"id", o}, {"particles", parts}, {"posterior", std::vector<double>(post.data(), post.data() + post.size())}});
  }
  j["weights"] = nlohmann::json::array();
  for (const auto& hb : belief.beliefs()) {
    nlohmann::json reals = nlohmann::json::array();
    for (const auto& [C, e] : hb.realizations) {
      std::vector<int> classes;
      for (int c : C) classes.push_back(c + 1);
      const Pose2 x = e.graph.pose(robot_key(belief.step()));
      reals.push_back({{"classes", classes}, {"weight", e.weight}, {"robot", {x.x, x.y, x.theta}}});
    }
    j["weights"].push_back({{"w", hb.w}, {"realizations", reals}});
  }
  return j;
}

}  // namespace esslam
