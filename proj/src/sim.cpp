#include "esslam/sim.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "esslam/errors.hpp"
#include "esslam/inference_jlp.hpp"

namespace esslam {

namespace {

constexpr std::uint64_t kMotionStream = 1, kObjectStream = 2, kPlanStream = 3, kMetricStream = 4;

Pose2 json_pose(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("poses are [x, y, theta] arrays");
  return {j[0].get<double>(), j[1].get<double>(), normalize_angle(j[2].get<double>())};
}

Eigen::Vector3d json_vec3(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json pose_json(const Pose2& p) { return {p.x, p.y, p.theta}; }

ModelPtr resolve_model(const std::string& id, const std::string& base_dir) {
  if (id == "model-1") return std::make_shared<ClassifierModel>(ClassifierModel::model1());
  if (id == "model-2") return std::make_shared<ClassifierModel>(ClassifierModel::model2());
  std::filesystem::path p(id);
  if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
  return std::make_shared<ClassifierModel>(load_model(p.string()));
}

}  // namespace

Scenario scenario_from_json(const nlohmann::json& j, const std::string& base_dir) {
  Scenario s;
  try {
    s.name = j.value("name", s.name);
    s.num_classes = j.value("classes", s.num_classes);
    s.model_id = j.value("model", s.model_id);
    s.model = resolve_model(s.model_id, base_dir);
    if (s.model->num_classes() != s.num_classes) throw ConfigError("scenario class count differs from the model's");
    if (j.contains("start")) s.start = json_pose(j["start"]);
    for (const auto& o : j.at("objects")) {
      ObjectSpec spec{o.at("id").get<int>(), json_pose(o.at("pose")), o.at("class").get<int>() - 1};
      if (spec.cls < 0 || spec.cls >= s.num_classes) throw ConfigError("object class out of range");
      for (const auto& other : s.objects)
        if (other.id == spec.id) throw ConfigError("duplicate object id " + std::to_string(spec.id));
      s.objects.push_back(spec);
    }
    if (j.contains("sensor")) {
      s.sensor.max_range = j["sensor"].value("max_range", s.sensor.max_range);
      if (j["sensor"].contains("half_angle_deg"))
        s.sensor.half_angle = j["sensor"]["half_angle_deg"].get<double>() * std::numbers::pi / 180.0;
    }
    validate(s.sensor);
    if (j.contains("motion_sigma")) s.motion_sigma = json_vec3(j["motion_sigma"]);
    if (j.contains("geometric_sigma")) s.geometric_sigma = json_vec3(j["geometric_sigma"]);
    if (j.contains("prior_sigma")) s.prior_sigma = json_vec3(j["prior_sigma"]);
    if ((s.motion_sigma.array() <= 0.0).any() || (s.geometric_sigma.array() <= 0.0).any() ||
        (s.prior_sigma.array() <= 0.0).any())
      throw ConfigError("noise sigmas must be positive");
    s.num_weights = j.value("weights", s.num_weights);
    s.steps = j.value("steps", s.steps);
    s.seed = j.value("seed", s.seed);
    if (s.num_weights < 1) throw ConfigError("weights must be at least 1");
    if (s.steps < 1) throw ConfigError("steps must be at least 1");
    if (j.contains("primitives")) {
      s.primitives.clear();
      for (const auto& p : j["primitives"]) s.primitives.push_back(json_pose(p));
      if (s.primitives.empty()) throw ConfigError("primitive set must be nonempty");
    }
    if (j.contains("trajectory")) {
      const auto& t = j["trajectory"];
      if (t.is_object() && t.contains("repeat")) {
        s.trajectory.assign(s.steps, json_pose(t["repeat"]));
      } else {
        for (const auto& a : t) s.trajectory.push_back(json_pose(a));
      }
    }
    if (j.contains("planner")) {
      PlannerSpec ps;
      const auto& p = j["planner"];
      ps.reward.kind = parse_reward(p.value("reward", std::string("r1")));
      ps.reward.family = parse_family(p.value("family", std::string("dir")));
      if (p.contains("r_max") && !p["r_max"].is_null()) ps.reward.r_max = p["r_max"].get<double>();
      ps.reward.n_mc = p.value("n_mc", ps.reward.n_mc);
      ps.plan.horizon = p.value("horizon", ps.plan.horizon);
      ps.plan.budget = p.value("budget", ps.plan.budget);
      ps.plan.n_samples = p.value("samples", ps.plan.n_samples);
      ps.plan.exploration_c = p.value("exploration", ps.plan.exploration_c);
      s.planner = ps;
    }
    s.lambda_prior_var = j.value("lambda_prior_var", s.lambda_prior_var);
    s.prune_threshold = j.value("prune_threshold", s.prune_threshold);
    s.n_mc = j.value("n_mc", s.n_mc);
    if (j.contains("metric_family")) s.metric_family = parse_family(j["metric_family"].get<std::string>());
    s.weu_mean = j.value("weu_input", std::string("first")) == "mean";
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
  if (s.n_mc < 100) throw ConfigError("n_mc must be at least 100");
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse scenario file " + path + ": " + e.what());
  }
  return scenario_from_json(j, std::filesystem::path(path).parent_path().string());
}

nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["classes"] = s.num_classes;
  j["model"] = s.model_id;
  j["start"] = pose_json(s.start);
  for (const auto& o : s.objects) j["objects"].push_back({{"id", o.id}, {"pose", pose_json(o.pose)}, {"class", o.cls + 1}});
  j["sensor"] = {{"max_range", s.sensor.max_range}, {"half_angle_deg", s.sensor.half_angle * 180.0 / std::numbers::pi}};
  j["motion_sigma"] = {s.motion_sigma[0], s.motion_sigma[1], s.motion_sigma[2]};
  j["geometric_sigma"] = {s.geometric_sigma[0], s.geometric_sigma[1], s.geometric_sigma[2]};
  j["prior_sigma"] = {s.prior_sigma[0], s.prior_sigma[1], s.prior_sigma[2]};
  j["weights"] = s.num_weights;
  j["steps"] = s.steps;
  j["seed"] = s.seed;
  for (const auto& a : s.trajectory) j["trajectory"].push_back(pose_json(a));
  for (const auto& a : s.primitives) j["primitives"].push_back(pose_json(a));
  j["lambda_prior_var"] = s.lambda_prior_var;
  j["prune_threshold"] = s.prune_threshold;
  j["n_mc"] = s.n_mc;
  if (s.metric_family) j["metric_family"] = to_string(*s.metric_family);
  j["weu_input"] = s.weu_mean ? "mean" : "first";
  if (s.planner) {
    const auto& p = *s.planner;
    j["planner"] = {{"reward", to_string(p.reward.kind)}, {"family", to_string(p.reward.family)},
                    {"horizon", p.plan.horizon}, {"budget", p.plan.budget}, {"samples", p.plan.n_samples},
                    {"exploration", p.plan.exploration_c}, {"n_mc", p.reward.n_mc}};
    j["planner"]["r_max"] = std::isfinite(p.reward.r_max) ? nlohmann::json(p.reward.r_max) : nlohmann::json(nullptr);
  }
  return j;
}

Scenario random_layout(const Scenario& base, int n_objects, std::uint64_t layout_seed) {
  Scenario s = base;
  Rng rng(derive_seed(layout_seed, {0x6c61796fULL}));
  std::uniform_real_distribution<double> ux(3.0, 22.0), uy(1.0, 4.0), uth(-std::numbers::pi, std::numbers::pi);
  std::uniform_int_distribution<int> uc(0, base.num_classes - 1);
  std::bernoulli_distribution side(0.5);
  s.objects.clear();
  for (int i = 0; i < n_objects; ++i) {
    ObjectSpec o;
    o.id = i + 1;
    o.pose.x = ux(rng);
    o.pose.y = (side(rng) ? 1.0 : -1.0) * uy(rng);
    o.pose.theta = normalize_angle(uth(rng));
    o.cls = uc(rng);
    s.objects.push_back(o);
  }
  s.name = base.name + "_layout" + std::to_string(layout_seed);
  return s;
}

WorldStep step_world(const Scenario& scenario, const Pose2& state, const Pose2& action, int step) {
  WorldStep out;
  Rng motion_rng(derive_seed(scenario.seed, {kMotionStream, static_cast<std::uint64_t>(step)}));
  out.truth = sample_motion(state, MotionSpec{action, scenario.motion_cov()}, motion_rng);
  const Eigen::Matrix3d Lg = scenario.geometric_cov().llt().matrixL();
  for (const auto& o : scenario.objects) {
    if (!in_fov(out.truth, o.pose, scenario.sensor)) continue;
    Rng rng(derive_seed(scenario.seed, {kObjectStream, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(o.id)}));
    const RelPose rel = between(out.truth, o.pose);
    const Eigen::Vector3d n = Lg * standard_normal(3, rng);
    out.geo.push_back({o.id, RelPose{rel.dx + n[0], rel.dy + n[1], normalize_angle(rel.dpsi + n[2])}});
    out.clouds.push_back({o.id, sample_cloud(*scenario.model, o.cls, rel, scenario.num_weights, rng)});
  }
  return out;
}

double msde(const ProbVec& posterior, int true_class) {
  const int m = static_cast<int>(posterior.size());
  double s = 0.0;
  for (int i = 0; i < m; ++i) {
    const double gt = i == true_class ? 1.0 : 0.0;
    s += (gt - posterior[i]) * (gt - posterior[i]);
  }
  return s / m;
}

RunResult run_scenario(const Scenario& scenario, Engine engine, const std::optional<RewardSpec>& reward) {
  if (!scenario.model) throw ConfigError("scenario has no classifier model");
  const int m = scenario.num_classes;
  if (reward) check_compatibility(engine, *reward);
  if (!reward && static_cast<int>(scenario.trajectory.size()) < scenario.steps)
    throw ConfigError("scenario trajectory is shorter than the step count and no planner is given");
  if (engine == Engine::JLP && scenario.num_weights < 2)
    throw ConfigError("JLP needs clouds of at least 2 members to fit E(l gamma), Sigma(l gamma)");

  const MotionSpec motion{Pose2{}, scenario.motion_cov()};
  std::optional<MHBelief> mh;
  std::optional<JLPBelief> jlp;
  if (engine == Engine::JLP) {
    JLPConfig cfg;
    cfg.model = scenario.model;
    cfg.prior_cov = scenario.prior_cov();
    cfg.geometric_cov = scenario.geometric_cov();
    cfg.lambda_prior_var = scenario.lambda_prior_var;
    jlp.emplace(cfg, scenario.start);
  } else {
    MHConfig cfg;
    cfg.model = scenario.model;
    cfg.num_weights = engine == Engine::WEU ? 1 : scenario.num_weights;
    cfg.prior_cov = scenario.prior_cov();
    cfg.geometric_cov = scenario.geometric_cov();
    cfg.prune_threshold = scenario.prune_threshold;
    mh.emplace(cfg, scenario.start);
  }

  LambdaFamily metric_family = engine == Engine::JLP ? LambdaFamily::LogisticGaussian : LambdaFamily::Dirichlet;
  if (reward && reward->kind == RewardKind::R1) metric_family = reward->family;
  if (scenario.metric_family) metric_family = *scenario.metric_family;
  if (engine == Engine::JLP && metric_family == LambdaFamily::Dirichlet)
    throw ConfigError("JLP is limited to the logistic-Gaussian family (lg|lg-ub|lg-lb)");

  PlanningProblem problem;
  if (reward) {
    problem.primitives = scenario.primitives;
    problem.sensor = scenario.sensor;
    problem.motion_cov = scenario.motion_cov();
    problem.reward = *reward;
    if (scenario.planner) problem.config = scenario.planner->plan;
  }

  RunResult res;
  res.engine = engine;
  res.reward = reward;
  Pose2 truth = scenario.start;
  res.truth.push_back(truth);
  for (int k = 1; k <= scenario.steps; ++k) {
    Pose2 action;
    int action_index = -1;
    if (reward) {
      PlanningProblem p = problem;
      p.config.seed = derive_seed(scenario.seed, {kPlanStream, static_cast<std::uint64_t>(k)});
      PlanResult pr = engine == Engine::JLP ? mcts_plan(jlp->condensed(), p) : mcts_plan(mh->condensed(), p);
      action_index = pr.best;
      action = scenario.primitives[pr.best];
      nlohmann::json t = pr.to_json();
      t["step"] = k;
      res.plan_trace.push_back(t);
    } else {
      action = scenario.trajectory[k - 1];
    }
    WorldStep ws = step_world(scenario, truth, action, k);
    truth = ws.truth;
    res.truth.push_back(truth);
    res.actions.push_back(action_index);
    res.applied.push_back(action);

    MotionSpec ms = motion;
    ms.action = action;
    const auto t0 = std::chrono::steady_clock::now();
    if (engine == Engine::MH) {
      mh_update(*mh, ws.geo, ws.clouds, ms);
    } else if (engine == Engine::WEU) {
      std::vector<SemanticObservation> single;
      for (const auto& c : ws.clouds) {
        LogitVec v = c.cloud.front();
        if (scenario.weu_mean) {
          v = LogitVec::Zero(c.cloud.front().size());
          for (const auto& x : c.cloud) v += x;
          v /= static_cast<double>(c.cloud.size());
        }
        single.push_back({c.object, {v}});
      }
      mh_update(*mh, ws.geo, single, ms);
    } else {
      std::vector<SemanticStats> stats;
      for (const auto& c : ws.clouds) stats.push_back({c.object, gaussian_fit(c.cloud)});
      jlp_update(*jlp, ws.geo, stats, ms);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    StepMetrics sm;
    sm.step = k;
    sm.seconds = secs;
    std::map<int, GaussianParams> lam;
    if (engine == Engine::JLP) lam = lambda_posteriors(*jlp);
    for (const auto& o : scenario.objects) {
      ObjectMetrics om;
      om.id = o.id;
      Rng rng(derive_seed(scenario.seed, {kMetricStream, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(o.id)}));
      om.observed = engine == Engine::JLP ? jlp->knows(o.id) : mh->knows(o.id);
      om.posterior = ProbVec::Constant(m, 1.0 / m);
      om.entropy = std::numeric_limits<double>::quiet_NaN();
      if (om.observed) {
        if (engine == Engine::JLP) {
          if (m > 1) {
            om.posterior = class_posterior_jlp(lam.at(o.id), scenario.n_mc, rng);
            om.entropy = lambda_entropy(lam.at(o.id), metric_family, scenario.n_mc, rng);
          }
        } else {
          om.posterior = class_posterior(*mh, o.id);
          if (engine == Engine::MH && m > 1)
            om.entropy = lambda_entropy(lambda_particles(*mh, o.id), metric_family, scenario.n_mc, rng);
        }
      }
      om.msde = msde(om.posterior, o.cls);
      sm.avg_msde += om.msde;
      if (om.observed) sm.sum_entropy += om.entropy;
      sm.objects.push_back(om);
    }
    if (!scenario.objects.empty()) sm.avg_msde /= static_cast<double>(scenario.objects.size());
    res.steps.push_back(sm);
  }
  return res;
}

}  // namespace esslam
