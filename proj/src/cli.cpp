#include "esslam/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "esslam/errors.hpp"
#include "esslam/sim.hpp"
#include "esslam/simplex.hpp"

namespace esslam {

namespace fs = std::filesystem;

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

namespace {

struct Manifest {
  std::string command;
  std::string scenario;
  std::string engine = "mh";
  std::string reward;
  std::string family;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  int reps = 1;
  std::optional<int> w;
  std::optional<int> horizon;
  std::optional<int> budget;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("output directory not writable: " + dir.string());
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + p.string());
  return f;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  auto f = open_out(p);
  f << j.dump(2) << "\n";
}

nlohmann::json num_json(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json write_run(const fs::path& dir, const Scenario& s, const RunResult& r, bool planned) {
  ensure_dir(dir);
  {
    auto f = open_out(dir / "msde.csv");
    f << "step,object,msde\n";
    for (const auto& st : r.steps) {
      for (const auto& o : st.objects) f << st.step << "," << o.id << "," << format_number(o.msde) << "\n";
      f << st.step << ",avg," << format_number(st.avg_msde) << "\n";
    }
  }
  {
    auto f = open_out(dir / "entropy.csv");
    f << "step,object,h_lambda\n";
    for (const auto& st : r.steps) {
      for (const auto& o : st.objects) f << st.step << "," << o.id << "," << format_number(o.entropy) << "\n";
      f << st.step << ",sum," << format_number(st.sum_entropy) << "\n";
    }
  }
  {
    auto f = open_out(dir / "timing.csv");
    f << "step,seconds\n";
    for (const auto& st : r.steps) f << st.step << "," << format_number(st.seconds) << "\n";
  }
  const auto& last = r.steps.back();
  nlohmann::json sum;
  sum["scenario"] = s.name;
  sum["engine"] = to_string(r.engine);
  sum["reward"] = r.reward ? nlohmann::json(to_string(r.reward->kind)) : nlohmann::json(nullptr);
  sum["seed"] = s.seed;
  sum["steps"] = s.steps;
  sum["w"] = r.engine == Engine::WEU ? 1 : s.num_weights;
  sum["final_avg_msde"] = num_json(last.avg_msde);
  sum["final_sum_entropy"] = num_json(last.sum_entropy);
  sum["objects"] = nlohmann::json::array();
  for (std::size_t i = 0; i < last.objects.size(); ++i) {
    const auto& o = last.objects[i];
    nlohmann::json post = nlohmann::json::array();
    for (int c = 0; c < o.posterior.size(); ++c) post.push_back(o.posterior[c]);
    sum["objects"].push_back({{"id", o.id}, {"class", s.objects[i].cls + 1}, {"observed", o.observed},
                              {"msde", num_json(o.msde)}, {"entropy", num_json(o.entropy)}, {"posterior", post}});
  }
  write_json(dir / "summary.json", sum);
  if (planned) {
    auto f = open_out(dir / "trajectory.csv");
    f << "step,x,y,theta,action,dx,dy,dtheta\n";
    for (std::size_t k = 0; k < r.truth.size(); ++k) {
      const auto& p = r.truth[k];
      f << k << "," << format_number(p.x) << "," << format_number(p.y) << "," << format_number(p.theta);
      if (k == 0) {
        f << ",,,,\n";
      } else {
        const auto& a = r.applied[k - 1];
        f << "," << r.actions[k - 1] << "," << format_number(a.x) << "," << format_number(a.y) << ","
          << format_number(a.theta) << "\n";
      }
    }
    write_json(dir / "plan_trace.json", r.plan_trace);
  }
  return sum;
}

int cmd_run(const Manifest& m, bool planned) {
  if (m.reps < 1) throw ConfigError("--reps must be at least 1");
  Scenario s = load_scenario(m.scenario);
  if (m.seed) s.seed = *m.seed;
  if (m.w) {
    if (*m.w < 1) throw ConfigError("--w must be at least 1");
    s.num_weights = *m.w;
  }
  const Engine engine = parse_engine(m.engine);
  std::optional<RewardSpec> reward;
  if (planned) {
    PlannerSpec ps = s.planner.value_or(PlannerSpec{});
    if (!m.reward.empty()) ps.reward.kind = parse_reward(m.reward);
    else if (!s.planner) throw ConfigError("plan needs a reward: pass --reward r1|r2 or a scenario planner block");
    if (!m.family.empty()) ps.reward.family = parse_family(m.family);
    if (m.horizon) ps.plan.horizon = *m.horizon;
    if (m.budget) ps.plan.budget = *m.budget;
    if (ps.plan.horizon < 1 || ps.plan.budget < 1) throw ConfigError("horizon and budget must be positive");
    s.planner = ps;
    reward = ps.reward;
    check_compatibility(engine, *reward);
  } else if (!m.family.empty()) {
    s.metric_family = parse_family(m.family);
  }
  const fs::path out(m.out);
  ensure_dir(out);
  if (m.reps == 1) {
    write_run(out, s, run_scenario(s, engine, reward), planned);
    return 0;
  }
  nlohmann::json runs = nlohmann::json::array();
  std::vector<RunResult> results;
  for (int i = 0; i < m.reps; ++i) {
    Scenario si = s;
    si.seed = s.seed + static_cast<std::uint64_t>(i);
    char name[32];
    std::snprintf(name, sizeof name, "rep_%02d", i);
    results.push_back(run_scenario(si, engine, reward));
    runs.push_back(write_run(out / name, si, results.back(), planned));
  }
  {
    auto f = open_out(out / "aggregate.csv");
    f << "step,mean_avg_msde,std_avg_msde,mean_sum_entropy,std_sum_entropy\n";
    for (int k = 0; k < s.steps; ++k) {
      double a = 0, a2 = 0, e = 0, e2 = 0;
      for (const auto& r : results) {
        a += r.steps[k].avg_msde;
        a2 += r.steps[k].avg_msde * r.steps[k].avg_msde;
        e += r.steps[k].sum_entropy;
        e2 += r.steps[k].sum_entropy * r.steps[k].sum_entropy;
      }
      const double n = static_cast<double>(results.size());
      auto sd = [n](double s1, double s2) { return std::sqrt(std::max(0.0, (s2 - s1 * s1 / n) / (n - 1))); };
      f << k + 1 << "," << format_number(a / n) << "," << format_number(sd(a, a2)) << "," << format_number(e / n)
        << "," << format_number(sd(e, e2)) << "\n";
    }
  }
  double mean_msde = 0, mean_h = 0;
  for (const auto& r : results) {
    mean_msde += r.steps.back().avg_msde;
    mean_h += r.steps.back().sum_entropy;
  }
  nlohmann::json agg;
  agg["engine"] = to_string(engine);
  agg["reward"] = reward ? nlohmann::json(to_string(reward->kind)) : nlohmann::json(nullptr);
  agg["reps"] = m.reps;
  agg["base_seed"] = s.seed;
  agg["mean_final_avg_msde"] = num_json(mean_msde / m.reps);
  agg["mean_final_sum_entropy"] = num_json(mean_h / m.reps);
  agg["runs"] = runs;
  write_json(out / "summary.json", agg);
  return 0;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_bench_entropy(const Manifest& m) {
  if (m.reps < 1) throw ConfigError("--reps must be at least 1");
  const std::uint64_t seed = m.seed.value_or(1);
  const int n_vectors = 1000, n_mc = 10000;
  const fs::path out(m.out);
  ensure_dir(out);
  auto fe = open_out(out / "bench_entropy.csv");
  auto ft = open_out(out / "bench_timing.csv");
  fe << "m,rep,dirichlet,lg_numeric,lg_numeric_se,lg_upper,lg_lower,sandwich_ok\n";
  ft << "m,rep,dirichlet_fit_s,dirichlet_entropy_s,lg_fit_s,lg_numeric_s,lg_bounds_s\n";
  for (int mc = 2; mc <= 10; ++mc) {
    for (int rep = 0; rep < m.reps; ++rep) {
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(mc), static_cast<std::uint64_t>(rep)}));
      std::uniform_real_distribution<double> umean(-3.0, 3.0), uvar(0.1, 2.0);
      GaussianParams truth;
      truth.mean.resize(mc - 1);
      for (int i = 0; i < mc - 1; ++i) truth.mean[i] = umean(rng);
      Eigen::MatrixXd a(mc - 1, mc - 1);
      for (int i = 0; i < a.size(); ++i) a.data()[i] = standard_normal(1, rng)[0];
      truth.cov = 0.3 * a * a.transpose() / (mc - 1);
      for (int i = 0; i < mc - 1; ++i) truth.cov(i, i) += uvar(rng);
      std::vector<LogitVec> logits;
      std::vector<ProbVec> probs;
      for (int i = 0; i < n_vectors; ++i) {
        logits.push_back(sample_gaussian(truth, rng));
        probs.push_back(inv_logit(logits.back()));
      }
      auto t0 = std::chrono::steady_clock::now();
      const DirichletParams dir = dirichlet_fit(probs);
      const double t_dfit = seconds_since(t0);
      t0 = std::chrono::steady_clock::now();
      const double h_dir = dirichlet_entropy(dir);
      const double t_dent = seconds_since(t0);
      t0 = std::chrono::steady_clock::now();
      const GaussianParams lg = gaussian_fit(logits);
      const double t_gfit = seconds_since(t0);
      t0 = std::chrono::steady_clock::now();
      const McEstimate num = lg_entropy_numeric(lg, n_mc, rng);
      const double t_num = seconds_since(t0);
      t0 = std::chrono::steady_clock::now();
      const double ub = lg_entropy_upper(lg);
      const double lb = lg_entropy_lower(lg);
      const double t_bounds = seconds_since(t0);
      const bool ok = lb - 3.0 * num.std_error <= num.value && num.value <= ub + 3.0 * num.std_error;
      fe << mc << "," << rep << "," << format_number(h_dir) << "," << format_number(num.value) << ","
         << format_number(num.std_error) << "," << format_number(ub) << "," << format_number(lb) << ","
         << (ok ? 1 : 0) << "\n";
      ft << mc << "," << rep << "," << format_number(t_dfit) << "," << format_number(t_dent) << ","
         << format_number(t_gfit) << "," << format_number(t_num) << "," << format_number(t_bounds) << "\n";
    }
  }
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Epistemic-uncertainty-aware semantic SLAM simulator"};
  app.require_subcommand(1);
  Manifest m;
  std::uint64_t seed = 0;
  int w = 0, horizon = 0, budget = 0;
  auto add_common = [&](CLI::App* sub, bool scenario) {
    if (scenario) {
      sub->add_option("--scenario", m.scenario, "scenario JSON file")->required();
      sub->add_option("--engine", m.engine, "mh|jlp|weu");
      sub->add_option("--reward", m.reward, "r1|r2");
      sub->add_option("--family", m.family, "dir|lg|lg-ub|lg-lb");
      sub->add_option("--w", w, "classifier cloud size |W|");
      sub->add_option("--horizon", horizon, "planning horizon L");
      sub->add_option("--budget", budget, "MCTS iterations per decision");
    }
    sub->add_option("--out", m.out, "output directory");
    sub->add_option("--seed", seed, "seed override");
    sub->add_option("--reps", m.reps, "number of seed-derived repetitions");
  };
  auto* infer = app.add_subcommand("infer", "run inference along the scripted trajectory");
  auto* plan = app.add_subcommand("plan", "run closed-loop planning");
  auto* bench = app.add_subcommand("bench-entropy", "compare Dirichlet and logistic-Gaussian entropy estimators");
  add_common(infer, true);
  add_common(plan, true);
  add_common(bench, false);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    for (auto* sub : {infer, plan, bench}) {
      if (sub->count("--seed")) m.seed = seed;
      if (sub != bench) {
        if (sub->count("--w")) m.w = w;
        if (sub->count("--horizon")) m.horizon = horizon;
        if (sub->count("--budget")) m.budget = budget;
      }
    }
    if (*infer) return cmd_run(m, false);
    if (*plan) return cmd_run(m, true);
    return cmd_bench_entropy(m);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace esslam
