#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "area/errors.hpp"
#include "area/experiment.hpp"

using namespace area;
namespace fs = std::filesystem;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_solver = 3;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
};

struct Run {
  ExperimentConfig cfg;
  std::string config_path;
  std::string dir;
  Manifest manifest;
};

Run prepare(const Globals& g, const std::string& command, const std::string& fallback_config = "") {
  Run r;
  r.config_path = g.config.empty() ? fallback_config : g.config;
  if (r.config_path.empty()) throw ConfigError("--config", "required for " + command);
  r.cfg = load_config(r.config_path);
  if (g.seed) r.cfg.seed = *g.seed;
  r.dir = g.out.empty() ? r.cfg.output_dir : g.out;
  if (g.threads < 1) throw ConfigError("--threads", "must be >= 1");
  fs::create_directories(r.dir);
  r.manifest.command = command;
  r.manifest.config_path = r.config_path;
  r.manifest.config_hash = config_hash(r.cfg.source);
  r.manifest.seed = r.cfg.seed;
  r.manifest.threads = g.threads;
  return r;
}

std::string in(const Run& r, const std::string& name) { return (fs::path(r.dir) / name).string(); }

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

StructuredPolicy initial_policy(const Run& r, const std::string& policy_path) {
  if (policy_path.empty()) return StructuredPolicy::uniform(r.cfg.spec);
  std::ifstream f(policy_path);
  if (!f) throw ConfigError("--policy", "cannot read " + policy_path);
  auto q = structured_policy_from_json(nlohmann::json::parse(f));
  if (!(q.spec() == r.cfg.spec)) throw ConfigError("--policy", "policy spec differs from the config spec");
  return q;
}

ConstraintSet constraints_under(const Run& r, const StructuredPolicy& q, const MomentSource& src) {
  std::vector<const Feature*> feats;
  for (const auto& f : r.cfg.features) feats.push_back(&f);
  const auto targets = src.acquire(q, feats, 0);
  std::vector<Constraint> eq;
  for (std::size_t i = 0; i < feats.size(); ++i) eq.push_back({r.cfg.features[i], targets[i]});
  return build_constraint_set(std::move(eq), r.cfg.inequality, r.cfg.reward.as_feature().id);
}

nlohmann::json estimate_summary(const Estimate<StructuredModel>& e, const ConstraintSet& c) {
  nlohmann::json cons = nlohmann::json::array();
  for (std::size_t i = 0; i < c.size(); ++i)
    cons.push_back({{"id", c[i].feature.id},
                    {"kind", i < c.equality.size() ? "equality" : "inequality"},
                    {"target", c[i].target},
                    {"model_moment", e.moments[i]},
                    {"multiplier", e.lambda.flat()[i]}});
  return {{"status", to_string(e.status)}, {"iterations", e.iterations},    {"dual_objective", e.objective},
          {"residual_max", e.residual_max},  {"causal_entropy", e.causal_entropy}, {"duality_gap", e.duality_gap},
          {"constraints", cons},             {"warnings", c.warnings}};
}

int cmd_estimate(const Globals& g, const std::string& policy_path, bool optimize) {
  auto r = prepare(g, optimize ? "optimize" : "estimate");
  const auto q = initial_policy(r, policy_path);
  const auto src = make_source(r.cfg, r.cfg.seed, g.threads);
  const auto cs = constraints_under(r, q, src);
  auto opts = r.cfg.estimation;
  opts.trace_path = in(r, "solver_trace.csv");
  const auto est = estimate_human(q, cs, opts);
  auto summary = estimate_summary(est, cs);
  r.manifest.artifacts = {"solver_trace.csv"};
  if (optimize) {
    const auto y = backward_y_structured(est.model, r.cfg.reward, r.cfg.gamma);
    const auto next = extract_policy(y);
    const auto L = regularized_reward_L(est.model, next, r.cfg.reward, r.cfg.gamma);
    summary["log_partition"] = log_partition(y);
    summary["objective"] = L.value;
    summary["entropy_machine"] = L.entropy_machine;
    summary["expected_reward"] = L.expected_reward;
    write_json(in(r, "policy.json"), to_json(next));
    r.manifest.artifacts.push_back("policy.json");
  }
  const auto name = optimize ? "optimize.json" : "estimate.json";
  write_json(in(r, name), summary);
  r.manifest.artifacts.push_back(name);
  write_manifest(r.dir, r.manifest);
  std::cout << (optimize ? "optimize" : "estimate") << ": " << to_string(est.status) << " after " << est.iterations
            << " iterations, residual " << est.residual_max << "\n";
  return est.status == SolveStatus::converged ? exit_ok : exit_solver;
}

int cmd_area(const Globals& g) {
  auto r = prepare(g, "area");
  const auto src = make_source(r.cfg, r.cfg.seed, g.threads);
  const auto trace = run_area(make_problem(r.cfg), src, make_area_options(r.cfg));
  write_area_csv(in(r, "area_trace.csv"), trace.rows);
  write_json(in(r, "area_trace.json"), to_json(trace));
  write_json(in(r, "final_policy.json"), to_json(trace.final_policy));
  r.manifest.artifacts = {"area_trace.csv", "area_trace.json", "final_policy.json"};
  write_manifest(r.dir, r.manifest);
  for (const auto& row : trace.rows)
    std::cout << "iter " << row.iter << "  L " << row.L << "  residual " << row.moment_residual_max << "  delta "
              << row.policy_delta << (row.step_infeasible ? "  (step constraint infeasible)" : "") << "\n";
  std::cout << (trace.converged ? "converged at iteration " + std::to_string(trace.converged_at) : "not converged")
            << "\n";
  const bool solver_ok = trace.rows.empty() || trace.rows.back().status == SolveStatus::converged;
  return solver_ok ? exit_ok : exit_solver;
}

int cmd_simulate(const Globals& g, std::size_t count, const std::string& policy_path) {
  auto r = prepare(g, "simulate");
  const auto q = initial_policy(r, policy_path);
  const LcaHuman human(r.cfg.spec, r.cfg.lca);
  if (count == 0) count = r.cfg.moments.samples_per_iteration;
  const auto batch = sample_interactions(q, human, count, r.cfg.seed, g.threads);
  write_batch_csv(in(r, "batch.csv"), batch);
  r.manifest.artifacts = {"batch.csv"};
  r.manifest.extra["count"] = count;
  write_manifest(r.dir, r.manifest);
  std::cout << "simulate: " << count << " trajectories\n";
  return exit_ok;
}

int cmd_qlearn(const Globals& g, int episodes) {
  auto r = prepare(g, "qlearn");
  if (episodes <= 0) episodes = r.cfg.comparison.episodes;
  const auto run = run_qlearning(r.cfg.reward, r.cfg.lca, r.cfg.qlearning, episodes, r.cfg.seed);
  write_qlearning_csv(in(r, "qlearning_trace.csv"), run.episodes);
  r.manifest.artifacts = {"qlearning_trace.csv"};
  r.manifest.extra["episodes"] = episodes;
  write_manifest(r.dir, r.manifest);
  if (!run.episodes.empty())
    std::cout << "qlearn: avg reward " << run.episodes.back().avg_reward << ", entropy estimate "
              << run.episodes.back().entropy_estimate << "\n";
  return exit_ok;
}

int cmd_convergence(const Globals& g) {
  auto r = prepare(g, "reproduce-convergence", AREA_CONFIG_DIR "/convergence.json");
  const auto series = reproduce_convergence(r.cfg, g.threads);
  write_convergence_csv(in(r, "convergence.csv"), series);
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : series)
    summary.push_back({{"series", s.label},
                       {"replicate", s.replicate},
                       {"converged_at", s.trace.converged_at},
                       {"mean_abs_step", mean_abs_step(s.trace)}});
  r.manifest.artifacts = {"convergence.csv"};
  r.manifest.extra["series"] = summary;
  write_manifest(r.dir, r.manifest);
  for (const auto& s : series)
    std::cout << s.label << " #" << s.replicate << ": converged_at " << s.trace.converged_at << ", mean |dL| "
              << mean_abs_step(s.trace) << "\n";
  return exit_ok;
}

int cmd_comparison(const Globals& g) {
  auto r = prepare(g, "reproduce-comparison", AREA_CONFIG_DIR "/comparison.json");
  const auto res = reproduce_comparison(r.cfg, g.threads);
  write_comparison_csv(in(r, "comparison.csv"), res);
  r.manifest.artifacts = {"comparison.csv"};
  r.manifest.extra["rounds"] = r.cfg.rounds;
  write_manifest(r.dir, r.manifest);
  const auto last = static_cast<std::size_t>(r.cfg.comparison.samples_per_iteration * r.cfg.comparison.iterations);
  for (const char* m : {"area", "qlearning"}) {
    const auto& p = res.at(last, m);
    std::cout << m << " at " << last << " samples: reward " << p.reward.mean << " [" << p.reward.low << ", "
              << p.reward.high << "], entropy " << p.entropy.mean << "\n";
  }
  return exit_ok;
}

int cmd_scaling(const Globals& g) {
  ScalingConfig sc;
  Run r;
  if (!g.config.empty()) {
    r = prepare(g, "bench-scaling");
    sc = r.cfg.scaling;
  } else {
    r.dir = g.out.empty() ? "out/scaling" : g.out;
    fs::create_directories(r.dir);
    r.manifest.command = "bench-scaling";
    r.manifest.seed = g.seed.value_or(0);
    r.manifest.threads = g.threads;
  }
  const auto res = bench_scaling(sc);
  write_scaling_csv(in(r, "scaling.csv"), res);
  r.manifest.artifacts = {"scaling.csv"};
  r.manifest.extra = {{"dual_exponent", res.dual_exponent},
                      {"machine_exponent", res.machine_exponent},
                      {"dense_refused", res.dense_refused}};
  write_manifest(r.dir, r.manifest);
  for (const auto& row : res.rows)
    std::cout << "T=" << row.horizon << "  dual " << row.dual_update_ms << " ms  machine " << row.machine_opt_ms
              << " ms  entries " << row.peak_model_entries << "\n";
  std::cout << "log-log exponent: dual " << res.dual_exponent << ", machine " << res.machine_exponent << "\n";
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Alternating reward-entropy ascent: estimation, optimization and experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "Experiment config (JSON)");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed, overrides the config");
  app.add_option("--out", g.out, "Output directory, overrides the config");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string policy;
  std::size_t count = 0;
  int episodes = 0;
  auto* estimate = app.add_subcommand("estimate", "Fit the human model under a policy");
  estimate->add_option("--policy", policy, "Machine policy JSON (default uniform)");
  auto* optimize = app.add_subcommand("optimize", "Fit the human model, then optimize the machine policy");
  optimize->add_option("--policy", policy, "Machine policy JSON (default uniform)");
  auto* area_cmd = app.add_subcommand("area", "Run the alternation");
  auto* simulate = app.add_subcommand("simulate", "Sample interactions with the synthetic human");
  simulate->add_option("--count", count, "Trajectories (default: moments.samples_per_iteration)");
  simulate->add_option("--policy", policy, "Machine policy JSON (default uniform)");
  auto* qlearn = app.add_subcommand("qlearn", "Run the Q-learning baseline");
  qlearn->add_option("--episodes", episodes, "Episodes (default: comparison.episodes)");
  auto* conv = app.add_subcommand("reproduce-convergence", "L series for exact and sampled moments");
  auto* comp = app.add_subcommand("reproduce-comparison", "AREA vs Q-learning reward and entropy");
  auto* scaling = app.add_subcommand("bench-scaling", "Timing and storage over horizons");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_config;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (*estimate) return cmd_estimate(g, policy, false);
    if (*optimize) return cmd_estimate(g, policy, true);
    if (*area_cmd) return cmd_area(g);
    if (*simulate) return cmd_simulate(g, count, policy);
    if (*qlearn) return cmd_qlearn(g, episodes);
    if (*conv) return cmd_convergence(g);
    if (*comp) return cmd_comparison(g);
    if (*scaling) return cmd_scaling(g);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_ok;
}
