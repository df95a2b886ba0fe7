#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "area/features.hpp"
#include "area/human.hpp"
#include "area/machine_opt.hpp"
#include "area/maxent.hpp"
#include "area/structured.hpp"

namespace area {

// Inequality -log Q(m^T || h^T) + gamma r >= threshold built from the
// current policy and the Y tables that produced it.
struct StepConstraint {
  Feature feature;
  double threshold = 0.0;
  // Some machine action had probability zero; its term was dropped, so the
  // feature matches -log Q + gamma r only where Q > 0.
  bool restricted = false;
};

StepConstraint step_constraint(const StructuredPolicy& q, const StructuredYTables& y, const RewardFunction& r,
                               double gamma, const std::string& id = "step");

// E[-log Q + gamma r] under (p, q): machine causal entropy plus gamma times
// the expected reward.
struct RegularizedReward {
  double value = 0.0;
  double entropy_machine = 0.0;
  double expected_reward = 0.0;
};
RegularizedReward regularized_reward_L(const StructuredModel& p, const StructuredPolicy& q, const RewardFunction& r,
                                       double gamma);
double regularized_reward_L(const CausalTable& p, const CausalTable& q, const RewardFunction& r, double gamma);

struct MomentSource {
  enum class Kind { exact, sampled };
  Kind kind = Kind::exact;
  std::shared_ptr<const Human> human;
  std::size_t sample_size = 0;
  std::uint64_t seed = 0;
  int threads = 1;
  // Sees every sampled batch with its iteration index.
  std::function<void(int, const SampleBatch&)> on_batch{};

  // Targets for `features` under policy q at iteration n. Sampled sources
  // draw a fresh batch per iteration.
  std::vector<double> acquire(const StructuredPolicy& q, const std::vector<const Feature*>& features, int n) const;
};

struct AreaOptions {
  double gamma = 1.0;
  int iterations = 10;
  bool use_step_constraint = true;
  EstimationOptions estimation;
  double policy_tol = 1e-8;
  double objective_tol = 1e-6;
  bool keep_policies = false;
};

struct AreaRow {
  int iter = 0;
  double L = 0.0;
  double entropy_machine = 0.0;
  double expected_reward = 0.0;
  double moment_residual_max = 0.0;
  double policy_delta = 0.0;
  double wall_ms = 0.0;
  SolveStatus status = SolveStatus::converged;
  int solver_iterations = 0;
  bool step_constraint = false;
  bool step_restricted = false;
  // E[step feature] - threshold under the unconstrained fit.
  double step_slack = 0.0;
  // Re-solved with the step constraint binding.
  bool step_active = false;
  // The constrained problem did not converge; the unconstrained fit was kept.
  bool step_infeasible = false;
};

struct AreaState {
  int n = 0;
  StructuredPolicy policy;
  std::optional<StructuredModel> human;
  // Tables that produced `policy`; empty for the initial policy.
  std::optional<StructuredYTables> y;
  DualVars lambda;
  double L = 0.0;
  std::vector<AreaRow> history;
  bool converged = false;
  int converged_at = -1;
  int small_steps = 0;
  std::vector<StructuredPolicy> policies;

  static AreaState initial(StructuredPolicy q0);
};

// Equality features take their targets from the moment source; inequality
// constraints keep their configured thresholds.
struct AreaProblem {
  ProcessSpec spec;
  std::vector<Feature> equality;
  std::vector<Constraint> inequality;
  RewardFunction reward;
};

// One pass: moments under the current policy, human estimation, machine
// optimization.
void area_step(AreaState& state, const AreaProblem& problem, const MomentSource& src, const AreaOptions& opts);

struct AreaTrace {
  std::vector<AreaRow> rows;
  std::vector<StructuredPolicy> policies;  // Q^(0), Q^(1), ... when kept
  StructuredPolicy final_policy;
  std::optional<StructuredModel> final_human;
  bool converged = false;
  int converged_at = -1;
};

AreaTrace run_area(const AreaProblem& problem, const MomentSource& src, const AreaOptions& opts,
                   std::optional<StructuredPolicy> initial = std::nullopt);

void write_area_csv(const std::string& path, const std::vector<AreaRow>& rows);
nlohmann::json to_json(const AreaTrace& trace);

}  // namespace area
