#include "area/area_loop.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace area {

StepConstraint step_constraint(const StructuredPolicy& q, const StructuredYTables& y, const RewardFunction& r,
                               double gamma, const std::string& id) {
  if (!q.product_form()) throw std::invalid_argument("step constraint needs a product-form policy off the tree");
  const auto& spec = q.spec();
  const int T = spec.horizon, H = spec.human_actions, M = spec.machine_actions;
  StepConstraint out;
  const auto neg_log = [&](double p, double fallback) {
    if (p > 0.0) return -std::log(p);
    out.restricted = true;
    return fallback;
  };

  std::vector<double> base(static_cast<std::size_t>(T) * M);
  for (int k = 0; k < T; ++k) {
    const auto row = q.product_step(k);
    for (int m = 0; m < M; ++m) base[k * M + m] = neg_log(row[m], 0.0);
  }
  StructuredForm form;
  form.table.assign(step_table_size(spec), 0.0);
  for (int k = 0; k < T; ++k)
    for (int h = 0; h < H; ++h)
      for (int m = 0; m < M; ++m) {
        const double rv = r.table.empty() ? 0.0 : r.table[step_index(spec, k, h, m)];
        form.table[step_index(spec, k, h, m)] = base[k * M + m] + gamma * rv;
      }

  // Override rows differ from the product row only along the tree.
  const auto& tree = q.tree();
  for (std::size_t n = 0; n < tree.size(); ++n) {
    const auto* probs = q.override_at(static_cast<int>(n));
    if (!probs) continue;
    const int k = tree.depth(static_cast<int>(n)) / 2;
    auto prefix = tree.prefix(static_cast<int>(n));
    prefix.push_back(0);
    for (int m = 0; m < M; ++m) {
      const double b = base[k * M + m];
      const double delta = neg_log((*probs)[m], b) - b;
      if (delta == 0.0) continue;
      prefix.back() = m;
      form.paths.push_back({prefix, delta});
    }
  }
  for (const auto& p : r.paths) form.paths.push_back({p.prefix, gamma * p.coefficient});

  out.feature = Feature{id, spec, std::move(form)};
  out.feature.validate();
  out.threshold = log_partition(y);
  return out;
}

RegularizedReward regularized_reward_L(const StructuredModel& p, const StructuredPolicy& q, const RewardFunction& r,
                                       double gamma) {
  StructuredForm rf{r.table, r.paths};
  const auto occ = occupancy(p, q, tree_of({&rf}));
  RegularizedReward out;
  out.entropy_machine = occ.machine_entropy;
  out.expected_reward = occ.expect(r.table, r.paths);
  out.value = out.entropy_machine + gamma * out.expected_reward;
  return out;
}

double regularized_reward_L(const CausalTable& p, const CausalTable& q, const RewardFunction& r, double gamma) {
  return machine_objective(p, q, r, gamma);
}

std::vector<double> MomentSource::acquire(const StructuredPolicy& q, const std::vector<const Feature*>& features,
                                          int n) const {
  if (!human) throw std::invalid_argument("moment source has no human");
  if (features.empty()) return {};
  if (kind == Kind::exact) return human->moments(q, features);
  if (sample_size == 0) throw std::invalid_argument("sampled moment source needs a positive sample size");
  const auto batch = sample_interactions(q, *human, sample_size, derive_seed(seed, static_cast<std::uint64_t>(n)),
                                         threads);
  if (on_batch) on_batch(n, batch);
  return empirical_moments(batch, features);
}

AreaState AreaState::initial(StructuredPolicy q0) {
  AreaState s;
  s.policy = std::move(q0);
  return s;
}

void area_step(AreaState& state, const AreaProblem& problem, const MomentSource& src, const AreaOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<const Feature*> feats;
  for (const auto& f : problem.equality) feats.push_back(&f);
  const auto targets = src.acquire(state.policy, feats, state.n);

  std::vector<Constraint> eq;
  for (std::size_t i = 0; i < feats.size(); ++i) eq.push_back({problem.equality[i], targets[i]});
  const auto reward_id = problem.reward.as_feature().id;
  const auto base = build_constraint_set(eq, problem.inequality, reward_id);
  AreaRow row;
  row.iter = state.n;

  DualVars warm = DualVars::zeros(base);
  const bool usable = !state.history.empty() && state.history.back().status != SolveStatus::infeasible;
  if (usable && state.lambda.equality.size() == warm.equality.size()) {
    warm.equality = state.lambda.equality;
    for (std::size_t i = 0; i < warm.inequality.size() && i < state.lambda.inequality.size(); ++i)
      warm.inequality[i] = state.lambda.inequality[i];
  }
  auto est = estimate_human(state.policy, base, opts.estimation, &warm);

  // The step constraint only changes the fit when the unconstrained model
  // violates it. If it cannot be met together with the data moments the
  // unconstrained fit is kept and the row is flagged.
  if (opts.use_step_constraint && state.y) {
    auto sc = step_constraint(state.policy, *state.y, problem.reward, opts.gamma);
    row.step_constraint = true;
    row.step_restricted = sc.restricted;
    const auto occ = occupancy(est.model, state.policy, tree_of({&sc.feature.structured()}));
    row.step_slack = occ.expect(sc.feature) - sc.threshold;
    if (row.step_slack < 0.0) {
      auto ineq = problem.inequality;
      ineq.push_back({std::move(sc.feature), sc.threshold});
      const auto cs = build_constraint_set(std::move(eq), std::move(ineq), reward_id);
      DualVars w = DualVars::zeros(cs);
      w.equality = est.lambda.equality;
      std::copy(est.lambda.inequality.begin(), est.lambda.inequality.end(), w.inequality.begin());
      auto with = estimate_human(state.policy, cs, opts.estimation, &w);
      if (with.status == SolveStatus::converged) {
        row.step_active = true;
        est = std::move(with);
      } else {
        row.step_infeasible = true;
      }
    }
  }
  state.lambda = est.lambda;

  const auto L = regularized_reward_L(est.model, state.policy, problem.reward, opts.gamma);
  auto y = backward_y_structured(est.model, problem.reward, opts.gamma);
  auto next = extract_policy(y);

  row.L = L.value;
  row.entropy_machine = L.entropy_machine;
  row.expected_reward = L.expected_reward;
  row.moment_residual_max = est.residual_max;
  row.policy_delta = policy_distance(next, state.policy);
  row.status = est.status;
  row.solver_iterations = est.iterations;

  if (!state.history.empty() && std::abs(L.value - state.L) <= opts.objective_tol)
    ++state.small_steps;
  else
    state.small_steps = 0;
  if (!state.converged && (row.policy_delta <= opts.policy_tol || state.small_steps >= 2)) {
    state.converged = true;
    state.converged_at = state.n;
  }

  state.human = est.model;
  state.y = std::move(y);
  state.policy = std::move(next);
  state.L = L.value;
  if (opts.keep_policies) state.policies.push_back(state.policy);
  row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  state.history.push_back(row);
  ++state.n;
}

AreaTrace run_area(const AreaProblem& problem, const MomentSource& src, const AreaOptions& opts,
                   std::optional<StructuredPolicy> initial) {
  if (opts.iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  problem.reward.validate();
  auto state = AreaState::initial(initial ? std::move(*initial) : StructuredPolicy::uniform(problem.spec));
  if (!(state.policy.spec() == problem.spec)) throw std::invalid_argument("initial policy is on a different spec");
  if (opts.keep_policies) state.policies.push_back(state.policy);
  for (int i = 0; i < opts.iterations; ++i) area_step(state, problem, src, opts);
  AreaTrace trace;
  trace.rows = std::move(state.history);
  trace.policies = std::move(state.policies);
  trace.final_policy = std::move(state.policy);
  trace.final_human = std::move(state.human);
  trace.converged = state.converged;
  trace.converged_at = state.converged_at;
  return trace;
}

void write_area_csv(const std::string& path, const std::vector<AreaRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "iter,L,entropy_machine,expected_reward,moment_residual_max,policy_delta,wall_ms\n";
  out << std::setprecision(17);
  for (const auto& r : rows)
    out << r.iter << ',' << r.L << ',' << r.entropy_machine << ',' << r.expected_reward << ','
        << r.moment_residual_max << ',' << r.policy_delta << ',' << r.wall_ms << '\n';
}

nlohmann::json to_json(const AreaTrace& trace) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : trace.rows)
    rows.push_back({{"iter", r.iter},
                    {"L", r.L},
                    {"entropy_machine", r.entropy_machine},
                    {"expected_reward", r.expected_reward},
                    {"moment_residual_max", r.moment_residual_max},
                    {"policy_delta", r.policy_delta},
                    {"wall_ms", r.wall_ms},
                    {"solver_status", to_string(r.status)},
                    {"solver_iterations", r.solver_iterations},
                    {"step_constraint", r.step_constraint},
                    {"step_restricted", r.step_restricted},
                    {"step_slack", r.step_slack},
                    {"step_active", r.step_active},
                    {"step_infeasible", r.step_infeasible}});
  nlohmann::json j{{"rows", rows},
                   {"converged", trace.converged},
                   {"converged_at", trace.converged_at},
                   {"final_policy", to_json(trace.final_policy)}};
  if (!trace.policies.empty()) {
    j["policies"] = nlohmann::json::array();
    for (const auto& q : trace.policies) j["policies"].push_back(to_json(q));
  }
  return j;
}

}  // namespace area
