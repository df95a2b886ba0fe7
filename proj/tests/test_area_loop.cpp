#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "area/area_loop.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace area;

namespace {

double neg_log_q_plus_reward(const CausalTable& q, const RewardFunction& r, double gamma, const Trajectory& t) {
  const auto seq = t.interleaved();
  double v = gamma * reward_eval(r, t);
  for (int k = 0; k < q.spec().horizon; ++k) v -= std::log(q.at(k, seq)[t.machine[k]]);
  return v;
}

std::shared_ptr<TableHuman> random_human(const ProcessSpec& s, support::Rng& rng) {
  return std::make_shared<TableHuman>(support::random_table(s, Side::human, rng));
}

}  // namespace

TEST_CASE("step constraint under a uniform policy without reward") {
  const ProcessSpec s{3, 2, 4};
  const RewardFunction r{s, {}, {}};
  const auto q = StructuredPolicy::uniform(s);
  const auto y = backward_y_structured(StructuredModel::uniform(s), r, 0.0);
  const auto sc = step_constraint(q, y, r, 0.0);
  CHECK(sc.threshold == doctest::Approx(3 * std::log(4.0)).epsilon(1e-14));
  CHECK_FALSE(sc.restricted);
  support::Rng rng(1);
  for (int i = 0; i < 20; ++i)
    CHECK(eval_feature(sc.feature, support::random_trajectory(s, rng)) ==
          doctest::Approx(3 * std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("step constraint evaluates -log Q + gamma r and its threshold is the expectation") {
  support::Rng rng(2);
  for (int rep = 0; rep < 10; ++rep) {
    const ProcessSpec s{2 + rep % 2, 2, 2 + rep % 2};
    const auto feats = support::random_features(s, rng, 1, 3);
    const auto c = support::as_constraints(feats, 0, rng);
    std::vector<double> x(c.size(), 0.9);
    const auto p = backward_z_structured(StructuredPolicy::uniform(s), DualVars::from_flat(c, x), c);
    RewardFunction r{s, support::random_step_table(s, rng), {{support::random_prefix(s, 2 * s.horizon, rng), 1.5},
                                                              {support::random_prefix(s, 3, rng), -0.5}}};
    const double gamma = 1.0 + rep % 3;
    const auto y = backward_y_structured(p, r, gamma);
    const auto q = extract_policy(y);
    CHECK(q.tree().size() > 1);
    const auto sc = step_constraint(q, y, r, gamma);
    const auto dq = q.to_dense();
    for (const auto& t : oracle::enumerate_trajectories(s))
      CHECK(eval_feature(sc.feature, t) == doctest::Approx(neg_log_q_plus_reward(dq, r, gamma, t)).epsilon(1e-10));
    const double expected = oracle::expectation(p.to_dense(), dq, [&](const Trajectory& t) {
      return eval_feature(sc.feature, t);
    });
    CHECK(sc.threshold == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("zero-probability actions restrict the step constraint") {
  const ProcessSpec s{2, 2, 2};
  auto q = StructuredPolicy::product(s, {{1.0, 0.0}, {0.5, 0.5}});
  q.set_override(std::vector<int>{0, 1}, {0.0, 1.0});
  const RewardFunction r{s, {}, {}};
  const auto y = backward_y_structured(StructuredModel::uniform(s), r, 1.0);
  const auto sc = step_constraint(q, y, r, 1.0);
  CHECK(sc.restricted);
  // Trajectories with positive probability still get -log Q.
  CHECK(eval_feature(sc.feature, Trajectory{{0, 0}, {0, 0}}) == doctest::Approx(std::log(2.0)));
  CHECK(eval_feature(sc.feature, Trajectory{{1, 0}, {0, 1}}) == doctest::Approx(0.0));
}

TEST_CASE("regularized reward") {
  support::Rng rng(3);
  const ProcessSpec s{3, 2, 3};
  const RewardFunction zero{s, {}, {}};
  CHECK(regularized_reward_L(StructuredModel::uniform(s), StructuredPolicy::uniform(s), zero, 0.0).value ==
        doctest::Approx(3 * std::log(3.0)).epsilon(1e-14));
  for (int rep = 0; rep < 5; ++rep) {
    const ProcessSpec t{2, 2, 2};
    const auto c = support::as_constraints(support::random_features(t, rng, 1, 2), 0, rng);
    std::vector<double> x(c.size(), -0.4);
    const auto q = support::random_policy(t, rng, 1, true);
    const auto p = backward_z_structured(q, DualVars::from_flat(c, x), c);
    RewardFunction r{t, support::random_step_table(t, rng), {{support::random_prefix(t, 4, rng), 2.0}}};
    const auto L = regularized_reward_L(p, q, r, 1.5);
    CHECK(L.value == doctest::Approx(machine_objective(p.to_dense(), q.to_dense(), r, 1.5)).epsilon(1e-12));
    CHECK(L.value == doctest::Approx(L.entropy_machine + 1.5 * L.expected_reward).epsilon(1e-15));
  }
}

TEST_CASE("regularized reward is bounded by its parts on the periodic task") {
  const ProcessSpec s{30, 6, 6};
  const RewardFunction r{s, periodic_target_table(s), {}};
  const auto p = StructuredModel::uniform(s);
  const auto q = StructuredPolicy::product(s, std::vector<std::vector<double>>(30, {0.9, 0.02, 0.02, 0.02, 0.02, 0.02}));
  CHECK(regularized_reward_L(p, q, r, 1.0).value <= 30 * std::log(6.0) + 30.0);
}

TEST_CASE("zero iterations return the initial uniform policy") {
  const ProcessSpec s{2, 2, 2};
  support::Rng rng(4);
  AreaProblem prob{s, {decomposable_feature("follow", s, follow_table(s))}, {}, {s, follow_table(s), {}}};
  MomentSource src{MomentSource::Kind::exact, random_human(s, rng)};
  AreaOptions o;
  o.iterations = 0;
  o.keep_policies = true;
  const auto tr = run_area(prob, src, o);
  CHECK(tr.rows.empty());
  REQUIRE(tr.policies.size() == 1);
  CHECK(policy_distance(tr.policies[0], StructuredPolicy::uniform(s)) == 0.0);
  CHECK_FALSE(tr.converged);
}

TEST_CASE("prefix features give one-iteration convergence") {
  support::Rng rng(5);
  for (int rep = 0; rep < 4; ++rep) {
    const ProcessSpec s{2 + rep, 2, 2};
    const auto path = support::random_trajectory(s, rng);
    const RewardFunction r{s, {}, {{path.interleaved(), 1.0}}};
    std::vector<Feature> eq{r.as_feature()};
    const auto seq = path.interleaved();
    for (int t = 1; t < s.horizon; ++t)
      eq.push_back(prefix_feature("prefix" + std::to_string(t), s, {seq.begin(), seq.begin() + 2 * t}));
    AreaProblem prob{s, eq, {}, r};
    MomentSource src{MomentSource::Kind::exact, random_human(s, rng)};
    AreaOptions o;
    o.gamma = 2.0;
    o.iterations = 3;
    o.keep_policies = true;
    o.estimation.grad_tol = 1e-12;
    o.estimation.max_iters = 50000;
    const auto tr = run_area(prob, src, o);
    CHECK(policy_distance(tr.policies[1], tr.policies[0]) > 1e-3);
    CHECK(policy_distance(tr.policies[2], tr.policies[1]) <= 1e-8);
  }
}

TEST_CASE("fixed point is stable and flagged") {
  support::Rng rng(6);
  const ProcessSpec s{3, 2, 2};
  const RewardFunction r{s, support::random_step_table(s, rng), {}};
  AreaProblem prob{s, {r.as_feature(), decomposable_feature("f", s, follow_table(s))}, {}, r};
  MomentSource src{MomentSource::Kind::exact, random_human(s, rng)};
  AreaOptions o;
  o.gamma = 1.0;
  o.iterations = 25;
  o.keep_policies = true;
  o.estimation.grad_tol = 1e-12;
  o.estimation.max_iters = 50000;
  const auto tr = run_area(prob, src, o);
  CHECK(tr.converged);
  int fixed = -1;
  for (std::size_t i = 0; i + 1 < tr.policies.size(); ++i)
    if (policy_distance(tr.policies[i + 1], tr.policies[i]) == 0.0) {
      fixed = static_cast<int>(i);
      break;
    }
  REQUIRE(fixed >= 0);
  for (std::size_t i = fixed; i < tr.policies.size(); ++i)
    CHECK(policy_distance(tr.policies[i], tr.policies[fixed]) == 0.0);
}

TEST_CASE("sampled runs are reproducible and draw fresh batches") {
  const ProcessSpec s{5, 3, 3};
  const RewardFunction r{s, periodic_target_table(s), {}};
  AreaProblem prob{s, {r.as_feature(), decomposable_feature("follow", s, follow_table(s))}, {}, r};
  auto human = std::make_shared<LcaHuman>(s, LcaParams{});
  MomentSource src{MomentSource::Kind::sampled, human, 50, 11};
  const auto f = &prob.equality[1];
  const auto q = StructuredPolicy::uniform(s);
  CHECK(src.acquire(q, {f}, 0) == src.acquire(q, {f}, 0));
  CHECK(src.acquire(q, {f}, 0) != src.acquire(q, {f}, 1));
  AreaOptions o;
  o.gamma = 2.0;
  o.iterations = 4;
  const auto a = run_area(prob, src, o);
  const auto b = run_area(prob, src, o);
  REQUIRE(a.rows.size() == 4);
  for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].L == b.rows[i].L);
}

TEST_CASE("area trace csv") {
  std::vector<AreaRow> rows(2);
  rows[1].iter = 1;
  rows[1].L = 2.5;
  const auto path = std::filesystem::temp_directory_path() / "area_trace_test.csv";
  write_area_csv(path.string(), rows);
  std::ifstream in(path);
  std::string header, first, second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  CHECK(header == "iter,L,entropy_machine,expected_reward,moment_residual_max,policy_delta,wall_ms");
  CHECK(second.rfind("1,2.5,", 0) == 0);
  std::filesystem::remove(path);
}
