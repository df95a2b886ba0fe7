#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "area/machine_opt.hpp"
#include "area/maxent.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace area;

namespace {

RewardFunction random_reward(const ProcessSpec& s, support::Rng& rng, int n_paths) {
  RewardFunction r{s, support::random_step_table(s, rng), {}};
  std::uniform_int_distribution<int> len(1, 2 * s.horizon);
  std::uniform_real_distribution<double> coef(-1.0, 2.0);
  for (int i = 0; i < n_paths; ++i)
    r.paths.push_back({support::random_prefix(s, i % 2 == 0 ? 2 * s.horizon : len(rng), rng), coef(rng)});
  return r;
}

// Human model with a nontrivial tree: a Gibbs model at random multipliers.
StructuredModel random_model(const ProcessSpec& s, support::Rng& rng, int n_paths) {
  const auto q = support::random_policy(s, rng, 1);
  const auto c = support::as_constraints(support::random_features(s, rng, 2, n_paths), 0, rng);
  std::vector<double> x(c.size());
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (auto& v : x) v = u(rng);
  return backward_z_structured(q, DualVars::from_flat(c, x), c);
}

}  // namespace

TEST_CASE("zero trade-off gives the uniform policy") {
  support::Rng rng(3);
  const ProcessSpec s{3, 2, 3};
  const auto p = random_model(s, rng, 2);
  const auto r = random_reward(s, rng, 2);
  const auto uniform = CausalTable::uniform(s, Side::machine);
  const auto yd = backward_y_dense(p.to_dense(), r, 0.0);
  CHECK(support::sup_diff(extract_policy(yd), uniform) == 0.0);
  CHECK(support::sup_diff(extract_policy(backward_y_structured(p, r, 0.0)).to_dense(), uniform) == 0.0);
  CHECK(log_partition(yd) == doctest::Approx(3 * std::log(3.0)).epsilon(1e-14));
  CHECK(machine_objective(p.to_dense(), uniform, r, 0.0) == doctest::Approx(3 * std::log(3.0)).epsilon(1e-14));
}

TEST_CASE("single step with a reward on one action") {
  const ProcessSpec s{1, 2, 2};
  RewardFunction r{s, std::vector<double>(step_table_size(s), 0.0), {}};
  for (int h = 0; h < 2; ++h) r.table[step_index(s, 0, h, 0)] = 1.0;
  support::Rng rng(5);
  const auto p = support::random_table(s, Side::human, rng);
  for (double gamma : {0.5, 1.0, 3.0}) {
    const auto y = backward_y_dense(p, r, gamma);
    CHECK(y.log_y[0][0] == doctest::Approx(gamma).epsilon(1e-15));
    CHECK(y.log_y[0][1] == 0.0);
  }
  const auto y = backward_y_dense(p, r, 1.0);
  CHECK(extract_policy(y).row(0, 0)[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-15));
  CHECK(log_partition(y) == doctest::Approx(std::log(std::exp(1.0) + 1.0)).epsilon(1e-15));
}

TEST_CASE("deterministic policy has zero entropy") {
  const ProcessSpec s{2, 2, 2};
  const auto q = StructuredPolicy::product(s, {{1.0, 0.0}, {0.0, 1.0}}).to_dense();
  support::Rng rng(6);
  CHECK(machine_objective(support::random_table(s, Side::human, rng), q, RewardFunction{s, {}, {}}, 0.0) == 0.0);
}

TEST_CASE("dense recursion matches the naive oracle") {
  support::Rng rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    const ProcessSpec s{2, 2, 2};
    const auto p = support::random_table(s, Side::human, rng);
    const auto r = random_reward(s, rng, 2);
    const double gamma = 0.5 + rep * 0.3;
    double ref_lp = 0.0;
    const auto ref = oracle::naive_machine_policy(p, r, gamma, &ref_lp);
    const auto y = backward_y_dense(p, r, gamma);
    CHECK(support::sup_diff(extract_policy(y), ref) < 1e-12);
    CHECK(log_partition(y) == doctest::Approx(ref_lp).epsilon(1e-12));
  }
}

TEST_CASE("structured recursion matches dense") {
  support::Rng rng(17);
  for (int rep = 0; rep < 30; ++rep) {
    const auto s = support::random_spec(rng, 3, 3);
    const auto p = random_model(s, rng, rep % 3);
    const auto r = random_reward(s, rng, rep % 4);
    const double gamma = 0.25 + 0.5 * (rep % 5);
    const auto ys = backward_y_structured(p, r, gamma);
    const auto yd = backward_y_dense(p.to_dense(), r, gamma);
    const auto qs = extract_policy(ys);
    qs.validate();
    CHECK(support::sup_diff(qs.to_dense(), extract_policy(yd)) < 1e-10);
    CHECK(log_partition(ys) == doctest::Approx(log_partition(yd)).epsilon(1e-11));
  }
}

TEST_CASE("extracted policy rows are normalized") {
  support::Rng rng(19);
  const ProcessSpec s{3, 3, 2};
  const auto q = extract_policy(backward_y_dense(random_model(s, rng, 2).to_dense(), random_reward(s, rng, 2), 1.7));
  CHECK(validate_causal(q).empty());
}

TEST_CASE("extracted policy beats random policies and the gradient oracle") {
  support::Rng rng(23);
  for (int rep = 0; rep < 6; ++rep) {
    const ProcessSpec s{rep < 3 ? 2 : 3, 2, 2};
    const auto p = random_model(s, rng, 2).to_dense();
    const auto r = random_reward(s, rng, 2);
    const double gamma = 1.0 + rep;
    const auto q = extract_policy(backward_y_dense(p, r, gamma));
    const double best = machine_objective(p, q, r, gamma);
    CHECK(best == doctest::Approx(oracle::naive_machine_objective(p, q, r, gamma)).epsilon(1e-12));
    for (int i = 0; i < 200; ++i)
      CHECK(machine_objective(p, support::random_table(s, Side::machine, rng), r, gamma) <= best + 1e-12);
    const auto opt = oracle::oracle_machine_opt(p, r, gamma);
    CHECK(opt.objective <= best + 1e-9);
    CHECK(opt.objective >= best - 1e-6);
  }
}

TEST_CASE("log partition equals the regularized reward of the extracted policy") {
  support::Rng rng(29);
  for (int rep = 0; rep < 20; ++rep) {
    const auto s = support::random_spec(rng, 3, 3);
    const auto p = random_model(s, rng, 2);
    const auto r = random_reward(s, rng, 2);
    const double gamma = 0.5 + 0.25 * rep;
    const auto ys = backward_y_structured(p, r, gamma);
    const auto q = extract_policy(ys).to_dense();
    const auto pd = p.to_dense();
    const double rhs = oracle::expectation(pd, q, [&](const Trajectory& t) {
      const auto seq = t.interleaved();
      double lq = 0.0;
      for (int k = 0; k < s.horizon; ++k) lq += std::log(q.at(k, seq)[t.machine[k]]);
      return -lq + gamma * reward_eval(r, t);
    });
    CHECK(log_partition(ys) == doctest::Approx(rhs).epsilon(1e-11));
  }
}

TEST_CASE("closed-form product policy") {
  SUBCASE("zero reward") {
    const ProcessSpec s{4, 2, 3};
    for (const auto& row : decomposable_policy(StructuredModel::uniform(s), RewardFunction{s, {}, {}}, 2.0))
      for (double x : row) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }
  SUBCASE("two actions") {
    const ProcessSpec s{1, 2, 2};
    RewardFunction r{s, std::vector<double>(step_table_size(s), 0.0), {}};
    r.table[step_index(s, 0, 0, 0)] = 1.0;  // expected 0.5 for m=0 under a uniform human
    const auto q = decomposable_policy(StructuredModel::uniform(s), r, 2.0);
    CHECK(q[0][0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-15));
    CHECK(q[0][1] == doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-15));
  }
  SUBCASE("agrees with the full recursion") {
    support::Rng rng(31);
    for (int rep = 0; rep < 10; ++rep) {
      const ProcessSpec s{3 + rep % 3, 3, 2 + rep % 2};
      const auto q = support::random_policy(s, rng, 0, true);
      const auto c = support::as_constraints(support::random_features(s, rng, 3, 0), 0, rng);
      std::vector<double> x(c.size(), 0.8);
      const auto p = backward_z_structured(q, DualVars::from_flat(c, x), c);
      const auto r = random_reward(s, rng, 0);
      const auto closed = decomposable_policy(p, r, 1.5);
      const auto full = extract_policy(backward_y_structured(p, r, 1.5));
      CHECK(full.tree().size() == 1);
      for (int k = 0; k < s.horizon; ++k) {
        const auto row = full.product_step(k);
        for (int m = 0; m < s.machine_actions; ++m) CHECK(row[m] == doctest::Approx(closed[k][m]).epsilon(1e-13));
      }
      if (s.horizon <= 3) CHECK(support::sup_diff(full.to_dense(), extract_policy(backward_y_dense(p.to_dense(), r, 1.5))) < 1e-9);
    }
  }
  SUBCASE("path reward is rejected") {
    const ProcessSpec s{2, 2, 2};
    RewardFunction r{s, {}, {{{0, 0, 0, 0}, 1.0}}};
    CHECK_THROWS(decomposable_policy(StructuredModel::uniform(s), r, 1.0));
  }
}

TEST_CASE("best action probability grows with the trade-off") {
  support::Rng rng(37);
  const ProcessSpec s{1, 3, 3};
  const auto p = support::random_table(s, Side::human, rng);
  const RewardFunction r{s, support::random_step_table(s, rng), {}};
  int best = 0;
  std::vector<double> expected(3, 0.0);
  for (int m = 0; m < 3; ++m) {
    for (int h = 0; h < 3; ++h) expected[m] += p.row(0, m)[h] * r.table[step_index(s, 0, h, m)];
    if (expected[m] > expected[best]) best = m;
  }
  double prev = 0.0;
  for (double gamma = 0.0; gamma <= 20.0; gamma += 0.5) {
    const double pr = extract_policy(backward_y_dense(p, r, gamma)).row(0, 0)[best];
    CHECK(pr >= prev);
    prev = pr;
  }
}
