#pragma once

#include <random>
#include <vector>

#include "area/features.hpp"
#include "area/process.hpp"
#include "area/structured.hpp"

namespace support {

using Rng = std::mt19937_64;

inline std::vector<double> random_distribution(int n, Rng& rng, double lo = 0.05) {
  std::uniform_real_distribution<double> u(lo, 1.0);
  std::vector<double> p(n);
  double s = 0.0;
  for (auto& x : p) s += (x = u(rng));
  for (auto& x : p) x /= s;
  return p;
}

inline area::CausalTable random_table(const area::ProcessSpec& spec, area::Side side, Rng& rng) {
  area::CausalTable t(spec, side);
  for (int k = 0; k < spec.horizon; ++k)
    for (std::size_t h = 0; h < t.history_count(k); ++h) {
      const auto p = random_distribution(t.alphabet(), rng);
      std::copy(p.begin(), p.end(), t.row(k, h).begin());
    }
  return t;
}

inline std::vector<int> random_prefix(const area::ProcessSpec& spec, int len, Rng& rng) {
  std::vector<int> out(len);
  for (int i = 0; i < len; ++i) {
    const int radix = i % 2 == 0 ? spec.machine_actions : spec.human_actions;
    out[i] = std::uniform_int_distribution<int>(0, radix - 1)(rng);
  }
  return out;
}

inline area::Trajectory random_trajectory(const area::ProcessSpec& spec, Rng& rng) {
  const auto seq = random_prefix(spec, 2 * spec.horizon, rng);
  area::Trajectory t;
  for (int k = 0; k < spec.horizon; ++k) {
    t.machine.push_back(seq[2 * k]);
    t.human.push_back(seq[2 * k + 1]);
  }
  return t;
}

inline std::vector<double> random_step_table(const area::ProcessSpec& spec, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> t(area::step_table_size(spec));
  for (auto& x : t) x = u(rng);
  return t;
}

inline area::ProcessSpec random_spec(Rng& rng, int max_t, int max_alpha) {
  std::uniform_int_distribution<int> t(1, max_t), a(1, max_alpha), b(2, max_alpha);
  return {t(rng), b(rng), a(rng) == 1 ? 1 : b(rng)};
}

// Markov off-tree rows plus overrides at a few random machine-move
// histories.
inline area::StructuredPolicy random_policy(const area::ProcessSpec& spec, Rng& rng, int overrides,
                                            bool product = false) {
  const int H = spec.human_actions, M = spec.machine_actions;
  std::vector<std::vector<double>> steps;
  for (int k = 0; k < spec.horizon; ++k) {
    if (k == 0 || product) {
      steps.push_back(random_distribution(M, rng));
      continue;
    }
    std::vector<double> s;
    for (int r = 0; r < H * M; ++r) {
      const auto p = random_distribution(M, rng);
      s.insert(s.end(), p.begin(), p.end());
    }
    steps.push_back(std::move(s));
  }
  auto q = area::StructuredPolicy::markov(spec, std::move(steps));
  std::uniform_int_distribution<int> kd(0, spec.horizon - 1);
  for (int i = 0; i < overrides; ++i) q.set_override(random_prefix(spec, 2 * kd(rng), rng), random_distribution(M, rng));
  return q;
}

// Mixture of decomposable features, full paths and shorter prefixes.
inline std::vector<area::Feature> random_features(const area::ProcessSpec& spec, Rng& rng, int n_decomp, int n_paths) {
  std::vector<area::Feature> out;
  for (int i = 0; i < n_decomp; ++i)
    out.push_back(area::decomposable_feature("d" + std::to_string(i), spec, random_step_table(spec, rng)));
  std::uniform_int_distribution<int> len(1, 2 * spec.horizon);
  std::uniform_real_distribution<double> coef(0.5, 2.0);
  for (int i = 0; i < n_paths; ++i) {
    const int l = i % 2 == 0 ? 2 * spec.horizon : len(rng);
    out.push_back(area::prefix_feature("p" + std::to_string(i), spec, random_prefix(spec, l, rng), coef(rng)));
  }
  return out;
}

inline area::ConstraintSet as_constraints(const std::vector<area::Feature>& feats, int n_ineq, Rng& rng) {
  std::vector<area::Constraint> eq, ineq;
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (static_cast<int>(i) < n_ineq)
      ineq.push_back({feats[i], u(rng)});
    else
      eq.push_back({feats[i], u(rng)});
  }
  return area::build_constraint_set(std::move(eq), std::move(ineq));
}

inline double sup_diff(const area::CausalTable& a, const area::CausalTable& b) {
  double d = 0.0;
  for (int k = 0; k < a.spec().horizon; ++k)
    for (std::size_t h = 0; h < a.history_count(k); ++h) {
      const auto x = a.row(k, h), y = b.row(k, h);
      for (std::size_t i = 0; i < x.size(); ++i) d = std::max(d, std::abs(x[i] - y[i]));
    }
  return d;
}

}  // namespace support
