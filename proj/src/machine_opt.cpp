#include "area/machine_opt.hpp"

#include <cmath>
#include <stdexcept>

#include "area/logspace.hpp"

namespace area {

namespace {

void check_gamma(double gamma) {
  if (!std::isfinite(gamma) || gamma < 0.0) throw std::invalid_argument("gamma must be finite and >= 0");
}

}  // namespace

DenseYTables backward_y_dense(const CausalTable& p, const RewardFunction& r, double gamma, std::uint64_t cap) {
  check_gamma(gamma);
  if (p.side() != Side::human) throw std::invalid_argument("expected a human model");
  if (!(p.spec() == r.spec)) throw std::invalid_argument("reward is on a different spec");
  const auto& spec = p.spec();
  require_under_cap(spec, cap);
  const int T = spec.horizon, H = spec.human_actions, M = spec.machine_actions;
  const auto n = trajectory_count(spec);
  std::vector<double> reward(n);
  for (std::uint64_t c = 0; c < n; ++c) reward[c] = gamma * reward_eval(r, trajectory_from_code(spec, c));

  DenseYTables y;
  y.spec = spec;
  y.gamma = gamma;
  y.log_y.resize(T);
  y.log_norm.resize(T);
  std::vector<double> vals(H);
  std::size_t count = 1;
  for (int k = 0; k < T - 1; ++k) count *= spec.pairs();
  for (int k = T - 1; k >= 0; --k) {
    y.log_y[k].assign(count * M, 0.0);
    y.log_norm[k].assign(count, 0.0);
    for (std::size_t idx = 0; idx < count; ++idx) {
      for (int m = 0; m < M; ++m) {
        const std::size_t hidx = idx * M + m;
        const auto pr = p.row(k, hidx);
        for (int h = 0; h < H; ++h) {
          const std::size_t next = hidx * H + h;
          vals[h] = k == T - 1 ? reward[next] : y.log_norm[k + 1][next];
        }
        y.log_y[k][hidx] = expect_anchored(pr, vals);
      }
      y.log_norm[k][idx] = log_sum_exp(std::span<const double>(y.log_y[k]).subspan(idx * M, M));
    }
    if (k > 0) count /= spec.pairs();
  }
  y.log_partition = y.log_norm[0][0];
  return y;
}

StructuredYTables backward_y_structured(const StructuredModel& p, const RewardFunction& r, double gamma) {
  check_gamma(gamma);
  if (!(p.spec == r.spec)) throw std::invalid_argument("reward is on a different spec");
  r.validate();
  const auto& spec = p.spec;
  const int T = spec.horizon, H = spec.human_actions, M = spec.machine_actions;
  const auto reward_at = [&](int k, int h, int m) {
    return r.table.empty() ? 0.0 : gamma * r.table[step_index(spec, k, h, m)];
  };

  StructuredYTables y;
  y.spec = spec;
  y.gamma = gamma;
  y.offpath_log_y.assign(static_cast<std::size_t>(T) * M, 0.0);
  y.offpath_log_norm.assign(T + 1, 0.0);
  std::vector<double> vals(H);
  for (int k = T - 1; k >= 0; --k) {
    for (int m = 0; m < M; ++m) {
      const auto pr = p.offpath_at(k, m);
      for (int h = 0; h < H; ++h) vals[h] = reward_at(k, h, m) + y.offpath_log_norm[k + 1];
      y.offpath_log_y[k * M + m] = expect_anchored(pr, vals);
    }
    y.offpath_log_norm[k] = log_sum_exp(std::span<const double>(y.offpath_log_y).subspan(k * M, M));
  }

  y.tree = p.tree;
  for (const auto& path : r.paths) y.tree.insert(path.prefix);
  const auto& tree = y.tree;
  const auto to_p = tree.align(p.tree);
  std::vector<double> w(tree.size(), 0.0);
  for (const auto& path : r.paths) w[tree.find(path.prefix)] += gamma * path.coefficient;

  y.node_log_y.assign(tree.size(), {});
  y.node_log_norm.assign(tree.size(), 0.0);
  std::vector<double> psi(tree.size(), 0.0);
  for (int depth = tree.max_depth(); depth >= 0; --depth) {
    for (int node : tree.at_depth(depth)) {
      const int k = depth / 2;
      if (depth % 2 == 1) {
        const int m = tree.symbol(node);
        const int pn = to_p[node];
        const std::span<const double> pr =
            (pn >= 0 && !p.node_probs[pn].empty()) ? std::span<const double>(p.node_probs[pn]) : p.offpath_at(k, m);
        for (int h = 0; h < H; ++h) {
          const int c = tree.child(node, h);
          vals[h] = reward_at(k, h, m) + (c >= 0 ? w[c] + y.node_log_norm[c] : y.offpath_log_norm[k + 1]);
        }
        psi[node] = w[node] + expect_anchored(pr, vals);
      } else if (k < T) {
        std::vector<double> ly(M);
        for (int m = 0; m < M; ++m) {
          const int u = tree.child(node, m);
          ly[m] = u >= 0 ? psi[u] : y.offpath_log_y[k * M + m];
        }
        y.node_log_norm[node] = log_sum_exp(ly);
        y.node_log_y[node] = std::move(ly);
      }
    }
  }
  y.log_partition = y.node_log_norm[PrefixTree::root];
  return y;
}

CausalTable extract_policy(const DenseYTables& y) {
  CausalTable q(y.spec, Side::machine);
  const int M = y.spec.machine_actions;
  for (int k = 0; k < y.spec.horizon; ++k)
    for (std::size_t idx = 0; idx < q.history_count(k); ++idx) {
      auto row = q.row(k, idx);
      for (int m = 0; m < M; ++m) row[m] = y.log_y[k][idx * M + m];
      softmax_inplace(row);
    }
  return q;
}

StructuredPolicy extract_policy(const StructuredYTables& y) {
  const int T = y.spec.horizon, M = y.spec.machine_actions;
  std::vector<std::vector<double>> steps(T, std::vector<double>(M));
  for (int k = 0; k < T; ++k) {
    for (int m = 0; m < M; ++m) steps[k][m] = y.offpath_log_y[k * M + m];
    softmax_inplace(steps[k]);
  }
  auto q = StructuredPolicy::product(y.spec, std::move(steps));
  const auto& tree = y.tree;
  for (std::size_t n = 0; n < tree.size(); ++n) {
    const auto& ly = y.node_log_y[n];
    if (ly.empty()) continue;
    const int k = tree.depth(static_cast<int>(n)) / 2;
    bool same = true;
    for (int m = 0; m < M && same; ++m) same = ly[m] == y.offpath_log_y[k * M + m];
    if (same) continue;
    auto probs = ly;
    softmax_inplace(probs);
    q.set_override(tree.prefix(static_cast<int>(n)), std::move(probs));
  }
  return q;
}

double log_partition(const DenseYTables& y) { return y.log_partition; }
double log_partition(const StructuredYTables& y) { return y.log_partition; }

double machine_objective(const CausalTable& p, const CausalTable& q, const RewardFunction& r, double gamma,
                         std::uint64_t cap) {
  const double h = causal_entropy(Side::machine, p, q, cap);
  if (gamma == 0.0) return h;
  return h + gamma * expect_function(p, q, [&](const Trajectory& t) { return reward_eval(r, t); }, cap);
}

std::vector<std::vector<double>> decomposable_policy(const StructuredModel& p, const RewardFunction& r, double gamma) {
  check_gamma(gamma);
  if (!r.decomposable_only()) throw std::invalid_argument("reward has path-based parts");
  const auto& spec = p.spec;
  const int T = spec.horizon, H = spec.human_actions, M = spec.machine_actions;
  for (std::size_t n = 0; n < p.tree.size(); ++n) {
    const auto& probs = p.node_probs[n];
    if (probs.empty()) continue;
    const auto off = p.offpath_at(p.tree.depth(static_cast<int>(n)) / 2, p.tree.symbol(static_cast<int>(n)));
    for (int h = 0; h < H; ++h)
      if (std::abs(probs[h] - off[h]) > 1e-14) throw std::invalid_argument("human model is not Markov in m_k");
  }
  std::vector<std::vector<double>> out(T, std::vector<double>(M, 0.0));
  for (int k = 0; k < T; ++k) {
    for (int m = 0; m < M; ++m) {
      const auto pr = p.offpath_at(k, m);
      double s = 0.0;
      if (!r.table.empty())
        for (int h = 0; h < H; ++h) s += pr[h] * r.table[step_index(spec, k, h, m)];
      out[k][m] = gamma * s;
    }
    softmax_inplace(out[k]);
  }
  return out;
}

}  // namespace area
