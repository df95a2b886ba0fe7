#include "area/maxent.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <stdexcept>

#include "area/logspace.hpp"

namespace area {

DualVars DualVars::zeros(const ConstraintSet& c) {
  return {std::vector<double>(c.equality.size(), 0.0), std::vector<double>(c.inequality.size(), 0.0)};
}

std::vector<double> DualVars::flat() const {
  std::vector<double> x(equality);
  x.insert(x.end(), inequality.begin(), inequality.end());
  return x;
}

DualVars DualVars::from_flat(const ConstraintSet& c, const std::vector<double>& x) {
  if (x.size() != c.size()) throw std::invalid_argument("dual vector size does not match constraint count");
  const auto ne = static_cast<std::ptrdiff_t>(c.equality.size());
  return {std::vector<double>(x.begin(), x.begin() + ne), std::vector<double>(x.begin() + ne, x.end())};
}

Schedule schedule_from_string(const std::string& s) {
  if (s == "constant") return Schedule::constant;
  if (s == "inverse-sqrt") return Schedule::inverse_sqrt;
  if (s == "adaptive") return Schedule::adaptive;
  throw std::invalid_argument("unknown schedule '" + s + "'");
}

std::string to_string(Schedule s) {
  switch (s) {
    case Schedule::constant: return "constant";
    case Schedule::inverse_sqrt: return "inverse-sqrt";
    case Schedule::adaptive: return "adaptive";
  }
  return "?";
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iters: return "max_iters";
    case SolveStatus::infeasible: return "infeasible";
  }
  return "?";
}

namespace {

std::vector<double> checked_flat(const DualVars& lambda, const ConstraintSet& c) {
  if (lambda.equality.size() != c.equality.size() || lambda.inequality.size() != c.inequality.size())
    throw std::invalid_argument("dual variables do not match the constraint set");
  auto x = lambda.flat();
  for (double v : x)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite dual variable");
  for (double v : lambda.inequality)
    if (v < 0.0) throw std::invalid_argument("inequality multiplier must be >= 0");
  return x;
}

std::vector<double> targets_of(const ConstraintSet& c) {
  std::vector<double> t(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) t[i] = c[i].target;
  return t;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

struct Evaluation {
  double objective = 0.0;
  std::vector<double> moments;
};

// Z recursion over the union of the policy tree and every path term.
class StructuredProblem {
 public:
  StructuredProblem(const StructuredPolicy& q, const ConstraintSet& c) : spec_(q.spec()), q_(q) {
    const int n = static_cast<int>(c.size());
    tree_ = q.tree();
    tables_.resize(n);
    weights_.resize(n);
    for (int i = 0; i < n; ++i) {
      const auto& f = c[i].feature;
      if (!(f.spec == spec_)) throw std::invalid_argument("feature '" + f.id + "' is on a different spec");
      const auto& s = f.structured();
      tables_[i] = s.table;
      for (const auto& p : s.paths) weights_[i].push_back({tree_.insert(p.prefix), p.coefficient});
    }
    const auto to_q = tree_.align(q.tree());
    rows_.resize(tree_.size());
    for (std::size_t v = 0; v < tree_.size(); ++v) {
      const int node = static_cast<int>(v);
      if (!tree_.awaits_machine(node) || tree_.depth(node) >= 2 * spec_.horizon) continue;
      const auto [hp, mp] = tree_.last_pair(node);
      rows_[v] = q_.at_node(to_q[v], tree_.depth(node) / 2, hp, mp);
    }
  }

  const PrefixTree& tree() const { return tree_; }

  StructuredModel backward(const std::vector<double>& x) const {
    const int T = spec_.horizon, H = spec_.human_actions, M = spec_.machine_actions;
    std::vector<double> d(step_table_size(spec_), 0.0);
    for (std::size_t i = 0; i < tables_.size(); ++i) {
      if (tables_[i].empty() || x[i] == 0.0) continue;
      for (std::size_t j = 0; j < d.size(); ++j) d[j] += x[i] * tables_[i][j];
    }
    std::vector<double> w(tree_.size(), 0.0);
    for (std::size_t i = 0; i < weights_.size(); ++i)
      for (const auto& [node, coef] : weights_[i]) w[node] += x[i] * coef;

    StructuredModel p;
    p.spec = spec_;
    p.offpath.assign(static_cast<std::size_t>(T) * M * H, 0.0);
    p.offpath_lognorm.assign(static_cast<std::size_t>(T) * M, 0.0);
    std::vector<double> z(H), next(M);
    // Expected next-step log normalizer after (h, m) at step k, off the tree.
    const auto future_off = [&](int k, int h, int m) {
      if (k + 1 >= T) return 0.0;
      return expect_anchored(q_.offtree(k + 1, h, m),
                             std::span<const double>(p.offpath_lognorm).subspan((k + 1) * M, M));
    };
    for (int k = T - 1; k >= 0; --k)
      for (int m = 0; m < M; ++m) {
        for (int h = 0; h < H; ++h) z[h] = d[step_index(spec_, k, h, m)] + future_off(k, h, m);
        const double lz = softmax_inplace(z);
        p.offpath_lognorm[k * M + m] = lz;
        std::copy(z.begin(), z.end(), p.offpath.begin() + (static_cast<std::size_t>(k) * M + m) * H);
      }

    p.tree = tree_;
    p.node_probs.assign(tree_.size(), {});
    p.node_lognorm.assign(tree_.size(), 0.0);
    auto& value = p.node_lognorm;
    for (int depth = tree_.max_depth(); depth >= 0; --depth) {
      for (int node : tree_.at_depth(depth)) {
        if (depth % 2 == 0) {
          const int k = depth / 2;
          if (k >= T) {
            value[node] = 0.0;
            continue;
          }
          for (int m = 0; m < M; ++m) {
            const int u = tree_.child(node, m);
            next[m] = u >= 0 ? value[u] : p.offpath_lognorm[k * M + m];
          }
          value[node] = expect_anchored(rows_[node], next);
        } else {
          const int k = depth / 2;
          const int m = tree_.symbol(node);
          for (int h = 0; h < H; ++h) {
            const int c = tree_.child(node, h);
            z[h] = d[step_index(spec_, k, h, m)] + (c >= 0 ? w[c] + value[c] : future_off(k, h, m));
          }
          const double lz = softmax_inplace(z);
          value[node] = w[node] + lz;
          p.node_probs[node] = z;
        }
      }
    }
    p.log_partition = value[PrefixTree::root];
    return p;
  }

  Occupancy forward(const StructuredModel& p) const {
    const auto human_node = [&](int u) -> std::span<const double> { return p.node_probs[u]; };
    const auto human_off = [&](int k, int, int m) { return p.offpath_at(k, m); };
    const auto machine_node = [&](int v) { return rows_[v]; };
    const auto machine_off = [&](int k, int hp, int mp) { return q_.offtree(k, hp, mp); };
    return detail::forward_pass(spec_, tree_, human_node, human_off, machine_node, machine_off);
  }

  std::vector<double> moments(const Occupancy& occ) const {
    std::vector<double> out(tables_.size(), 0.0);
    for (std::size_t i = 0; i < tables_.size(); ++i) {
      double v = 0.0;
      if (!tables_[i].empty())
        for (std::size_t j = 0; j < occ.pair_mass.size(); ++j) v += tables_[i][j] * occ.pair_mass[j];
      for (const auto& [node, coef] : weights_[i]) v += coef * occ.node_mass[node];
      out[i] = v;
    }
    return out;
  }

 private:
  ProcessSpec spec_;
  StructuredPolicy q_;
  PrefixTree tree_;
  std::vector<std::vector<double>> tables_;
  std::vector<std::vector<std::pair<int, double>>> weights_;
  std::vector<std::span<const double>> rows_;
};

// Trajectory-level Z recursion; any feature form.
class DenseProblem {
 public:
  DenseProblem(const CausalTable& q, const ConstraintSet& c, std::uint64_t cap) : q_(q), cap_(cap) {
    if (q.side() != Side::machine) throw std::invalid_argument("expected a machine policy");
    const auto& spec = q.spec();
    require_under_cap(spec, cap);
    const auto n = trajectory_count(spec);
    values_.resize(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      const auto& f = c[i].feature;
      if (!(f.spec == spec)) throw std::invalid_argument("feature '" + f.id + "' is on a different spec");
      if (const auto* dense = std::get_if<DenseForm>(&f.form)) {
        values_[i] = dense->values;
        continue;
      }
      values_[i].resize(n);
      for (std::uint64_t code = 0; code < n; ++code) values_[i][code] = eval_feature(f, trajectory_from_code(spec, code));
    }
  }

  // Returns the Gibbs model and sets the log partition.
  CausalTable backward(const std::vector<double>& x, double& log_partition) const {
    const auto& spec = q_.spec();
    const int T = spec.horizon, H = spec.human_actions, M = spec.machine_actions;
    const auto n = trajectory_count(spec);
    std::vector<double> phi(n, 0.0);
    for (std::size_t i = 0; i < values_.size(); ++i)
      for (std::uint64_t c = 0; c < n; ++c) phi[c] += x[i] * values_[i][c];

    CausalTable p(spec, Side::human, cap_);
    std::vector<double> next_lz;  // log Z at human histories of step k+1
    std::vector<double> z(H);
    for (int k = T - 1; k >= 0; --k) {
      const std::size_t count = p.history_count(k);
      std::vector<double> lz(count);
      for (std::size_t idx = 0; idx < count; ++idx) {
        for (int h = 0; h < H; ++h) {
          const std::size_t after = idx * H + h;  // machine history of step k+1
          if (k == T - 1) {
            z[h] = phi[after];
          } else {
            z[h] = expect_anchored(q_.row(k + 1, after), std::span<const double>(next_lz).subspan(after * M, M));
          }
        }
        lz[idx] = softmax_inplace(z);
        std::copy(z.begin(), z.end(), p.row(k, idx).begin());
      }
      next_lz = std::move(lz);
    }
    log_partition = expect_anchored(q_.row(0, 0), next_lz);
    return p;
  }

  std::vector<double> moments(const CausalTable& p) const {
    const auto joint = factorize_joint(p, q_, cap_);
    std::vector<double> out(values_.size(), 0.0);
    for (std::size_t i = 0; i < values_.size(); ++i)
      for (std::size_t c = 0; c < joint.mass.size(); ++c) out[i] += joint.mass[c] * values_[i][c];
    return out;
  }

 private:
  CausalTable q_;
  std::uint64_t cap_;
  std::vector<std::vector<double>> values_;
};

struct CoreResult {
  std::vector<double> x;
  SolveStatus status = SolveStatus::max_iters;
  int iterations = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double residual_max = 0.0;
  std::vector<double> moments;
  std::vector<SolveTraceRow> trace;
};

// Projected first-order minimization of the dual. `eval(x)` returns the
// dual value and the model moments at x.
template <class Eval>
CoreResult minimize_dual(Eval eval, const std::vector<double>& targets, std::size_t n_eq, const EstimationOptions& opts,
                         std::vector<double> x) {
  const std::size_t n = targets.size();
  const auto project = [&](std::vector<double>& v) {
    for (std::size_t i = n_eq; i < n; ++i) v[i] = std::max(0.0, v[i]);
  };
  const auto gradient = [&](const Evaluation& e) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = e.moments[i] - targets[i];
    return g;
  };
  const auto projected_norm = [&](const std::vector<double>& v, const std::vector<double>& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double pg = i < n_eq ? g[i] : v[i] - std::max(0.0, v[i] - g[i]);
      s = std::max(s, std::abs(pg));
    }
    return s;
  };
  const auto residual = [&](const std::vector<double>& g) {
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) r = std::max(r, i < n_eq ? std::abs(g[i]) : std::max(0.0, -g[i]));
    return r;
  };
  const auto sup = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double a : v) s = std::max(s, std::abs(a));
    return s;
  };

  project(x);
  Evaluation cur = eval(x);
  std::vector<double> g = gradient(cur);
  CoreResult best{x, SolveStatus::max_iters, 0, cur.objective, projected_norm(x, g), residual(g), cur.moments, {}};
  std::vector<SolveTraceRow> trace;
  const bool tracing = !opts.trace_path.empty();

  double alpha = opts.learning_rate;
  std::deque<double> recent{cur.objective};
  SolveStatus status = SolveStatus::max_iters;
  int it = 0;
  for (; it <= opts.max_iters; ++it) {
    const double pgn = projected_norm(x, g);
    if (tracing) trace.push_back({it, cur.objective, pgn, residual(g), alpha});
    if (pgn < best.grad_norm || it == 0) {
      best.x = x;
      best.objective = cur.objective;
      best.grad_norm = pgn;
      best.residual_max = residual(g);
      best.moments = cur.moments;
    }
    if (pgn <= opts.grad_tol) {
      status = SolveStatus::converged;
      break;
    }
    if (sup(x) > opts.divergence_bound) {
      status = SolveStatus::infeasible;
      break;
    }
    if (it == opts.max_iters) break;

    if (opts.schedule != Schedule::adaptive) {
      const double eta =
          opts.schedule == Schedule::constant ? opts.learning_rate : opts.learning_rate / std::sqrt(it + 1.0);
      alpha = eta;
      for (std::size_t i = 0; i < n; ++i) x[i] -= eta * g[i];
      project(x);
      cur = eval(x);
      g = gradient(cur);
      continue;
    }

    // Spectral projected gradient with a nonmonotone Armijo test.
    std::vector<double> dir(n);
    for (std::size_t i = 0; i < n; ++i) dir[i] = x[i] - alpha * g[i];
    project(dir);
    for (std::size_t i = 0; i < n; ++i) dir[i] -= x[i];
    const double slope = dot(g, dir);
    const double ref = *std::max_element(recent.begin(), recent.end());
    const double slack = 1e-13 * (1.0 + std::abs(ref));
    double t = 1.0;
    std::vector<double> xn(n);
    Evaluation next;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < n; ++i) xn[i] = x[i] + t * dir[i];
      next = eval(xn);
      if (std::isfinite(next.objective) && next.objective <= ref + 1e-4 * t * slope + slack) break;
      t *= 0.5;
    }
    auto gn = gradient(next);
    double ss = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = xn[i] - x[i];
      ss += s * s;
      sy += s * (gn[i] - g[i]);
    }
    alpha = sy > 0.0 ? std::clamp(ss / sy, 1e-12, 1e12) : std::min(1e12, alpha * 10.0);
    x = xn;
    cur = std::move(next);
    g = std::move(gn);
    recent.push_back(cur.objective);
    if (recent.size() > 10) recent.pop_front();
  }
  best.status = status;
  best.iterations = it;
  best.trace = std::move(trace);
  if (status == SolveStatus::converged) {
    best.x = x;
    best.objective = cur.objective;
    best.grad_norm = projected_norm(x, g);
    best.residual_max = residual(g);
    best.moments = cur.moments;
  }
  return best;
}

std::vector<double> initial_point(const ConstraintSet& c, const DualVars* warm) {
  if (warm && warm->equality.size() == c.equality.size() && warm->inequality.size() == c.inequality.size())
    return warm->flat();
  return std::vector<double>(c.size(), 0.0);
}

}  // namespace

CausalTable backward_z_dense(const CausalTable& q, const DualVars& lambda, const ConstraintSet& c, std::uint64_t cap) {
  const auto x = checked_flat(lambda, c);
  double lp = 0.0;
  return DenseProblem(q, c, cap).backward(x, lp);
}

StructuredModel backward_z_structured(const StructuredPolicy& q, const DualVars& lambda, const ConstraintSet& c) {
  const auto x = checked_flat(lambda, c);
  return StructuredProblem(q, c).backward(x);
}

double stopping_time_survival(const StructuredModel& p, const StructuredPolicy& q, int t) {
  if (t < 0 || t > p.spec.horizon) throw std::invalid_argument("step out of range");
  return occupancy(p, q).survival(t);
}

std::vector<double> feature_moments_structured(const StructuredModel& p, const StructuredPolicy& q,
                                               const ConstraintSet& c) {
  std::vector<const StructuredForm*> forms;
  for (std::size_t i = 0; i < c.size(); ++i) forms.push_back(&c[i].feature.structured());
  const auto occ = occupancy(p, q, tree_of(forms));
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = occ.expect(c[i].feature);
  return out;
}

double dual_objective(const StructuredPolicy& q, const DualVars& lambda, const ConstraintSet& c) {
  const auto x = checked_flat(lambda, c);
  const auto p = StructuredProblem(q, c).backward(x);
  return p.log_partition - dot(x, targets_of(c));
}

double dual_objective(const CausalTable& q, const DualVars& lambda, const ConstraintSet& c, std::uint64_t cap) {
  const auto x = checked_flat(lambda, c);
  double lp = 0.0;
  DenseProblem(q, c, cap).backward(x, lp);
  return lp - dot(x, targets_of(c));
}

std::vector<double> dual_gradient(const StructuredPolicy& q, const DualVars& lambda, const ConstraintSet& c) {
  const auto x = checked_flat(lambda, c);
  const StructuredProblem prob(q, c);
  auto m = prob.moments(prob.forward(prob.backward(x)));
  for (std::size_t i = 0; i < m.size(); ++i) m[i] -= c[i].target;
  return m;
}

std::vector<double> dual_gradient(const CausalTable& q, const DualVars& lambda, const ConstraintSet& c,
                                  std::uint64_t cap) {
  const auto x = checked_flat(lambda, c);
  const DenseProblem prob(q, c, cap);
  double lp = 0.0;
  auto m = prob.moments(prob.backward(x, lp));
  for (std::size_t i = 0; i < m.size(); ++i) m[i] -= c[i].target;
  return m;
}

SolveResult<StructuredModel> solve_dual(const StructuredPolicy& q, const ConstraintSet& c,
                                        const EstimationOptions& opts, const DualVars* warm) {
  if (c.has_dense()) throw std::invalid_argument("dense features need the dense solver");
  const StructuredProblem prob(q, c);
  const auto targets = targets_of(c);
  const auto eval = [&](const std::vector<double>& x) {
    const auto p = prob.backward(x);
    return Evaluation{p.log_partition - dot(x, targets), prob.moments(prob.forward(p))};
  };
  auto core = minimize_dual(eval, targets, c.equality.size(), opts, initial_point(c, warm));
  if (!opts.trace_path.empty()) write_solve_trace(opts.trace_path, core.trace);
  SolveResult<StructuredModel> out;
  out.lambda = DualVars::from_flat(c, core.x);
  out.model = prob.backward(core.x);
  out.status = core.status;
  out.iterations = core.iterations;
  out.objective = core.objective;
  out.grad_norm = core.grad_norm;
  out.residual_max = core.residual_max;
  out.moments = std::move(core.moments);
  out.trace = std::move(core.trace);
  return out;
}

SolveResult<CausalTable> solve_dual(const CausalTable& q, const ConstraintSet& c, const EstimationOptions& opts,
                                    const DualVars* warm) {
  const DenseProblem prob(q, c, opts.cap);
  const auto targets = targets_of(c);
  const auto eval = [&](const std::vector<double>& x) {
    double lp = 0.0;
    const auto p = prob.backward(x, lp);
    return Evaluation{lp - dot(x, targets), prob.moments(p)};
  };
  auto core = minimize_dual(eval, targets, c.equality.size(), opts, initial_point(c, warm));
  if (!opts.trace_path.empty()) write_solve_trace(opts.trace_path, core.trace);
  SolveResult<CausalTable> out;
  out.lambda = DualVars::from_flat(c, core.x);
  double lp = 0.0;
  out.model = prob.backward(core.x, lp);
  out.status = core.status;
  out.iterations = core.iterations;
  out.objective = core.objective;
  out.grad_norm = core.grad_norm;
  out.residual_max = core.residual_max;
  out.moments = std::move(core.moments);
  out.trace = std::move(core.trace);
  return out;
}

namespace {

double lagrangian_terms(const std::vector<double>& x, const std::vector<double>& moments, const ConstraintSet& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) s += x[i] * (moments[i] - c[i].target);
  return s;
}

}  // namespace

Estimate<StructuredModel> estimate_human(const StructuredPolicy& q, const ConstraintSet& c,
                                         const EstimationOptions& opts, const DualVars* warm) {
  Estimate<StructuredModel> e;
  static_cast<SolveResult<StructuredModel>&>(e) = solve_dual(q, c, opts, warm);
  std::vector<const StructuredForm*> forms;
  for (std::size_t i = 0; i < c.size(); ++i) forms.push_back(&c[i].feature.structured());
  const auto occ = occupancy(e.model, q, tree_of(forms));
  e.causal_entropy = occ.human_entropy;
  std::vector<double> moments(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) moments[i] = occ.expect(c[i].feature);
  const auto x = e.lambda.flat();
  const double dual = e.model.log_partition - dot(x, targets_of(c));
  e.duality_gap = dual - (e.causal_entropy + lagrangian_terms(x, moments, c));
  return e;
}

Estimate<CausalTable> estimate_human(const CausalTable& q, const ConstraintSet& c, const EstimationOptions& opts,
                                     const DualVars* warm) {
  Estimate<CausalTable> e;
  static_cast<SolveResult<CausalTable>&>(e) = solve_dual(q, c, opts, warm);
  e.causal_entropy = causal_entropy(Side::human, e.model, q, opts.cap);
  const auto x = e.lambda.flat();
  const double dual = dual_objective(q, e.lambda, c, opts.cap);
  const DenseProblem prob(q, c, opts.cap);
  e.duality_gap = dual - (e.causal_entropy + lagrangian_terms(x, prob.moments(e.model), c));
  return e;
}

void write_solve_trace(const std::string& path, const std::vector<SolveTraceRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(17) << "iteration,objective,grad_norm,residual_max,step\n";
  for (const auto& r : rows)
    out << r.iteration << ',' << r.objective << ',' << r.grad_norm << ',' << r.residual_max << ',' << r.step << '\n';
}

}  // namespace area
