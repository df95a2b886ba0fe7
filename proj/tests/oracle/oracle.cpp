#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace oracle {

using area::CausalTable;
using area::ProcessSpec;
using area::Trajectory;
using Seq = std::vector<int>;

namespace {

int radix_at(const ProcessSpec& s, std::size_t pos) { return pos % 2 == 0 ? s.machine_actions : s.human_actions; }

Trajectory to_traj(const Seq& seq) {
  Trajectory t;
  for (std::size_t i = 0; i < seq.size(); i += 2) {
    t.machine.push_back(seq[i]);
    t.human.push_back(seq[i + 1]);
  }
  return t;
}

// Row of a dense table for the history held in `seq` (its full length is
// the conditioning history).
std::vector<double> row_for(const CausalTable& table, const Seq& history) {
  const ProcessSpec& s = table.spec();
  std::uint64_t code = 0;
  for (std::size_t i = 0; i < history.size(); ++i) code = code * radix_at(s, i) + history[i];
  const int k = static_cast<int>(history.size() / 2);
  const auto r = table.row(k, code);
  return {r.begin(), r.end()};
}

double naive_eval(const area::Feature& f, const Trajectory& t) {
  if (const auto* d = std::get_if<area::DenseForm>(&f.form)) {
    // Dense features are indexed by code; recompute it here.
    const Seq seq = t.interleaved();
    std::uint64_t code = 0;
    for (std::size_t i = 0; i < seq.size(); ++i) code = code * radix_at(f.spec, i) + seq[i];
    return d->values[code];
  }
  const auto& s = std::get<area::StructuredForm>(f.form);
  double v = 0.0;
  for (int k = 0; k < f.spec.horizon; ++k)
    if (!s.table.empty())
      v += s.table[(static_cast<std::size_t>(k) * f.spec.human_actions + t.human[k]) * f.spec.machine_actions +
                   t.machine[k]];
  const Seq seq = t.interleaved();
  for (const auto& p : s.paths)
    if (std::equal(p.prefix.begin(), p.prefix.end(), seq.begin())) v += p.coefficient;
  return v;
}

double naive_reward(const area::RewardFunction& r, const Trajectory& t) {
  area::Feature f{"r", r.spec, area::StructuredForm{r.table, r.paths}};
  return naive_eval(f, t);
}

void enumerate_into(const ProcessSpec& s, Seq& cur, std::vector<Trajectory>& out) {
  if (cur.size() == static_cast<std::size_t>(2 * s.horizon)) {
    out.push_back(to_traj(cur));
    return;
  }
  for (int a = 0; a < radix_at(s, cur.size()); ++a) {
    cur.push_back(a);
    enumerate_into(s, cur, out);
    cur.pop_back();
  }
}

// All histories of a given length.
std::vector<Seq> histories(const ProcessSpec& s, std::size_t len) {
  std::vector<Seq> out{Seq{}};
  for (std::size_t pos = 0; pos < len; ++pos) {
    std::vector<Seq> next;
    for (const auto& h : out)
      for (int a = 0; a < radix_at(s, pos); ++a) {
        next.push_back(h);
        next.back().push_back(a);
      }
    out = std::move(next);
  }
  return out;
}

void project_simplex(std::vector<double>& v, double floor) {
  const std::size_t n = v.size();
  const double mass = 1.0 - floor * n;
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = v[i] - floor;
  std::vector<double> s = u;
  std::sort(s.begin(), s.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cum += s[i];
    const double t = (cum - mass) / (i + 1.0);
    if (s[i] - t > 0.0) theta = t;
  }
  for (std::size_t i = 0; i < n; ++i) v[i] = std::max(u[i] - theta, 0.0) + floor;
}

}  // namespace

std::vector<Trajectory> enumerate_trajectories(const ProcessSpec& spec, const OracleBudget& budget) {
  double n = 1.0;
  for (int k = 0; k < spec.horizon; ++k) n *= spec.human_actions * spec.machine_actions;
  if (n > static_cast<double>(budget.max_trajectories)) throw std::length_error("oracle budget exceeded");
  std::vector<Trajectory> out;
  Seq cur;
  enumerate_into(spec, cur, out);
  return out;
}

double trajectory_probability(const CausalTable& p, const CausalTable& q, const Trajectory& t) {
  const Seq seq = t.interleaved();
  double prob = 1.0;
  for (std::size_t pos = 0; pos < seq.size(); ++pos) {
    const Seq hist(seq.begin(), seq.begin() + pos);
    prob *= row_for(pos % 2 == 0 ? q : p, hist)[seq[pos]];
  }
  return prob;
}

double expectation(const CausalTable& p, const CausalTable& q, const std::function<double(const Trajectory&)>& f) {
  double s = 0.0;
  for (const auto& t : enumerate_trajectories(p.spec())) {
    const double w = trajectory_probability(p, q, t);
    if (w > 0.0) s += w * f(t);
  }
  return s;
}

GibbsResult naive_gibbs(const CausalTable& q, const area::ConstraintSet& c, const std::vector<double>& lambda) {
  const ProcessSpec& s = q.spec();
  const int T = s.horizon;
  std::map<Seq, double> z_after_h;  // Z(h_k | h^{k-1}, m^k), keyed by the prefix ending in h_k
  std::map<Seq, double> z_after_m;  // Z(h^{k-1}, m^k), keyed by the prefix ending in m_k
  const auto phi = [&](const Seq& seq) {
    const Trajectory t = to_traj(seq);
    double v = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) v += lambda[i] * naive_eval(c[i].feature, t);
    return v;
  };
  for (int k = T - 1; k >= 0; --k) {
    for (const auto& hist : histories(s, 2 * k + 1)) {
      double total = 0.0;
      for (int h = 0; h < s.human_actions; ++h) {
        Seq next = hist;
        next.push_back(h);
        double z;
        if (k == T - 1) {
          z = std::exp(phi(next));
        } else {
          const auto qr = row_for(q, next);
          double e = 0.0;
          for (int m = 0; m < s.machine_actions; ++m) {
            Seq nm = next;
            nm.push_back(m);
            if (qr[m] > 0.0) e += qr[m] * std::log(z_after_m.at(nm));
          }
          z = std::exp(e);
        }
        z_after_h[next] = z;
        total += z;
      }
      z_after_m[hist] = total;
    }
  }
  GibbsResult out{CausalTable(s, area::Side::human), 0.0};
  for (int k = 0; k < T; ++k)
    for (const auto& hist : histories(s, 2 * k + 1)) {
      std::uint64_t code = 0;
      for (std::size_t i = 0; i < hist.size(); ++i) code = code * radix_at(s, i) + hist[i];
      auto r = out.model.row(k, code);
      for (int h = 0; h < s.human_actions; ++h) {
        Seq next = hist;
        next.push_back(h);
        r[h] = z_after_h.at(next) / z_after_m.at(hist);
      }
    }
  const auto q0 = row_for(q, {});
  for (int m = 0; m < s.machine_actions; ++m)
    if (q0[m] > 0.0) out.dual += q0[m] * std::log(z_after_m.at(Seq{m}));
  for (std::size_t i = 0; i < c.size(); ++i) out.dual -= lambda[i] * c[i].target;
  return out;
}

CausalTable naive_machine_policy(const CausalTable& p, const area::RewardFunction& r, double gamma,
                                 double* log_partition) {
  const ProcessSpec& s = p.spec();
  const int T = s.horizon;
  std::map<Seq, double> y_m;     // Y(m_k | history), keyed by prefix ending in m_k
  std::map<Seq, double> y_hist;  // Y(h^{k}, m^{k}), keyed by prefix of length 2k
  for (int k = T - 1; k >= 0; --k) {
    for (const auto& hist : histories(s, 2 * k)) {
      double total = 0.0;
      for (int m = 0; m < s.machine_actions; ++m) {
        Seq hm = hist;
        hm.push_back(m);
        const auto pr = row_for(p, hm);
        double e = 0.0;
        for (int h = 0; h < s.human_actions; ++h) {
          Seq next = hm;
          next.push_back(h);
          if (pr[h] <= 0.0) continue;
          e += pr[h] * (k == T - 1 ? gamma * naive_reward(r, to_traj(next)) : std::log(y_hist.at(next)));
        }
        y_m[hm] = std::exp(e);
        total += y_m[hm];
      }
      y_hist[hist] = total;
    }
  }
  CausalTable q(s, area::Side::machine);
  for (int k = 0; k < T; ++k)
    for (const auto& hist : histories(s, 2 * k)) {
      std::uint64_t code = 0;
      for (std::size_t i = 0; i < hist.size(); ++i) code = code * radix_at(s, i) + hist[i];
      auto row = q.row(k, code);
      for (int m = 0; m < s.machine_actions; ++m) {
        Seq hm = hist;
        hm.push_back(m);
        row[m] = y_m.at(hm) / y_hist.at(hist);
      }
    }
  if (log_partition) *log_partition = std::log(y_hist.at(Seq{}));
  return q;
}

double naive_machine_objective(const CausalTable& p, const CausalTable& q, const area::RewardFunction& r,
                               double gamma) {
  double total = 0.0;
  for (const auto& t : enumerate_trajectories(p.spec())) {
    const double w = trajectory_probability(p, q, t);
    if (w <= 0.0) continue;
    const Seq seq = t.interleaved();
    double qc = 1.0;
    for (std::size_t pos = 0; pos < seq.size(); pos += 2) qc *= row_for(q, Seq(seq.begin(), seq.begin() + pos))[seq[pos]];
    total += w * (-std::log(qc) + gamma * naive_reward(r, t));
  }
  return total;
}

double naive_causal_entropy(area::Side side, const CausalTable& p, const CausalTable& q) {
  double total = 0.0;
  const std::size_t start = side == area::Side::machine ? 0 : 1;
  for (const auto& t : enumerate_trajectories(p.spec())) {
    const double w = trajectory_probability(p, q, t);
    if (w <= 0.0) continue;
    const Seq seq = t.interleaved();
    double f = 1.0;
    for (std::size_t pos = start; pos < seq.size(); pos += 2)
      f *= row_for(pos % 2 == 0 ? q : p, Seq(seq.begin(), seq.begin() + pos))[seq[pos]];
    total -= w * std::log(f);
  }
  return total;
}

MachineOptResult oracle_machine_opt(const CausalTable& p, const area::RewardFunction& r, double gamma,
                                    const OracleBudget& budget) {
  const ProcessSpec& s = p.spec();
  const auto trajs = enumerate_trajectories(s, budget);
  const int T = s.horizon, M = s.machine_actions;
  std::vector<double> reward(trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i) reward[i] = naive_reward(r, trajs[i]);

  // Machine histories in a fixed order and the codes of each trajectory's
  // machine decisions.
  std::vector<std::vector<Seq>> hists(T);
  std::map<Seq, std::size_t> index;
  std::size_t rows = 0;
  for (int k = 0; k < T; ++k)
    for (auto& h : histories(s, 2 * k)) {
      index[h] = rows++;
      hists[k].push_back(h);
    }
  std::vector<std::vector<double>> pol(rows, std::vector<double>(M, 1.0 / M));
  std::vector<std::vector<std::size_t>> visit(trajs.size(), std::vector<std::size_t>(T));
  std::vector<double> human_prob(trajs.size(), 1.0);
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const Seq seq = trajs[i].interleaved();
    for (int k = 0; k < T; ++k) {
      visit[i][k] = index.at(Seq(seq.begin(), seq.begin() + 2 * k));
      human_prob[i] *= row_for(p, Seq(seq.begin(), seq.begin() + 2 * k + 1))[seq[2 * k + 1]];
    }
  }
  const auto objective = [&](const std::vector<std::vector<double>>& q) {
    double total = 0.0;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
      double qc = 1.0;
      for (int k = 0; k < T; ++k) qc *= q[visit[i][k]][trajs[i].machine[k]];
      const double w = human_prob[i] * qc;
      if (w > 0.0) total += w * (-std::log(qc) + gamma * reward[i]);
    }
    return total;
  };
  // Gradient of the objective divided by the probability of reaching each
  // history: E[g - 1 | history, action].
  const auto gradient = [&](const std::vector<std::vector<double>>& q) {
    std::vector<std::vector<double>> g(rows, std::vector<double>(M, 0.0));
    std::vector<double> reach(rows, 0.0);
    for (std::size_t i = 0; i < trajs.size(); ++i) {
      double qc = 1.0;
      for (int k = 0; k < T; ++k) qc *= q[visit[i][k]][trajs[i].machine[k]];
      const double w = human_prob[i] * qc;
      const double gval = -std::log(qc) + gamma * reward[i];
      for (int k = 0; k < T; ++k) {
        const std::size_t x = visit[i][k];
        const int a = trajs[i].machine[k];
        g[x][a] += w / q[x][a] * (gval - 1.0);
        reach[x] += w;
      }
    }
    // reach[x] accumulated once per trajectory through x: equals PQ(x).
    for (std::size_t x = 0; x < rows; ++x)
      if (reach[x] > 0.0)
        for (int a = 0; a < M; ++a) g[x][a] /= reach[x];
    return g;
  };

  const double floor = 1e-12;
  MachineOptResult out{CausalTable(s, area::Side::machine), objective(pol), 0, false};
  double step = 1.0;
  for (int it = 0; it < budget.max_gradient_iters; ++it) {
    const auto g = gradient(pol);
    const double f0 = objective(pol);
    // Projected-gradient stationarity measure at unit step.
    double stat = 0.0;
    for (std::size_t x = 0; x < rows; ++x) {
      std::vector<double> trial(M);
      for (int a = 0; a < M; ++a) trial[a] = pol[x][a] + g[x][a];
      project_simplex(trial, floor);
      for (int a = 0; a < M; ++a) stat = std::max(stat, std::abs(trial[a] - pol[x][a]));
    }
    out.iterations = it;
    if (stat <= budget.tolerance) {
      out.converged = true;
      break;
    }
    step = std::min(step * 2.0, 1e3);
    bool accepted = false;
    while (step > 1e-14) {
      auto cand = pol;
      for (std::size_t x = 0; x < rows; ++x) {
        for (int a = 0; a < M; ++a) cand[x][a] += step * g[x][a];
        project_simplex(cand[x], floor);
      }
      const double f1 = objective(cand);
      if (f1 >= f0) {
        pol = std::move(cand);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  for (int k = 0; k < T; ++k)
    for (std::size_t i = 0; i < hists[k].size(); ++i) {
      auto row = out.policy.row(k, i);
      const auto& src = pol[index.at(hists[k][i])];
      std::copy(src.begin(), src.end(), row.begin());
    }
  out.objective = objective(pol);
  return out;
}

double duality_gap(const CausalTable& q, const area::ConstraintSet& c, const std::vector<double>& lambda,
                   const CausalTable& p) {
  const double dual = naive_gibbs(q, c, lambda).dual;
  double lag = naive_causal_entropy(area::Side::human, p, q);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& f = c[i].feature;
    lag += lambda[i] * (expectation(p, q, [&](const Trajectory& t) { return naive_eval(f, t); }) - c[i].target);
  }
  return dual - lag;
}

}  // namespace oracle
