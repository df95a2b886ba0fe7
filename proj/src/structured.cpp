#include "area/structured.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "area/errors.hpp"

namespace area {

PrefixTree::PrefixTree() {
  nodes_.push_back({-1, 0, -1, {}});
  by_depth_.push_back({0});
}

int PrefixTree::child(int n, int sym) const {
  for (const auto& [s, c] : nodes_[n].kids)
    if (s == sym) return c;
  return -1;
}

int PrefixTree::add_child(int n, int sym) {
  if (const int c = child(n, sym); c >= 0) return c;
  const int id = static_cast<int>(nodes_.size());
  const int d = nodes_[n].depth + 1;
  nodes_.push_back({n, d, sym, {}});
  auto& kids = nodes_[n].kids;
  kids.insert(std::upper_bound(kids.begin(), kids.end(), std::make_pair(sym, id)), {sym, id});
  if (static_cast<int>(by_depth_.size()) <= d) by_depth_.resize(d + 1);
  by_depth_[d].push_back(id);
  return id;
}

int PrefixTree::insert(std::span<const int> prefix) {
  int n = root;
  for (int s : prefix) n = add_child(n, s);
  return n;
}

int PrefixTree::find(std::span<const int> prefix) const {
  int n = root;
  for (int s : prefix) {
    n = child(n, s);
    if (n < 0) return -1;
  }
  return n;
}

std::vector<int> PrefixTree::prefix(int n) const {
  std::vector<int> out(nodes_[n].depth);
  for (int i = nodes_[n].depth - 1; i >= 0; --i) {
    out[i] = nodes_[n].symbol;
    n = nodes_[n].parent;
  }
  return out;
}

std::span<const int> PrefixTree::at_depth(int d) const {
  if (d < 0 || d >= static_cast<int>(by_depth_.size())) return {};
  return by_depth_[d];
}

std::size_t PrefixTree::leaf_count() const {
  std::size_t n = 0;
  for (const auto& node : nodes_)
    if (node.kids.empty()) ++n;
  return n;
}

std::vector<int> PrefixTree::align(const PrefixTree& other) const {
  std::vector<int> map(nodes_.size(), -1);
  map[root] = root;
  for (std::size_t d = 1; d < by_depth_.size(); ++d)
    for (int n : by_depth_[d]) {
      const int p = map[nodes_[n].parent];
      map[n] = p < 0 ? -1 : other.child(p, nodes_[n].symbol);
    }
  return map;
}

void PrefixTree::merge(const PrefixTree& other) {
  std::vector<int> map(other.size(), -1);
  map[root] = root;
  for (int d = 1; d <= other.max_depth(); ++d)
    for (int n : other.at_depth(d)) map[n] = add_child(map[other.parent(n)], other.symbol(n));
}

std::pair<int, int> PrefixTree::last_pair(int n) const {
  if (n == root) return {-1, -1};
  return {nodes_[n].symbol, nodes_[nodes_[n].parent].symbol};
}

// ---------------------------------------------------------------- policy

namespace {

void check_distribution(std::span<const double> p, std::size_t n, const char* what) {
  if (p.size() != n) throw std::invalid_argument(std::string(what) + ": wrong row length");
  double total = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": invalid probability");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument(std::string(what) + ": row does not sum to 1");
}

}  // namespace

StructuredPolicy StructuredPolicy::uniform(const ProcessSpec& spec) {
  std::vector<std::vector<double>> steps(spec.horizon, std::vector<double>(spec.machine_actions, 1.0 / spec.machine_actions));
  return product(spec, std::move(steps));
}

StructuredPolicy StructuredPolicy::product(const ProcessSpec& spec, std::vector<std::vector<double>> per_step) {
  return markov(spec, std::move(per_step));
}

StructuredPolicy StructuredPolicy::markov(const ProcessSpec& spec, std::vector<std::vector<double>> steps) {
  spec.validate();
  if (static_cast<int>(steps.size()) != spec.horizon) throw std::invalid_argument("policy needs one table per step");
  StructuredPolicy q;
  q.spec_ = spec;
  q.steps_ = std::move(steps);
  q.overrides_.resize(1);
  q.validate();
  return q;
}

void StructuredPolicy::set_override(std::span<const int> history, std::vector<double> probs) {
  if (history.size() % 2 != 0 || history.size() >= static_cast<std::size_t>(2 * spec_.horizon))
    throw std::invalid_argument("override history must end after a human move");
  check_distribution(probs, spec_.machine_actions, "policy override");
  const int n = tree_.insert(history);
  overrides_.resize(tree_.size());
  overrides_[n] = std::move(probs);
}

bool StructuredPolicy::product_form() const {
  for (const auto& s : steps_)
    if (static_cast<int>(s.size()) != spec_.machine_actions) return false;
  return true;
}

std::span<const double> StructuredPolicy::offtree(int k, int h_prev, int m_prev) const {
  const auto& s = steps_[k];
  const int M = spec_.machine_actions;
  if (static_cast<int>(s.size()) == M) return s;
  return std::span<const double>(s).subspan((static_cast<std::size_t>(h_prev) * M + m_prev) * M, M);
}

std::span<const double> StructuredPolicy::product_step(int k) const {
  if (static_cast<int>(steps_[k].size()) != spec_.machine_actions)
    throw std::logic_error("policy step is not product form");
  return steps_[k];
}

const std::vector<double>* StructuredPolicy::override_at(int node) const {
  if (node < 0 || node >= static_cast<int>(overrides_.size()) || overrides_[node].empty()) return nullptr;
  return &overrides_[node];
}

std::span<const double> StructuredPolicy::at_node(int node, int k, int h_prev, int m_prev) const {
  if (const auto* o = override_at(node)) return *o;
  return offtree(k, std::max(h_prev, 0), std::max(m_prev, 0));
}

std::span<const double> StructuredPolicy::at(std::span<const int> history) const {
  const int k = static_cast<int>(history.size() / 2);
  const int node = tree_.find(history);
  const int hp = k > 0 ? history[2 * k - 1] : 0;
  const int mp = k > 0 ? history[2 * k - 2] : 0;
  return at_node(node, k, hp, mp);
}

CausalTable StructuredPolicy::to_dense(std::uint64_t cap) const {
  CausalTable t(spec_, Side::machine, cap);
  std::vector<int> hist;
  for (int k = 0; k < spec_.horizon; ++k) {
    hist.assign(2 * k, 0);
    for (std::size_t c = 0; c < t.history_count(k); ++c) {
      std::uint64_t code = c;
      for (int i = 2 * k - 1; i >= 0; --i) {
        const int radix = (i % 2 == 0) ? spec_.machine_actions : spec_.human_actions;
        hist[i] = static_cast<int>(code % radix);
        code /= radix;
      }
      const auto src = at(hist);
      std::copy(src.begin(), src.end(), t.row(k, c).begin());
    }
  }
  return t;
}

std::size_t StructuredPolicy::entry_count() const {
  std::size_t n = 0;
  for (const auto& s : steps_) n += s.size();
  for (const auto& o : overrides_) n += o.size();
  return n;
}

void StructuredPolicy::validate() const {
  const int H = spec_.human_actions, M = spec_.machine_actions;
  for (int k = 0; k < spec_.horizon; ++k) {
    const auto& s = steps_[k];
    if (static_cast<int>(s.size()) == M) {
      check_distribution(s, M, "policy step");
    } else if (k > 0 && s.size() == static_cast<std::size_t>(H) * M * M) {
      for (int r = 0; r < H * M; ++r) check_distribution(std::span<const double>(s).subspan(r * M, M), M, "policy step");
    } else {
      throw std::invalid_argument("policy step " + std::to_string(k) + " has the wrong shape");
    }
  }
}

// ---------------------------------------------------------------- model

StructuredModel StructuredModel::uniform(const ProcessSpec& spec) {
  StructuredModel p;
  p.spec = spec;
  const int T = spec.horizon, H = spec.human_actions, M = spec.machine_actions;
  p.offpath.assign(static_cast<std::size_t>(T) * M * H, 1.0 / H);
  p.offpath_lognorm.assign(static_cast<std::size_t>(T) * M, 0.0);
  for (int k = 0; k < T; ++k)
    for (int m = 0; m < M; ++m) p.offpath_lognorm[k * M + m] = (T - k) * std::log(static_cast<double>(H));
  p.node_probs.resize(1);
  p.node_lognorm.assign(1, 0.0);
  p.log_partition = T * std::log(static_cast<double>(H));
  return p;
}

std::span<const double> StructuredModel::offpath_at(int k, int m) const {
  const int H = spec.human_actions;
  return std::span<const double>(offpath).subspan((static_cast<std::size_t>(k) * spec.machine_actions + m) * H, H);
}

std::span<const double> StructuredModel::at(std::span<const int> history) const {
  const int k = static_cast<int>(history.size() / 2);
  const int node = tree.find(history);
  if (node >= 0 && !node_probs[node].empty()) return node_probs[node];
  return offpath_at(k, history.back());
}

CausalTable StructuredModel::to_dense(std::uint64_t cap) const {
  CausalTable t(spec, Side::human, cap);
  std::vector<int> hist;
  for (int k = 0; k < spec.horizon; ++k) {
    hist.assign(2 * k + 1, 0);
    for (std::size_t c = 0; c < t.history_count(k); ++c) {
      std::uint64_t code = c;
      for (int i = 2 * k; i >= 0; --i) {
        const int radix = (i % 2 == 0) ? spec.machine_actions : spec.human_actions;
        hist[i] = static_cast<int>(code % radix);
        code /= radix;
      }
      const auto src = at(hist);
      std::copy(src.begin(), src.end(), t.row(k, c).begin());
    }
  }
  return t;
}

std::size_t StructuredModel::entry_count() const {
  std::size_t n = offpath.size() + offpath_lognorm.size();
  for (std::size_t i = 0; i < node_probs.size(); ++i)
    if (!node_probs[i].empty()) n += node_probs[i].size() + 1;
  return n;
}

// ---------------------------------------------------------------- occupancy

double Occupancy::expect(std::span<const double> table, std::span<const PathTerm> paths) const {
  double v = 0.0;
  if (!table.empty())
    for (std::size_t i = 0; i < pair_mass.size(); ++i) v += table[i] * pair_mass[i];
  for (const auto& p : paths) v += p.coefficient * prefix_mass(p.prefix);
  return v;
}

double Occupancy::prefix_mass(std::span<const int> prefix) const {
  const int n = tree.find(prefix);
  if (n < 0) throw std::logic_error("path prefix missing from the occupancy tree");
  return node_mass[n];
}

double Occupancy::survival(int t) const {
  double s = 0.0;
  for (int v : tree.at_depth(2 * t)) s += node_mass[v];
  return s;
}

PrefixTree tree_of(const std::vector<const StructuredForm*>& forms) {
  PrefixTree t;
  for (const auto* f : forms)
    for (const auto& p : f->paths) t.insert(p.prefix);
  return t;
}

Occupancy occupancy(const StructuredModel& p, const StructuredPolicy& q, const PrefixTree& extra) {
  PrefixTree tree = p.tree;
  tree.merge(q.tree());
  tree.merge(extra);
  const auto to_p = tree.align(p.tree);
  const auto to_q = tree.align(q.tree());
  const auto human_node = [&](int u) -> std::span<const double> {
    const int pu = to_p[u];
    if (pu >= 0 && !p.node_probs[pu].empty()) return p.node_probs[pu];
    return p.offpath_at(tree.depth(u) / 2, tree.symbol(u));
  };
  const auto human_off = [&](int k, int, int m) { return p.offpath_at(k, m); };
  const auto machine_node = [&](int v) {
    const auto [hp, mp] = tree.last_pair(v);
    return q.at_node(to_q[v], tree.depth(v) / 2, hp, mp);
  };
  const auto machine_off = [&](int k, int hp, int mp) { return q.offtree(k, hp, mp); };
  return detail::forward_pass(p.spec, tree, human_node, human_off, machine_node, machine_off);
}

double policy_distance(const StructuredPolicy& a, const StructuredPolicy& b) {
  if (!(a.spec() == b.spec())) throw std::invalid_argument("policies on different specs");
  const auto& s = a.spec();
  double d = 0.0;
  const auto cmp = [&](std::span<const double> x, std::span<const double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) d = std::max(d, std::abs(x[i] - y[i]));
  };
  for (int k = 0; k < s.horizon; ++k)
    for (int hp = 0; hp < (k == 0 ? 1 : s.human_actions); ++hp)
      for (int mp = 0; mp < (k == 0 ? 1 : s.machine_actions); ++mp) cmp(a.offtree(k, hp, mp), b.offtree(k, hp, mp));
  PrefixTree u = a.tree();
  u.merge(b.tree());
  for (std::size_t n = 0; n < u.size(); ++n) {
    if (!u.awaits_machine(static_cast<int>(n)) || u.depth(static_cast<int>(n)) >= 2 * s.horizon) continue;
    const auto hist = u.prefix(static_cast<int>(n));
    cmp(a.at(hist), b.at(hist));
  }
  return d;
}

nlohmann::json to_json(const StructuredPolicy& q) {
  nlohmann::json steps = nlohmann::json::array();
  for (int k = 0; k < q.spec().horizon; ++k) {
    const bool product = k == 0 || q.offtree(k, 0, 0).size() == static_cast<std::size_t>(q.spec().machine_actions);
    nlohmann::json rows = nlohmann::json::array();
    if (product) {
      const auto r = q.offtree(k, 0, 0);
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    } else {
      for (int hp = 0; hp < q.spec().human_actions; ++hp)
        for (int mp = 0; mp < q.spec().machine_actions; ++mp) {
          const auto r = q.offtree(k, hp, mp);
          rows.push_back(std::vector<double>(r.begin(), r.end()));
        }
    }
    steps.push_back(rows);
  }
  nlohmann::json tree = nlohmann::json::array();
  const auto& t = q.tree();
  for (std::size_t n = 0; n < t.size(); ++n)
    if (const auto* o = q.override_at(static_cast<int>(n)))
      tree.push_back({{"history", t.prefix(static_cast<int>(n))}, {"probs", *o}});
  return {{"spec", to_json(q.spec())}, {"side", "machine"}, {"offtree", steps}, {"tree", tree}};
}

StructuredPolicy structured_policy_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("spec") || !j.contains("offtree"))
    throw ConfigError("", "expected {spec, offtree, tree}");
  const auto spec = spec_from_json(j.at("spec"));
  const auto& steps_j = j.at("offtree");
  if (!steps_j.is_array() || static_cast<int>(steps_j.size()) != spec.horizon)
    throw ConfigError("offtree", "expected one entry per step");
  std::vector<std::vector<double>> steps;
  for (const auto& rows : steps_j) {
    std::vector<double> flat;
    for (const auto& r : rows) {
      const auto v = r.get<std::vector<double>>();
      flat.insert(flat.end(), v.begin(), v.end());
    }
    steps.push_back(std::move(flat));
  }
  StructuredPolicy q;
  try {
    q = StructuredPolicy::markov(spec, std::move(steps));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("offtree", e.what());
  }
  if (j.contains("tree")) {
    const auto& tree = j.at("tree");
    for (std::size_t i = 0; i < tree.size(); ++i) {
      try {
        q.set_override(tree[i].at("history").get<std::vector<int>>(), tree[i].at("probs").get<std::vector<double>>());
      } catch (const std::exception& e) {
        throw ConfigError("tree[" + std::to_string(i) + "]", e.what());
      }
    }
  }
  return q;
}

}  // namespace area
