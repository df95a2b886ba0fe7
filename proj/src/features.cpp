#include "area/features.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace area {

namespace {

void check_table(const ProcessSpec& spec, const std::vector<double>& table, const std::string& id) {
  if (!table.empty() && table.size() != step_table_size(spec))
    throw std::invalid_argument("feature '" + id + "': table shape does not match T x |H| x |M|");
  for (double v : table)
    if (!std::isfinite(v)) throw std::invalid_argument("feature '" + id + "': non-finite table entry");
}

void check_paths(const ProcessSpec& spec, const std::vector<PathTerm>& paths, const std::string& id) {
  for (const auto& p : paths) {
    if (p.prefix.empty() || p.prefix.size() > static_cast<std::size_t>(2 * spec.horizon))
      throw std::invalid_argument("feature '" + id + "': path prefix length out of range");
    for (std::size_t i = 0; i < p.prefix.size(); ++i) {
      const int radix = (i % 2 == 0) ? spec.machine_actions : spec.human_actions;
      if (p.prefix[i] < 0 || p.prefix[i] >= radix)
        throw std::invalid_argument("feature '" + id + "': path action out of range");
    }
    if (!std::isfinite(p.coefficient)) throw std::invalid_argument("feature '" + id + "': non-finite coefficient");
  }
}

double eval_structured(const ProcessSpec& spec, const std::vector<double>& table, const std::vector<PathTerm>& paths,
                       const Trajectory& traj) {
  double v = 0.0;
  if (!table.empty())
    for (int k = 0; k < spec.horizon; ++k) v += table[step_index(spec, k, traj.human[k], traj.machine[k])];
  if (!paths.empty()) {
    const auto seq = traj.interleaved();
    for (const auto& p : paths)
      if (prefix_matches(p.prefix, seq)) v += p.coefficient;
  }
  return v;
}

}  // namespace

const StructuredForm& Feature::structured() const {
  if (const auto* s = std::get_if<StructuredForm>(&form)) return *s;
  throw std::invalid_argument("feature '" + id + "' is dense; the structured path needs decomposable or path forms");
}

void Feature::validate() const {
  spec.validate();
  if (const auto* s = std::get_if<StructuredForm>(&form)) {
    check_table(spec, s->table, id);
    check_paths(spec, s->paths, id);
  } else {
    const auto& d = std::get<DenseForm>(form);
    if (d.values.size() != trajectory_count(spec))
      throw std::invalid_argument("feature '" + id + "': dense table does not cover every trajectory");
  }
}

Feature decomposable_feature(std::string id, const ProcessSpec& spec, std::vector<double> table) {
  Feature f{std::move(id), spec, StructuredForm{std::move(table), {}}};
  f.validate();
  return f;
}

Feature path_feature(std::string id, const ProcessSpec& spec, const Trajectory& path, double coefficient) {
  path.validate(spec);
  return prefix_feature(std::move(id), spec, path.interleaved(), coefficient);
}

Feature prefix_feature(std::string id, const ProcessSpec& spec, std::vector<int> prefix, double coefficient) {
  Feature f{std::move(id), spec, StructuredForm{{}, {PathTerm{std::move(prefix), coefficient}}}};
  f.validate();
  return f;
}

Feature dense_feature(std::string id, const ProcessSpec& spec, std::vector<double> values) {
  Feature f{std::move(id), spec, DenseForm{std::move(values)}};
  f.validate();
  return f;
}

bool prefix_matches(std::span<const int> prefix, std::span<const int> interleaved) {
  if (prefix.size() > interleaved.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (prefix[i] != interleaved[i]) return false;
  return true;
}

double eval_feature(const Feature& f, const Trajectory& traj) {
  traj.validate(f.spec);
  if (const auto* d = std::get_if<DenseForm>(&f.form)) return d->values[prefix_code(f.spec, traj.interleaved())];
  const auto& s = std::get<StructuredForm>(f.form);
  return eval_structured(f.spec, s.table, s.paths, traj);
}

Feature RewardFunction::as_feature(std::string id) const {
  Feature f{std::move(id), spec, StructuredForm{table, paths}};
  f.validate();
  return f;
}

void RewardFunction::validate() const {
  spec.validate();
  check_table(spec, table, "reward");
  check_paths(spec, paths, "reward");
}

double reward_eval(const RewardFunction& r, const Trajectory& traj) {
  traj.validate(r.spec);
  return eval_structured(r.spec, r.table, r.paths, traj);
}

std::vector<double> follow_table(const ProcessSpec& spec) {
  std::vector<double> t(step_table_size(spec), 0.0);
  for (int k = 0; k < spec.horizon; ++k)
    for (int a = 0; a < std::min(spec.human_actions, spec.machine_actions); ++a) t[step_index(spec, k, a, a)] = 1.0;
  return t;
}

std::vector<double> weighted_follow_table(const ProcessSpec& spec, int period, double off_weight) {
  if (period < 1) throw std::invalid_argument("period must be positive");
  auto t = follow_table(spec);
  for (int k = 0; k < spec.horizon; ++k) {
    if ((k + 1) % period == 0) continue;
    for (int h = 0; h < spec.human_actions; ++h)
      for (int m = 0; m < spec.machine_actions; ++m) t[step_index(spec, k, h, m)] *= off_weight;
  }
  return t;
}

std::vector<double> periodic_target_table(const ProcessSpec& spec, int target, int period) {
  if (period < 1) throw std::invalid_argument("period must be positive");
  if (target < 0 || target >= spec.human_actions) throw std::invalid_argument("target action out of range");
  std::vector<double> t(step_table_size(spec), 0.0);
  for (int k = 0; k < spec.horizon; ++k) {
    const bool on = (k + 1) % period == 0;
    for (int h = 0; h < spec.human_actions; ++h)
      for (int m = 0; m < spec.machine_actions; ++m) t[step_index(spec, k, h, m)] = on == (h == target) ? 1.0 : 0.0;
  }
  return t;
}

bool ConstraintSet::has_dense() const {
  for (std::size_t i = 0; i < size(); ++i)
    if ((*this)[i].feature.is_dense()) return true;
  return false;
}

ConstraintSet build_constraint_set(std::vector<Constraint> equality, std::vector<Constraint> inequality,
                                   const std::string& reward_id) {
  ConstraintSet cs;
  std::set<std::string> ids;
  for (auto* group : {&equality, &inequality})
    for (const auto& c : *group) {
      if (!ids.insert(c.feature.id).second) throw std::invalid_argument("duplicate feature id '" + c.feature.id + "'");
      if (!std::isfinite(c.target)) throw std::invalid_argument("non-finite target for '" + c.feature.id + "'");
      c.feature.validate();
    }
  for (const auto& c : equality)
    if (c.feature.id == reward_id) cs.includes_reward = true;
  if (!cs.includes_reward)
    cs.warnings.push_back("reward feature '" + reward_id + "' is not among the equality constraints");
  cs.equality = std::move(equality);
  cs.inequality = std::move(inequality);
  return cs;
}

}  // namespace area
