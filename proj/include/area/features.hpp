#pragma once

#include <string>
#include <variant>
#include <vector>

#include "area/process.hpp"

namespace area {

// Per-step table f_k(h, m), flattened as (k*|H| + h)*|M| + m.
inline std::size_t step_index(const ProcessSpec& s, int k, int h, int m) {
  return (static_cast<std::size_t>(k) * s.human_actions + h) * s.machine_actions + m;
}
inline std::size_t step_table_size(const ProcessSpec& s) {
  return static_cast<std::size_t>(s.horizon) * s.human_actions * s.machine_actions;
}

// coefficient * 1{the interleaved trajectory starts with `prefix`}.
// A prefix of length 2T is a single-trajectory indicator.
struct PathTerm {
  std::vector<int> prefix;
  double coefficient = 1.0;
};

struct StructuredForm {
  std::vector<double> table;  // empty means zero
  std::vector<PathTerm> paths;
};

struct DenseForm {
  std::vector<double> values;  // indexed by trajectory code
};

struct Feature {
  std::string id;
  ProcessSpec spec;
  std::variant<StructuredForm, DenseForm> form;

  bool is_dense() const { return std::holds_alternative<DenseForm>(form); }
  const StructuredForm& structured() const;
  void validate() const;
};

Feature decomposable_feature(std::string id, const ProcessSpec& spec, std::vector<double> table);
Feature path_feature(std::string id, const ProcessSpec& spec, const Trajectory& path, double coefficient = 1.0);
Feature prefix_feature(std::string id, const ProcessSpec& spec, std::vector<int> prefix, double coefficient = 1.0);
Feature dense_feature(std::string id, const ProcessSpec& spec, std::vector<double> values);

bool prefix_matches(std::span<const int> prefix, std::span<const int> interleaved);
double eval_feature(const Feature& f, const Trajectory& traj);

struct RewardFunction {
  ProcessSpec spec;
  std::vector<double> table;  // empty means zero
  std::vector<PathTerm> paths;

  bool decomposable_only() const { return paths.empty(); }
  Feature as_feature(std::string id = "reward") const;
  void validate() const;
};

double reward_eval(const RewardFunction& r, const Trajectory& traj);

// Named builders. Steps are 1-based in the period tests: "t mod period == 0"
// refers to t = k + 1.
std::vector<double> follow_table(const ProcessSpec& spec);
std::vector<double> weighted_follow_table(const ProcessSpec& spec, int period = 5, double off_weight = 0.25);
std::vector<double> periodic_target_table(const ProcessSpec& spec, int target = 0, int period = 5);

struct Constraint {
  Feature feature;
  double target = 0.0;
};

// Inequalities read E[g] >= target.
struct ConstraintSet {
  std::vector<Constraint> equality;
  std::vector<Constraint> inequality;
  bool includes_reward = false;
  std::vector<std::string> warnings;

  std::size_t size() const { return equality.size() + inequality.size(); }
  const Constraint& operator[](std::size_t i) const {
    return i < equality.size() ? equality[i] : inequality[i - equality.size()];
  }
  bool has_dense() const;
};

ConstraintSet build_constraint_set(std::vector<Constraint> equality, std::vector<Constraint> inequality,
                                   const std::string& reward_id = "reward");

}  // namespace area
