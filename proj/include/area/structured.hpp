#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "area/features.hpp"
#include "area/process.hpp"

namespace area {

// Trie over interleaved prefixes m_0, h_0, m_1, ... Node 0 is the empty
// prefix. Even-depth nodes wait for a machine move, odd-depth nodes for a
// human move.
class PrefixTree {
 public:
  PrefixTree();

  static constexpr int root = 0;
  std::size_t size() const { return nodes_.size(); }
  int depth(int n) const { return nodes_[n].depth; }
  int symbol(int n) const { return nodes_[n].symbol; }
  int parent(int n) const { return nodes_[n].parent; }
  bool awaits_machine(int n) const { return nodes_[n].depth % 2 == 0; }
  int child(int n, int sym) const;
  const std::vector<std::pair<int, int>>& children(int n) const { return nodes_[n].kids; }

  int add_child(int n, int sym);
  int insert(std::span<const int> prefix);
  int find(std::span<const int> prefix) const;
  std::vector<int> prefix(int n) const;

  int max_depth() const { return static_cast<int>(by_depth_.size()) - 1; }
  std::span<const int> at_depth(int d) const;
  std::size_t leaf_count() const;

  // For each node here, the node with the same prefix in `other` or -1.
  std::vector<int> align(const PrefixTree& other) const;
  void merge(const PrefixTree& other);

  // Last (h, m) before an even-depth node; h = -1 at the root.
  std::pair<int, int> last_pair(int n) const;

 private:
  struct Node {
    int parent;
    int depth;
    int symbol;
    std::vector<std::pair<int, int>> kids;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<int>> by_depth_;
};

// Machine policy: one-step Markov rows Q_k(m | h_{k-1}, m_{k-1}) off the
// tree, explicit rows at tree nodes that carry an override. Step 0 has a
// single row; a step stored with a single row for k >= 1 is product form.
class StructuredPolicy {
 public:
  StructuredPolicy() = default;
  static StructuredPolicy uniform(const ProcessSpec& spec);
  static StructuredPolicy product(const ProcessSpec& spec, std::vector<std::vector<double>> per_step);
  // steps[0] has |M| entries; steps[k] has |H||M||M| entries laid out as
  // (h_prev*|M| + m_prev)*|M| + m, or |M| entries for a product step.
  static StructuredPolicy markov(const ProcessSpec& spec, std::vector<std::vector<double>> steps);

  void set_override(std::span<const int> history, std::vector<double> probs);

  const ProcessSpec& spec() const { return spec_; }
  const PrefixTree& tree() const { return tree_; }
  bool product_form() const;
  std::span<const double> offtree(int k, int h_prev, int m_prev) const;
  // Off-tree row for product-form steps.
  std::span<const double> product_step(int k) const;
  const std::vector<double>* override_at(int node) const;
  // Conditional at the tree node `node` of this policy's tree, or at an
  // off-tree history ending in (h_prev, m_prev) when node < 0.
  std::span<const double> at_node(int node, int k, int h_prev, int m_prev) const;
  std::span<const double> at(std::span<const int> history) const;

  CausalTable to_dense(std::uint64_t cap = default_trajectory_cap) const;
  std::size_t entry_count() const;
  void validate() const;

 private:
  ProcessSpec spec_;
  std::vector<std::vector<double>> steps_;
  PrefixTree tree_;
  std::vector<std::vector<double>> overrides_;
};

// Human model: off the tree P_k(h | m) with log normalizers; at tree
// nodes awaiting a human move, explicit conditionals.
struct StructuredModel {
  ProcessSpec spec;
  std::vector<double> offpath;          // (k*|M| + m)*|H| + h
  std::vector<double> offpath_lognorm;  // k*|M| + m
  PrefixTree tree;
  std::vector<std::vector<double>> node_probs;  // human-move nodes only
  std::vector<double> node_lognorm;
  double log_partition = 0.0;

  static StructuredModel uniform(const ProcessSpec& spec);
  std::span<const double> offpath_at(int k, int m) const;
  std::span<const double> at(std::span<const int> history) const;
  CausalTable to_dense(std::uint64_t cap = default_trajectory_cap) const;
  std::size_t entry_count() const;
};

// Joint law of a human model and a machine policy summarized by per-step
// pair marginals and the probability of every tree prefix.
struct Occupancy {
  ProcessSpec spec;
  std::vector<double> pair_mass;  // P(H_k = h, M_k = m), step-table layout
  PrefixTree tree;
  std::vector<double> node_mass;
  double human_entropy = 0.0;
  double machine_entropy = 0.0;

  // Expectation of a table + path-term function; every path term must be a
  // tree prefix.
  double expect(std::span<const double> table, std::span<const PathTerm> paths) const;
  double expect(const Feature& f) const { return expect(f.structured().table, f.structured().paths); }
  double prefix_mass(std::span<const int> prefix) const;
  // P(T_D > t): probability that the first t steps stay on the tree.
  double survival(int t) const;
};

// Tree holding every path-term prefix of the given features.
PrefixTree tree_of(const std::vector<const StructuredForm*>& forms);

Occupancy occupancy(const StructuredModel& p, const StructuredPolicy& q, const PrefixTree& extra = PrefixTree());

// Policy sup-norm distance over every history.
double policy_distance(const StructuredPolicy& a, const StructuredPolicy& b);

nlohmann::json to_json(const StructuredPolicy& q);
StructuredPolicy structured_policy_from_json(const nlohmann::json& j);

namespace detail {

// Forward pass shared by model/policy pairs and synthetic humans.
// human_node(n) / machine_node(n) give conditionals at tree nodes;
// human_off(k, h_prev, m) / machine_off(k, h_prev, m_prev) off the tree
// (h_prev = 0 when k = 0).
template <class HumanNode, class HumanOff, class MachineNode, class MachineOff>
Occupancy forward_pass(const ProcessSpec& spec, PrefixTree tree, HumanNode human_node, HumanOff human_off,
                       MachineNode machine_node, MachineOff machine_off);

}  // namespace detail

}  // namespace area

#include "area/detail/forward_pass.hpp"
