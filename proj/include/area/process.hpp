#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace area {

// Steps are 0-based in code: step k covers the pair (m_k, h_k) and the
// machine moves first within a step.
struct ProcessSpec {
  int horizon = 1;
  int human_actions = 1;
  int machine_actions = 1;

  void validate() const;
  int pairs() const { return human_actions * machine_actions; }
  bool operator==(const ProcessSpec&) const = default;
};

enum class Side { human, machine };

struct Trajectory {
  std::vector<int> human;
  std::vector<int> machine;

  // m_0, h_0, m_1, h_1, ...
  std::vector<int> interleaved() const;
  void validate(const ProcessSpec& spec) const;
  bool operator==(const Trajectory&) const = default;
};

// Default ceiling on the number of trajectories any dense object may cover.
inline constexpr std::uint64_t default_trajectory_cap = 10'000'000;

// (|H||M|)^T, or UINT64_MAX if it does not fit.
std::uint64_t trajectory_count(const ProcessSpec& spec);
void require_under_cap(const ProcessSpec& spec, std::uint64_t cap);

// Mixed-radix code of an interleaved prefix; position 2k has radix |M|,
// position 2k+1 has radix |H|. A full-length prefix codes a trajectory.
std::uint64_t prefix_code(const ProcessSpec& spec, std::span<const int> prefix);
Trajectory trajectory_from_code(const ProcessSpec& spec, std::uint64_t code);

// Conditioning history of `side` at step k, taken from a trajectory:
// 2k+1 entries for the human side, 2k for the machine side.
std::span<const int> history_prefix(std::span<const int> interleaved, Side side, int k);

// Dense causally conditioned distribution for one side.
class CausalTable {
 public:
  CausalTable() = default;
  CausalTable(ProcessSpec spec, Side side, std::uint64_t cap = default_trajectory_cap);
  static CausalTable uniform(ProcessSpec spec, Side side, std::uint64_t cap = default_trajectory_cap);

  const ProcessSpec& spec() const { return spec_; }
  Side side() const { return side_; }
  int alphabet() const;
  std::size_t history_count(int k) const { return probs_[k].size() / alphabet(); }

  std::span<double> row(int k, std::size_t history);
  std::span<const double> row(int k, std::size_t history) const;
  // Conditional at step k for the history read off an interleaved prefix.
  std::span<const double> at(int k, std::span<const int> interleaved) const;

 private:
  ProcessSpec spec_;
  Side side_ = Side::human;
  std::vector<std::vector<double>> probs_;
};

struct JointDistribution {
  ProcessSpec spec;
  std::vector<double> mass;  // indexed by trajectory code
};

struct Violation {
  int step = 0;
  std::size_t history = 0;
  std::string defect;
};

std::vector<Violation> validate_causal(const CausalTable& table, double tol = 1e-12);

JointDistribution factorize_joint(const CausalTable& p, const CausalTable& q,
                                  std::uint64_t cap = default_trajectory_cap);

double causal_entropy(Side side, const CausalTable& p, const CausalTable& q,
                      std::uint64_t cap = default_trajectory_cap);

double expect_function(const CausalTable& p, const CausalTable& q,
                       const std::function<double(const Trajectory&)>& f,
                       std::uint64_t cap = default_trajectory_cap);

nlohmann::json to_json(const ProcessSpec& spec);
ProcessSpec spec_from_json(const nlohmann::json& j, const std::string& path = "spec");
nlohmann::json to_json(const CausalTable& table);
CausalTable causal_table_from_json(const nlohmann::json& j);

}  // namespace area
