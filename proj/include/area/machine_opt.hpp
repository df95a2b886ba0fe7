#pragma once

#include <vector>

#include "area/features.hpp"
#include "area/process.hpp"
#include "area/structured.hpp"

namespace area {

// log Y over every machine history.
struct DenseYTables {
  ProcessSpec spec;
  double gamma = 0.0;
  std::vector<std::vector<double>> log_y;     // step k: (history*|M| + m)
  std::vector<std::vector<double>> log_norm;  // step k: per machine history
  double log_partition = 0.0;
};

// Off the tree log Y depends on (k, m) only; tree nodes awaiting a machine
// move carry their own values.
struct StructuredYTables {
  ProcessSpec spec;
  double gamma = 0.0;
  std::vector<double> offpath_log_y;     // k*|M| + m
  std::vector<double> offpath_log_norm;  // k = 0..T, zero at T
  PrefixTree tree;
  std::vector<std::vector<double>> node_log_y;  // machine-move nodes below depth 2T
  std::vector<double> node_log_norm;
  double log_partition = 0.0;
};

DenseYTables backward_y_dense(const CausalTable& p, const RewardFunction& r, double gamma,
                              std::uint64_t cap = default_trajectory_cap);
StructuredYTables backward_y_structured(const StructuredModel& p, const RewardFunction& r, double gamma);

CausalTable extract_policy(const DenseYTables& y);
// Nodes whose values match the off-tree values are not stored.
StructuredPolicy extract_policy(const StructuredYTables& y);

double log_partition(const DenseYTables& y);
double log_partition(const StructuredYTables& y);

double machine_objective(const CausalTable& p, const CausalTable& q, const RewardFunction& r, double gamma,
                         std::uint64_t cap = default_trajectory_cap);

// Per-step product policy for a decomposable reward and a human model that
// is Markov in m_k.
std::vector<std::vector<double>> decomposable_policy(const StructuredModel& p, const RewardFunction& r, double gamma);

}  // namespace area
