#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "area/features.hpp"
#include "area/process.hpp"
#include "area/structured.hpp"

namespace area {

// Multipliers in constraint-set order. Inequality multipliers are >= 0
// and enter the exponent with a positive sign (constraints read E[g] >= c).
struct DualVars {
  std::vector<double> equality;
  std::vector<double> inequality;

  static DualVars zeros(const ConstraintSet& c);
  std::vector<double> flat() const;
  static DualVars from_flat(const ConstraintSet& c, const std::vector<double>& x);
};

enum class Schedule { constant, inverse_sqrt, adaptive };

Schedule schedule_from_string(const std::string& s);
std::string to_string(Schedule s);

struct EstimationOptions {
  double learning_rate = 0.5;
  Schedule schedule = Schedule::adaptive;
  int max_iters = 5000;
  double grad_tol = 1e-5;
  double moment_tol = 1e-4;
  // Dual sup-norm beyond which the moments are declared infeasible.
  double divergence_bound = 1e6;
  std::string trace_path;
  std::uint64_t cap = default_trajectory_cap;
};

enum class SolveStatus { converged, max_iters, infeasible };
std::string to_string(SolveStatus s);

CausalTable backward_z_dense(const CausalTable& q, const DualVars& lambda, const ConstraintSet& c,
                             std::uint64_t cap = default_trajectory_cap);
StructuredModel backward_z_structured(const StructuredPolicy& q, const DualVars& lambda, const ConstraintSet& c);

double stopping_time_survival(const StructuredModel& p, const StructuredPolicy& q, int t);
std::vector<double> feature_moments_structured(const StructuredModel& p, const StructuredPolicy& q,
                                               const ConstraintSet& c);

double dual_objective(const StructuredPolicy& q, const DualVars& lambda, const ConstraintSet& c);
double dual_objective(const CausalTable& q, const DualVars& lambda, const ConstraintSet& c,
                      std::uint64_t cap = default_trajectory_cap);
std::vector<double> dual_gradient(const StructuredPolicy& q, const DualVars& lambda, const ConstraintSet& c);
std::vector<double> dual_gradient(const CausalTable& q, const DualVars& lambda, const ConstraintSet& c,
                                  std::uint64_t cap = default_trajectory_cap);

struct SolveTraceRow {
  int iteration = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double residual_max = 0.0;
  double step = 0.0;
};

template <class Model>
struct SolveResult {
  DualVars lambda;
  Model model;
  SolveStatus status = SolveStatus::max_iters;
  int iterations = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  // Equality: |E f - c|; inequality: max(0, c - E g).
  double residual_max = 0.0;
  std::vector<double> moments;
  std::vector<SolveTraceRow> trace;
};

SolveResult<StructuredModel> solve_dual(const StructuredPolicy& q, const ConstraintSet& c,
                                        const EstimationOptions& opts, const DualVars* warm = nullptr);
SolveResult<CausalTable> solve_dual(const CausalTable& q, const ConstraintSet& c, const EstimationOptions& opts,
                                    const DualVars* warm = nullptr);

template <class Model>
struct Estimate : SolveResult<Model> {
  double causal_entropy = 0.0;
  // Dual value minus the Lagrangian at the returned model.
  double duality_gap = 0.0;
};

Estimate<StructuredModel> estimate_human(const StructuredPolicy& q, const ConstraintSet& c,
                                         const EstimationOptions& opts, const DualVars* warm = nullptr);
Estimate<CausalTable> estimate_human(const CausalTable& q, const ConstraintSet& c, const EstimationOptions& opts,
                                     const DualVars* warm = nullptr);

void write_solve_trace(const std::string& path, const std::vector<SolveTraceRow>& rows);

}  // namespace area
