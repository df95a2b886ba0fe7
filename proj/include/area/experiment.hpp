#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "area/area_loop.hpp"
#include "area/qlearning.hpp"

namespace area {

inline constexpr int config_schema_version = 1;
inline constexpr const char* library_version = "1.0.0";

struct MomentConfig {
  MomentSource::Kind kind = MomentSource::Kind::exact;
  std::size_t samples_per_iteration = 100;
  // Exact moments need a human with closed-form moments: a Markov model
  // distilled from LCA play under the uniform policy.
  std::size_t surrogate_samples = 100'000;
  bool surrogate_previous_human = false;
};

struct ConvergenceConfig {
  std::vector<std::size_t> sample_sizes{10, 100, 1000};
  int seeds = 5;
};

struct ComparisonConfig {
  std::size_t samples_per_iteration = 10;
  int iterations = 10;
  int episodes = 100;
};

struct ScalingConfig {
  std::vector<int> horizons{10, 20, 40, 80};
  int human_actions = 3;
  int machine_actions = 3;
  int repeats = 5;
};

struct ExperimentConfig {
  std::string name;
  ProcessSpec spec;
  std::vector<Feature> features;  // equality constraints, targets from the moment source
  std::vector<Constraint> inequality;
  RewardFunction reward;
  double gamma = 1.0;
  int iterations = 10;
  bool step_constraint = true;
  MomentConfig moments;
  EstimationOptions estimation;
  LcaParams lca;
  QlParams qlearning;
  int rounds = 5;
  ConvergenceConfig convergence;
  ComparisonConfig comparison;
  ScalingConfig scaling;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  nlohmann::json source;  // document as loaded
};

// Throws ConfigError with a dotted field path.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

std::uint64_t fnv1a64(std::string_view bytes);
// Hash of the compact dump of the loaded document, 16 hex digits.
std::string config_hash(const nlohmann::json& doc);

AreaProblem make_problem(const ExperimentConfig& cfg);
std::shared_ptr<const Human> make_surrogate_human(const ExperimentConfig& cfg, std::uint64_t seed);
MomentSource make_source(const ExperimentConfig& cfg, std::uint64_t seed, int threads);
AreaOptions make_area_options(const ExperimentConfig& cfg);

// Runs fn(0..count-1) on up to `threads` workers; results keep index order.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

struct Interval {
  double mean = 0.0;
  double low = 0.0;
  double high = 0.0;
};
// Student-t interval for the mean; collapses to the mean for one value.
Interval student_t_interval(const std::vector<double>& xs, double level = 0.9);

// ---------------------------------------------------------------- convergence

struct ConvergenceSeries {
  std::string label;            // "exact" or "N=<size>"
  std::size_t sample_size = 0;  // 0 for exact
  int replicate = 0;
  AreaTrace trace;
};

std::vector<ConvergenceSeries> reproduce_convergence(const ExperimentConfig& cfg, int threads = 1,
                                                     bool include_exact = true);
// Columns: series, sample_size, replicate, iteration, L.
void write_convergence_csv(const std::string& path, const std::vector<ConvergenceSeries>& series);
// Mean over iterations of |L(n+1) - L(n)|.
double mean_abs_step(const AreaTrace& trace);

// ---------------------------------------------------------------- comparison

struct ComparisonRound {
  std::vector<std::size_t> samples;  // checkpoints, 0 first
  std::vector<double> area_reward, area_entropy;
  std::vector<double> ql_reward, ql_entropy;
};

struct ComparisonPoint {
  std::size_t samples_observed = 0;
  std::string method;
  Interval reward;
  Interval entropy;
};

struct ComparisonResult {
  std::vector<ComparisonRound> rounds;
  std::vector<ComparisonPoint> points;
  const ComparisonPoint& at(std::size_t samples, const std::string& method) const;
};

// Running averages of reward and of -log Q(taken actions) over every
// interaction observed so far; the 0 checkpoint reports the uniform start.
ComparisonResult reproduce_comparison(const ExperimentConfig& cfg, int threads = 1);
// Columns: samples_observed, method, avg_reward, entropy, ci90_low, ci90_high
// (reward interval), entropy_ci90_low, entropy_ci90_high.
void write_comparison_csv(const std::string& path, const ComparisonResult& result);

// ---------------------------------------------------------------- scaling

struct ScalingRow {
  int horizon = 0;
  double dual_update_ms = 0.0;
  double machine_opt_ms = 0.0;
  std::size_t peak_model_entries = 0;
};

struct ScalingResult {
  std::vector<ScalingRow> rows;
  double dual_exponent = 0.0;
  double machine_exponent = 0.0;
  // The dense path refused the smallest horizon.
  bool dense_refused = false;
};

ScalingResult bench_scaling(const ScalingConfig& cfg);
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);
void write_scaling_csv(const std::string& path, const ScalingResult& result);

// ---------------------------------------------------------------- artifacts

struct Manifest {
  std::string command;
  std::string config_path;
  std::string config_hash;
  std::uint64_t seed = 0;
  int threads = 1;
  std::vector<std::string> artifacts;
  nlohmann::json extra = nlohmann::json::object();
};
void write_manifest(const std::string& dir, const Manifest& m);

}  // namespace area
