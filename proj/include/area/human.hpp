#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "area/features.hpp"
#include "area/process.hpp"
#include "area/structured.hpp"

namespace area {

using Rng = std::mt19937_64;

// Seed of stream `index` derived from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

struct LcaParams {
  double decay = 0.1;
  double inhibition = 0.2;
  double stimulus = 0.4;
  double noise_power = 0.09;  // variance of the per-step noise
  double initial = 0.0;
  // Human option driven by each machine action; identity when empty.
  std::vector<int> stimulus_map;

  void validate(const ProcessSpec& spec) const;
  int stimulus_for(int m) const { return stimulus_map.empty() ? m : stimulus_map[m]; }
};

// One accumulator update with stimulus on option `target` (or none when
// target < 0).
std::vector<double> lca_step(std::span<const double> acc, int target, const LcaParams& params, Rng& rng);
// Index of the largest accumulator, ties broken uniformly.
int lca_choose(std::span<const double> acc, Rng& rng);

int draw(std::span<const double> probs, Rng& rng);

class Human {
 public:
  virtual ~Human() = default;
  virtual const ProcessSpec& spec() const = 0;
  virtual std::string name() const = 0;
  // Whether moments() is available.
  virtual bool exact() const { return false; }
  virtual std::vector<double> moments(const StructuredPolicy& q, const std::vector<const Feature*>& features) const;
  // One interaction against q.
  virtual Trajectory play(const StructuredPolicy& q, Rng& rng) const = 0;
};

class LcaHuman : public Human {
 public:
  LcaHuman(ProcessSpec spec, LcaParams params);
  const ProcessSpec& spec() const override { return spec_; }
  std::string name() const override { return "lca"; }
  const LcaParams& params() const { return params_; }
  Trajectory play(const StructuredPolicy& q, Rng& rng) const override;

 private:
  ProcessSpec spec_;
  LcaParams params_;
};

// Human whose move at step k depends on (k, h_{k-1}, m_k) only.
class MarkovHuman : public Human {
 public:
  // probs laid out ((k*|H| + h_prev)*|M| + m)*|H| + h; rows at k = 0 are
  // read with h_prev = 0.
  MarkovHuman(ProcessSpec spec, std::vector<double> probs);
  // Transition frequencies of `source` playing against the uniform policy,
  // with a pseudocount added to every cell.
  // Counts responses to a uniform policy. With `use_previous_human` the rows
  // condition on (k, h_prev, m); otherwise h_prev is pooled and every h_prev
  // row at (k, m) is the same.
  static MarkovHuman distill(const Human& source, std::size_t count, std::uint64_t seed, double pseudocount = 0.5,
                             bool use_previous_human = false);

  const ProcessSpec& spec() const override { return spec_; }
  std::string name() const override { return "markov"; }
  bool exact() const override { return true; }
  std::span<const double> row(int k, int h_prev, int m) const;
  Occupancy occupancy(const StructuredPolicy& q, const PrefixTree& extra) const;
  std::vector<double> moments(const StructuredPolicy& q, const std::vector<const Feature*>& features) const override;
  Trajectory play(const StructuredPolicy& q, Rng& rng) const override;
  CausalTable to_dense(std::uint64_t cap = default_trajectory_cap) const;

 private:
  ProcessSpec spec_;
  std::vector<double> probs_;
};

// Arbitrary dense human; exact moments by enumeration.
class TableHuman : public Human {
 public:
  explicit TableHuman(CausalTable table);
  const ProcessSpec& spec() const override { return table_.spec(); }
  std::string name() const override { return "table"; }
  bool exact() const override { return true; }
  const CausalTable& table() const { return table_; }
  std::vector<double> moments(const StructuredPolicy& q, const std::vector<const Feature*>& features) const override;
  Trajectory play(const StructuredPolicy& q, Rng& rng) const override;

 private:
  CausalTable table_;
};

struct SampleBatch {
  ProcessSpec spec;
  std::vector<Trajectory> trajectories;
  std::string policy_id;
  std::uint64_t seed = 0;
};

// Trajectory i uses the stream derive_seed(seed, i), so the batch does not
// depend on how the work is split across threads.
SampleBatch sample_interactions(const StructuredPolicy& q, const Human& human, std::size_t count, std::uint64_t seed,
                                int threads = 1);

std::vector<double> empirical_moments(const SampleBatch& batch, const std::vector<const Feature*>& features);

void write_batch_csv(const std::string& path, const SampleBatch& batch);

}  // namespace area
