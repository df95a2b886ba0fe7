#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "area/features.hpp"
#include "area/human.hpp"
#include "area/process.hpp"

namespace area {

struct QlParams {
  double learning_rate = 0.1;
  double discount = 0.8;
  double inverse_temperature = 10.0;
  int memory = 1;

  void validate() const;
};

// Last `memory` (h, m) pairs, oldest first; -1 marks padding before the
// first step.
struct QlWindow {
  std::vector<std::pair<int, int>> pairs;

  static QlWindow empty(int memory);
  QlWindow shifted(int h, int m) const;
};

// Sparse table over (window, step, action); entries never written read as 0.
class QTable {
 public:
  QTable(ProcessSpec spec, int memory);
  const ProcessSpec& spec() const { return spec_; }
  int memory() const { return memory_; }
  double get(const QlWindow& w, int k, int m) const;
  void set(const QlWindow& w, int k, int m, double v);
  std::size_t size() const { return values_.size(); }

 private:
  std::uint64_t key(const QlWindow& w, int k, int m) const;
  ProcessSpec spec_;
  int memory_;
  std::unordered_map<std::uint64_t, double> values_;
};

// Softmax of c * Q over machine actions at (window, k).
std::vector<double> ql_probs(const QTable& table, const QlWindow& w, int k, double inverse_temperature);
int ql_select(const QTable& table, const QlWindow& w, int k, double inverse_temperature, Rng& rng);

// (1 - a) Q(w, k, m) + a (r + discount * max_m' Q(w_next, k + 1, m')), with a
// zero bootstrap at the last step.
void ql_update(QTable& table, const QlWindow& w, int m, double reward, const QlWindow& w_next, int k,
               const QlParams& params);

struct QlEpisode {
  int episode = 0;
  std::size_t cumulative_samples = 0;
  double reward = 0.0;
  double log_prob = 0.0;  // sum over steps of log prob of the taken action
  double avg_reward = 0.0;
  double entropy_estimate = 0.0;
  Trajectory trajectory;
};

struct QlRun {
  std::vector<QlEpisode> episodes;
  QTable table;
};

// Episode i draws from derive_seed(seed, i).
QlRun run_qlearning(const RewardFunction& reward, const LcaParams& human, const QlParams& params, int episodes,
                    std::uint64_t seed);

void write_qlearning_csv(const std::string& path, const std::vector<QlEpisode>& episodes);

}  // namespace area
