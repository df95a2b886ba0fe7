#include "area/qlearning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "area/errors.hpp"
#include "area/logspace.hpp"

namespace area {

void QlParams::validate() const {
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ConfigError("qlearning.learning_rate", "must be in (0, 1]");
  if (!(discount >= 0.0 && discount <= 1.0)) throw ConfigError("qlearning.discount", "must be in [0, 1]");
  if (!(inverse_temperature > 0.0) || !std::isfinite(inverse_temperature))
    throw ConfigError("qlearning.inverse_temperature", "must be finite and > 0");
  if (memory < 1) throw ConfigError("qlearning.memory", "must be >= 1");
}

QlWindow QlWindow::empty(int memory) { return {std::vector<std::pair<int, int>>(memory, {-1, -1})}; }

QlWindow QlWindow::shifted(int h, int m) const {
  QlWindow w{pairs};
  w.pairs.erase(w.pairs.begin());
  w.pairs.emplace_back(h, m);
  return w;
}

QTable::QTable(ProcessSpec spec, int memory) : spec_(spec), memory_(memory) {
  spec_.validate();
  if (memory < 1) throw std::invalid_argument("memory must be >= 1");
  // Overflow guard for the packed key.
  double bits = std::log2(static_cast<double>(spec.horizon) * spec.machine_actions) +
                memory * std::log2(static_cast<double>(spec.human_actions + 1) * (spec.machine_actions + 1));
  if (bits > 63.0) throw std::invalid_argument("memory too long for the table key");
}

std::uint64_t QTable::key(const QlWindow& w, int k, int m) const {
  if (static_cast<int>(w.pairs.size()) != memory_) throw std::invalid_argument("window length differs from memory");
  const std::uint64_t hr = spec_.human_actions + 1, mr = spec_.machine_actions + 1;
  std::uint64_t code = 0;
  // Padding maps to the extra symbol at the top of each radix.
  for (const auto& [h, mm] : w.pairs)
    code = (code * hr + (h < 0 ? hr - 1 : h)) * mr + (mm < 0 ? mr - 1 : mm);
  return (code * spec_.horizon + k) * spec_.machine_actions + m;
}

double QTable::get(const QlWindow& w, int k, int m) const {
  const auto it = values_.find(key(w, k, m));
  return it == values_.end() ? 0.0 : it->second;
}

void QTable::set(const QlWindow& w, int k, int m, double v) { values_[key(w, k, m)] = v; }

std::vector<double> ql_probs(const QTable& table, const QlWindow& w, int k, double inverse_temperature) {
  std::vector<double> p(table.spec().machine_actions);
  for (int m = 0; m < static_cast<int>(p.size()); ++m) p[m] = inverse_temperature * table.get(w, k, m);
  softmax_inplace(p);
  return p;
}

int ql_select(const QTable& table, const QlWindow& w, int k, double inverse_temperature, Rng& rng) {
  return draw(ql_probs(table, w, k, inverse_temperature), rng);
}

void ql_update(QTable& table, const QlWindow& w, int m, double reward, const QlWindow& w_next, int k,
               const QlParams& params) {
  double future = 0.0;
  if (k + 1 < table.spec().horizon) {
    future = table.get(w_next, k + 1, 0);
    for (int a = 1; a < table.spec().machine_actions; ++a) future = std::max(future, table.get(w_next, k + 1, a));
  }
  const double old = table.get(w, k, m);
  table.set(w, k, m, (1.0 - params.learning_rate) * old +
                         params.learning_rate * (reward + params.discount * future));
}

QlRun run_qlearning(const RewardFunction& reward, const LcaParams& human, const QlParams& params, int episodes,
                    std::uint64_t seed) {
  params.validate();
  reward.validate();
  if (!reward.decomposable_only()) throw std::invalid_argument("q-learning needs a decomposable reward");
  if (episodes < 0) throw std::invalid_argument("episodes must be >= 0");
  const auto& spec = reward.spec;
  human.validate(spec);
  QlRun run{{}, QTable(spec, params.memory)};
  double reward_total = 0.0, log_prob_total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(e)));
    QlEpisode ep;
    ep.episode = e + 1;
    auto window = QlWindow::empty(params.memory);
    std::vector<double> acc(spec.human_actions, human.initial);
    for (int k = 0; k < spec.horizon; ++k) {
      const auto probs = ql_probs(run.table, window, k, params.inverse_temperature);
      const int m = draw(probs, rng);
      acc = lca_step(acc, human.stimulus_for(m), human, rng);
      const int h = lca_choose(acc, rng);
      const double r = reward.table.empty() ? 0.0 : reward.table[step_index(spec, k, h, m)];
      const auto next = window.shifted(h, m);
      ql_update(run.table, window, m, r, next, k, params);
      ep.reward += r;
      ep.log_prob += std::log(probs[m]);
      ep.trajectory.machine.push_back(m);
      ep.trajectory.human.push_back(h);
      window = next;
    }
    reward_total += ep.reward;
    log_prob_total += ep.log_prob;
    ep.cumulative_samples = static_cast<std::size_t>(e + 1);
    ep.avg_reward = reward_total / (e + 1);
    ep.entropy_estimate = -log_prob_total / (e + 1);
    run.episodes.push_back(std::move(ep));
  }
  return run;
}

void write_qlearning_csv(const std::string& path, const std::vector<QlEpisode>& episodes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "episode,cumulative_samples,avg_reward,entropy_estimate\n" << std::setprecision(17);
  for (const auto& e : episodes)
    out << e.episode << ',' << e.cumulative_samples << ',' << e.avg_reward << ',' << e.entropy_estimate << '\n';
}

}  // namespace area
