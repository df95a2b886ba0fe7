#include "area/human.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "area/errors.hpp"

namespace area {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 finalizer over the pair.
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void LcaParams::validate(const ProcessSpec& spec) const {
  const auto bad = [](double x) { return !std::isfinite(x) || x < 0.0; };
  if (bad(decay)) throw ConfigError("lca.decay", "must be finite and >= 0");
  if (bad(inhibition)) throw ConfigError("lca.inhibition", "must be finite and >= 0");
  if (bad(stimulus)) throw ConfigError("lca.stimulus", "must be finite and >= 0");
  if (bad(noise_power)) throw ConfigError("lca.noise_power", "must be finite and >= 0");
  if (bad(initial)) throw ConfigError("lca.initial", "must be finite and >= 0");
  if (stimulus_map.empty()) {
    if (spec.human_actions != spec.machine_actions)
      throw ConfigError("lca.stimulus_map", "required when the alphabets differ in size");
    return;
  }
  if (static_cast<int>(stimulus_map.size()) != spec.machine_actions)
    throw ConfigError("lca.stimulus_map", "needs one entry per machine action");
  for (int h : stimulus_map)
    if (h < -1 || h >= spec.human_actions) throw ConfigError("lca.stimulus_map", "entry out of range");
}

std::vector<double> lca_step(std::span<const double> acc, int target, const LcaParams& params, Rng& rng) {
  const double sigma = std::sqrt(params.noise_power);
  double total = 0.0;
  for (double x : acc) total += x;
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> out(acc.size());
  for (std::size_t h = 0; h < acc.size(); ++h) {
    double x = acc[h] - params.decay * acc[h] - params.inhibition * (total - acc[h]);
    if (static_cast<int>(h) == target) x += params.stimulus;
    if (sigma > 0.0) x += sigma * noise(rng);
    out[h] = std::max(0.0, x);
  }
  return out;
}

int lca_choose(std::span<const double> acc, Rng& rng) {
  const double hi = *std::max_element(acc.begin(), acc.end());
  int ties = 0;
  for (double x : acc) ties += x == hi;
  int pick = ties == 1 ? 0 : std::uniform_int_distribution<int>(0, ties - 1)(rng);
  for (std::size_t h = 0; h < acc.size(); ++h)
    if (acc[h] == hi && pick-- == 0) return static_cast<int>(h);
  return 0;
}

int draw(std::span<const double> probs, Rng& rng) {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  int last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last = static_cast<int>(i);
    if (u < probs[i]) return last;
    u -= probs[i];
  }
  return last;
}

std::vector<double> Human::moments(const StructuredPolicy&, const std::vector<const Feature*>&) const {
  throw std::logic_error(name() + " human has no exact moments");
}

LcaHuman::LcaHuman(ProcessSpec spec, LcaParams params) : spec_(spec), params_(std::move(params)) {
  spec_.validate();
  params_.validate(spec_);
}

Trajectory LcaHuman::play(const StructuredPolicy& q, Rng& rng) const {
  Trajectory t;
  std::vector<int> hist;
  std::vector<double> acc(spec_.human_actions, params_.initial);
  for (int k = 0; k < spec_.horizon; ++k) {
    const int m = draw(q.at(hist), rng);
    acc = lca_step(acc, params_.stimulus_for(m), params_, rng);
    const int h = lca_choose(acc, rng);
    t.machine.push_back(m);
    t.human.push_back(h);
    hist.push_back(m);
    hist.push_back(h);
  }
  return t;
}

MarkovHuman::MarkovHuman(ProcessSpec spec, std::vector<double> probs) : spec_(spec), probs_(std::move(probs)) {
  spec_.validate();
  const int H = spec_.human_actions;
  if (probs_.size() != step_table_size(spec_) * H) throw std::invalid_argument("markov human table has wrong size");
  for (std::size_t r = 0; r < probs_.size(); r += H) {
    double s = 0.0;
    for (int h = 0; h < H; ++h) {
      if (!(probs_[r + h] >= 0.0)) throw std::invalid_argument("markov human has a negative entry");
      s += probs_[r + h];
    }
    if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("markov human row does not sum to 1");
  }
}

MarkovHuman MarkovHuman::distill(const Human& source, std::size_t count, std::uint64_t seed, double pseudocount,
                                 bool use_previous_human) {
  const auto& spec = source.spec();
  const int H = spec.human_actions, M = spec.machine_actions;
  std::vector<double> counts(step_table_size(spec) * H, pseudocount);
  const auto q = StructuredPolicy::uniform(spec);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, i));
    const auto t = source.play(q, rng);
    for (int k = 0; k < spec.horizon; ++k) {
      const int hp = k == 0 || !use_previous_human ? 0 : t.human[k - 1];
      counts[((static_cast<std::size_t>(k) * H + hp) * M + t.machine[k]) * H + t.human[k]] += 1.0;
    }
  }
  if (!use_previous_human)
    for (int k = 0; k < spec.horizon; ++k)
      for (int hp = 1; hp < H; ++hp)
        for (int m = 0; m < M; ++m)
          for (int h = 0; h < H; ++h)
            counts[((static_cast<std::size_t>(k) * H + hp) * M + m) * H + h] =
                counts[(static_cast<std::size_t>(k) * H * M + m) * H + h];
  for (std::size_t r = 0; r < counts.size(); r += H) {
    double s = 0.0;
    for (int h = 0; h < H; ++h) s += counts[r + h];
    for (int h = 0; h < H; ++h) counts[r + h] = s > 0.0 ? counts[r + h] / s : 1.0 / H;
  }
  return MarkovHuman(spec, std::move(counts));
}

std::span<const double> MarkovHuman::row(int k, int h_prev, int m) const {
  const int H = spec_.human_actions, M = spec_.machine_actions;
  return std::span<const double>(probs_).subspan(((static_cast<std::size_t>(k) * H + h_prev) * M + m) * H, H);
}

Occupancy MarkovHuman::occupancy(const StructuredPolicy& q, const PrefixTree& extra) const {
  PrefixTree tree = q.tree();
  tree.merge(extra);
  const auto to_q = tree.align(q.tree());
  const auto human_node = [&](int u) {
    const int v = tree.parent(u);
    const int k = tree.depth(u) / 2;
    return row(k, k == 0 ? 0 : tree.symbol(v), tree.symbol(u));
  };
  const auto human_off = [&](int k, int hp, int m) { return row(k, hp, m); };
  const auto machine_node = [&](int v) {
    const auto [hp, mp] = tree.last_pair(v);
    return q.at_node(to_q[v], tree.depth(v) / 2, hp, mp);
  };
  const auto machine_off = [&](int k, int hp, int mp) { return q.offtree(k, hp, mp); };
  return detail::forward_pass(spec_, tree, human_node, human_off, machine_node, machine_off);
}

std::vector<double> MarkovHuman::moments(const StructuredPolicy& q, const std::vector<const Feature*>& features) const {
  const bool dense = std::any_of(features.begin(), features.end(), [](const Feature* f) { return f->is_dense(); });
  if (dense) {
    const auto p = to_dense();
    const auto qd = q.to_dense();
    std::vector<double> out;
    for (const auto* f : features)
      out.push_back(expect_function(p, qd, [&](const Trajectory& t) { return eval_feature(*f, t); }));
    return out;
  }
  std::vector<const StructuredForm*> forms;
  for (const auto* f : features) forms.push_back(&f->structured());
  const auto occ = occupancy(q, tree_of(forms));
  std::vector<double> out;
  for (const auto* f : features) out.push_back(occ.expect(*f));
  return out;
}

Trajectory MarkovHuman::play(const StructuredPolicy& q, Rng& rng) const {
  Trajectory t;
  std::vector<int> hist;
  for (int k = 0; k < spec_.horizon; ++k) {
    const int m = draw(q.at(hist), rng);
    const int h = draw(row(k, k == 0 ? 0 : t.human.back(), m), rng);
    t.machine.push_back(m);
    t.human.push_back(h);
    hist.push_back(m);
    hist.push_back(h);
  }
  return t;
}

CausalTable MarkovHuman::to_dense(std::uint64_t cap) const {
  CausalTable p(spec_, Side::human, cap);
  const int H = spec_.human_actions, M = spec_.machine_actions;
  for (int k = 0; k < spec_.horizon; ++k)
    for (std::size_t idx = 0; idx < p.history_count(k); ++idx) {
      const int m = static_cast<int>(idx % M);
      const int hp = k == 0 ? 0 : static_cast<int>((idx / M) % H);
      const auto src = row(k, hp, m);
      std::copy(src.begin(), src.end(), p.row(k, idx).begin());
    }
  return p;
}

TableHuman::TableHuman(CausalTable table) : table_(std::move(table)) {
  if (table_.side() != Side::human) throw std::invalid_argument("expected a human table");
  if (!validate_causal(table_).empty()) throw std::invalid_argument("human table is not normalized");
}

std::vector<double> TableHuman::moments(const StructuredPolicy& q, const std::vector<const Feature*>& features) const {
  const auto joint = factorize_joint(table_, q.to_dense());
  std::vector<double> out(features.size(), 0.0);
  for (std::uint64_t c = 0; c < joint.mass.size(); ++c) {
    if (joint.mass[c] == 0.0) continue;
    const auto t = trajectory_from_code(joint.spec, c);
    for (std::size_t i = 0; i < features.size(); ++i) out[i] += joint.mass[c] * eval_feature(*features[i], t);
  }
  return out;
}

Trajectory TableHuman::play(const StructuredPolicy& q, Rng& rng) const {
  Trajectory t;
  std::vector<int> hist;
  for (int k = 0; k < spec().horizon; ++k) {
    const int m = draw(q.at(hist), rng);
    hist.push_back(m);
    const int h = draw(table_.at(k, hist), rng);
    hist.push_back(h);
    t.machine.push_back(m);
    t.human.push_back(h);
  }
  return t;
}

SampleBatch sample_interactions(const StructuredPolicy& q, const Human& human, std::size_t count, std::uint64_t seed,
                                int threads) {
  if (!(q.spec() == human.spec())) throw std::invalid_argument("policy and human are on different specs");
  SampleBatch batch{human.spec(), std::vector<Trajectory>(count), human.name(), seed};
  const auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Rng rng(derive_seed(seed, i));
      batch.trajectories[i] = human.play(q, rng);
    }
  };
  const std::size_t n = std::max(1, threads);
  if (n == 1 || count < 64) {
    work(0, count);
    return batch;
  }
  std::vector<std::thread> pool;
  for (std::size_t s = 0; s < n; ++s) pool.emplace_back(work, count * s / n, count * (s + 1) / n);
  for (auto& t : pool) t.join();
  return batch;
}

std::vector<double> empirical_moments(const SampleBatch& batch, const std::vector<const Feature*>& features) {
  if (batch.trajectories.empty()) throw std::invalid_argument("empty batch");
  std::vector<double> out(features.size(), 0.0);
  for (const auto& t : batch.trajectories)
    for (std::size_t i = 0; i < features.size(); ++i) out[i] += eval_feature(*features[i], t);
  for (auto& x : out) x /= static_cast<double>(batch.trajectories.size());
  return out;
}

void write_batch_csv(const std::string& path, const SampleBatch& batch) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const int T = batch.spec.horizon;
  for (int k = 1; k <= T; ++k) out << "h_" << k << ',';
  for (int k = 1; k <= T; ++k) out << "m_" << k << (k == T ? "\n" : ",");
  for (const auto& t : batch.trajectories) {
    for (int k = 0; k < T; ++k) out << t.human[k] << ',';
    for (int k = 0; k < T; ++k) out << t.machine[k] << (k == T - 1 ? "\n" : ",");
  }
}

}  // namespace area
