#include "area/process.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "area/errors.hpp"
#include "area/logspace.hpp"

namespace area {

void ProcessSpec::validate() const {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (human_actions < 1) throw std::invalid_argument("human alphabet must be non-empty");
  if (machine_actions < 1) throw std::invalid_argument("machine alphabet must be non-empty");
}

std::vector<int> Trajectory::interleaved() const {
  std::vector<int> out;
  out.reserve(human.size() * 2);
  for (std::size_t k = 0; k < human.size(); ++k) {
    out.push_back(machine[k]);
    out.push_back(human[k]);
  }
  return out;
}

void Trajectory::validate(const ProcessSpec& spec) const {
  if (static_cast<int>(human.size()) != spec.horizon || static_cast<int>(machine.size()) != spec.horizon)
    throw std::invalid_argument("trajectory length does not match horizon");
  for (int k = 0; k < spec.horizon; ++k) {
    if (human[k] < 0 || human[k] >= spec.human_actions) throw std::invalid_argument("human action out of range");
    if (machine[k] < 0 || machine[k] >= spec.machine_actions)
      throw std::invalid_argument("machine action out of range");
  }
}

std::uint64_t trajectory_count(const ProcessSpec& spec) {
  const auto pair = static_cast<std::uint64_t>(spec.pairs());
  std::uint64_t n = 1;
  for (int k = 0; k < spec.horizon; ++k) {
    if (n > std::numeric_limits<std::uint64_t>::max() / pair) return std::numeric_limits<std::uint64_t>::max();
    n *= pair;
  }
  return n;
}

void require_under_cap(const ProcessSpec& spec, std::uint64_t cap) {
  const auto n = trajectory_count(spec);
  if (n > cap) {
    std::ostringstream os;
    os << "dense representation needs " << n << " trajectories, cap is " << cap;
    throw std::length_error(os.str());
  }
}

std::uint64_t prefix_code(const ProcessSpec& spec, std::span<const int> prefix) {
  std::uint64_t code = 0;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    const int radix = (i % 2 == 0) ? spec.machine_actions : spec.human_actions;
    code = code * static_cast<std::uint64_t>(radix) + static_cast<std::uint64_t>(prefix[i]);
  }
  return code;
}

Trajectory trajectory_from_code(const ProcessSpec& spec, std::uint64_t code) {
  Trajectory tr;
  tr.human.assign(spec.horizon, 0);
  tr.machine.assign(spec.horizon, 0);
  for (int k = spec.horizon - 1; k >= 0; --k) {
    tr.human[k] = static_cast<int>(code % spec.human_actions);
    code /= spec.human_actions;
    tr.machine[k] = static_cast<int>(code % spec.machine_actions);
    code /= spec.machine_actions;
  }
  return tr;
}

std::span<const int> history_prefix(std::span<const int> interleaved, Side side, int k) {
  const std::size_t len = side == Side::human ? 2 * k + 1 : 2 * k;
  return interleaved.first(len);
}

CausalTable::CausalTable(ProcessSpec spec, Side side, std::uint64_t cap) : spec_(spec), side_(side) {
  spec_.validate();
  require_under_cap(spec_, cap);
  probs_.resize(spec_.horizon);
  std::size_t histories = side == Side::human ? spec_.machine_actions : 1;
  for (int k = 0; k < spec_.horizon; ++k) {
    probs_[k].assign(histories * alphabet(), 0.0);
    histories *= spec_.pairs();
  }
}

CausalTable CausalTable::uniform(ProcessSpec spec, Side side, std::uint64_t cap) {
  CausalTable t(spec, side, cap);
  const double u = 1.0 / t.alphabet();
  for (auto& step : t.probs_) std::fill(step.begin(), step.end(), u);
  return t;
}

int CausalTable::alphabet() const { return side_ == Side::human ? spec_.human_actions : spec_.machine_actions; }

std::span<double> CausalTable::row(int k, std::size_t history) {
  return std::span<double>(probs_[k]).subspan(history * alphabet(), alphabet());
}

std::span<const double> CausalTable::row(int k, std::size_t history) const {
  return std::span<const double>(probs_[k]).subspan(history * alphabet(), alphabet());
}

std::span<const double> CausalTable::at(int k, std::span<const int> interleaved) const {
  return row(k, prefix_code(spec_, history_prefix(interleaved, side_, k)));
}

std::vector<Violation> validate_causal(const CausalTable& table, double tol) {
  std::vector<Violation> out;
  for (int k = 0; k < table.spec().horizon; ++k) {
    for (std::size_t hix = 0; hix < table.history_count(k); ++hix) {
      const auto r = table.row(k, hix);
      double total = 0.0;
      bool negative = false;
      bool finite = true;
      for (double p : r) {
        if (!std::isfinite(p)) finite = false;
        if (p < 0.0) negative = true;
        total += p;
      }
      if (!finite) out.push_back({k, hix, "non-finite entry"});
      if (negative) out.push_back({k, hix, "negative entry"});
      if (std::abs(total - 1.0) > tol) {
        std::ostringstream os;
        os.precision(17);
        os << "sums to " << total;
        out.push_back({k, hix, os.str()});
      }
    }
  }
  return out;
}

namespace {

void check_pair(const CausalTable& p, const CausalTable& q) {
  if (p.side() != Side::human || q.side() != Side::machine)
    throw std::invalid_argument("expected a human table and a machine table");
  if (!(p.spec() == q.spec())) throw std::invalid_argument("process specs differ");
  for (const auto* t : {&p, &q}) {
    const auto v = validate_causal(*t);
    if (!v.empty())
      throw std::invalid_argument("unnormalized table at step " + std::to_string(v.front().step) + ": " +
                                  v.front().defect);
  }
}

// Log joint mass of every trajectory plus the accumulated log of the
// selected side's factors.
struct LogJoint {
  std::vector<double> log_mass;
  std::vector<double> side_log;
};

LogJoint build_log_joint(const CausalTable& p, const CausalTable& q, Side side) {
  const auto& spec = p.spec();
  LogJoint cur{{0.0}, {0.0}};
  for (int pos = 0; pos < 2 * spec.horizon; ++pos) {
    const bool machine_turn = pos % 2 == 0;
    const int k = pos / 2;
    const CausalTable& table = machine_turn ? q : p;
    const int a = table.alphabet();
    const bool tracked = (side == Side::machine) == machine_turn;
    LogJoint next;
    next.log_mass.resize(cur.log_mass.size() * a);
    next.side_log.resize(cur.log_mass.size() * a);
    for (std::size_t c = 0; c < cur.log_mass.size(); ++c) {
      const auto r = table.row(k, c);
      for (int x = 0; x < a; ++x) {
        const double lp = std::log(r[x]);
        next.log_mass[c * a + x] = cur.log_mass[c] + lp;
        next.side_log[c * a + x] = cur.side_log[c] + (tracked ? lp : 0.0);
      }
    }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace

JointDistribution factorize_joint(const CausalTable& p, const CausalTable& q, std::uint64_t cap) {
  check_pair(p, q);
  require_under_cap(p.spec(), cap);
  auto lj = build_log_joint(p, q, Side::human);
  JointDistribution out{p.spec(), std::move(lj.log_mass)};
  for (double& x : out.mass) x = std::exp(x);
  return out;
}

double causal_entropy(Side side, const CausalTable& p, const CausalTable& q, std::uint64_t cap) {
  check_pair(p, q);
  require_under_cap(p.spec(), cap);
  const auto lj = build_log_joint(p, q, side);
  double h = 0.0;
  for (std::size_t i = 0; i < lj.log_mass.size(); ++i) {
    if (lj.log_mass[i] == neg_inf) continue;
    h -= std::exp(lj.log_mass[i]) * lj.side_log[i];
  }
  return h;
}

double expect_function(const CausalTable& p, const CausalTable& q,
                       const std::function<double(const Trajectory&)>& f, std::uint64_t cap) {
  const auto joint = factorize_joint(p, q, cap);
  double total = 0.0;
  for (std::uint64_t c = 0; c < joint.mass.size(); ++c) {
    if (joint.mass[c] == 0.0) continue;
    total += joint.mass[c] * f(trajectory_from_code(joint.spec, c));
  }
  return total;
}

nlohmann::json to_json(const ProcessSpec& spec) {
  return {{"horizon", spec.horizon}, {"human_actions", spec.human_actions}, {"machine_actions", spec.machine_actions}};
}

namespace {

int positive_int(const nlohmann::json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key)) throw ConfigError(path + "." + key, "missing");
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(path + "." + key, "expected an integer");
  const auto x = v.get<long long>();
  if (x < 1 || x > 1'000'000) throw ConfigError(path + "." + key, "must be a positive integer");
  return static_cast<int>(x);
}

}  // namespace

ProcessSpec spec_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  ProcessSpec s;
  s.horizon = positive_int(j, "horizon", path);
  s.human_actions = positive_int(j, "human_actions", path);
  s.machine_actions = positive_int(j, "machine_actions", path);
  return s;
}

// Entries use 1-based "t" to match the external convention t = 1..T.
nlohmann::json to_json(const CausalTable& table) {
  nlohmann::json entries = nlohmann::json::array();
  const auto& spec = table.spec();
  for (int k = 0; k < spec.horizon; ++k) {
    const int len = table.side() == Side::human ? 2 * k + 1 : 2 * k;
    for (std::size_t hix = 0; hix < table.history_count(k); ++hix) {
      std::vector<int> hist(len);
      std::uint64_t code = hix;
      for (int i = len - 1; i >= 0; --i) {
        const int radix = (i % 2 == 0) ? spec.machine_actions : spec.human_actions;
        hist[i] = static_cast<int>(code % radix);
        code /= radix;
      }
      const auto r = table.row(k, hix);
      entries.push_back({{"t", k + 1}, {"history", hist}, {"probs", std::vector<double>(r.begin(), r.end())}});
    }
  }
  return {{"spec", to_json(spec)},
          {"side", table.side() == Side::human ? "human" : "machine"},
          {"entries", entries}};
}

CausalTable causal_table_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("", "expected an object");
  if (!j.contains("spec")) throw ConfigError("spec", "missing");
  const auto spec = spec_from_json(j.at("spec"));
  if (!j.contains("side") || !j.at("side").is_string()) throw ConfigError("side", "expected \"human\" or \"machine\"");
  const auto side_name = j.at("side").get<std::string>();
  if (side_name != "human" && side_name != "machine") throw ConfigError("side", "expected \"human\" or \"machine\"");
  const Side side = side_name == "human" ? Side::human : Side::machine;
  CausalTable table(spec, side);
  std::vector<std::vector<char>> seen(spec.horizon);
  for (int k = 0; k < spec.horizon; ++k) seen[k].assign(table.history_count(k), 0);
  if (!j.contains("entries") || !j.at("entries").is_array()) throw ConfigError("entries", "expected an array");
  const auto& entries = j.at("entries");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string where = "entries[" + std::to_string(i) + "]";
    const auto& e = entries[i];
    if (!e.is_object() || !e.contains("t") || !e.contains("history") || !e.contains("probs"))
      throw ConfigError(where, "expected {t, history, probs}");
    const int t = e.at("t").get<int>();
    if (t < 1 || t > spec.horizon) throw ConfigError(where + ".t", "out of range");
    const int k = t - 1;
    const auto hist = e.at("history").get<std::vector<int>>();
    const std::size_t len = side == Side::human ? 2 * k + 1 : 2 * k;
    if (hist.size() != len) throw ConfigError(where + ".history", "wrong length for step");
    for (std::size_t p = 0; p < hist.size(); ++p) {
      const int radix = (p % 2 == 0) ? spec.machine_actions : spec.human_actions;
      if (hist[p] < 0 || hist[p] >= radix) throw ConfigError(where + ".history", "action out of range");
    }
    const auto probs = e.at("probs").get<std::vector<double>>();
    if (static_cast<int>(probs.size()) != table.alphabet()) throw ConfigError(where + ".probs", "wrong length");
    const auto code = prefix_code(spec, hist);
    seen[k][code] = 1;
    std::copy(probs.begin(), probs.end(), table.row(k, code).begin());
  }
  for (int k = 0; k < spec.horizon; ++k)
    for (std::size_t h = 0; h < seen[k].size(); ++h)
      if (!seen[k][h]) throw ConfigError("entries", "missing history at t=" + std::to_string(k + 1));
  return table;
}

}  // namespace area
