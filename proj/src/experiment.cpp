#include "area/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "area/errors.hpp"
#include "area/logspace.hpp"

namespace area {

namespace {

using json = nlohmann::json;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void require_object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ConfigError(join(path, k), "unknown field");
}

double read_number(const json& j, const char* key, const std::string& path, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(join(path, key), "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(join(path, key), "must be finite");
  return x;
}

long long read_int(const json& j, const char* key, const std::string& path, long long fallback, long long lo,
                   long long hi = std::numeric_limits<int>::max()) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(join(path, key), "expected an integer");
  const auto x = v.get<long long>();
  if (x < lo || x > hi)
    throw ConfigError(join(path, key), "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return x;
}

bool read_bool(const json& j, const char* key, const std::string& path, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) throw ConfigError(join(path, key), "expected true or false");
  return j.at(key).get<bool>();
}

std::string read_string(const json& j, const char* key, const std::string& path, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) throw ConfigError(join(path, key), "expected a string");
  return j.at(key).get<std::string>();
}

std::vector<int> read_actions(const json& j, const std::string& path, int radix_even, int radix_odd, bool interleaved) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of action indices");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto where = path + "[" + std::to_string(i) + "]";
    if (!j[i].is_number_integer()) throw ConfigError(where, "expected an integer");
    const int a = j[i].get<int>();
    const int radix = interleaved && i % 2 == 1 ? radix_odd : radix_even;
    if (a < 0 || a >= radix) throw ConfigError(where, "action index out of range");
    out.push_back(a);
  }
  return out;
}

std::vector<double> read_table(const json& j, const std::string& path, const ProcessSpec& spec) {
  if (!j.is_array()) throw ConfigError(path, "expected an array");
  if (j.size() != step_table_size(spec))
    throw ConfigError(path, "expected " + std::to_string(step_table_size(spec)) + " entries laid out (t*|H| + h)*|M| + m");
  std::vector<double> t;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(path + "[" + std::to_string(i) + "]", "expected a number");
    t.push_back(j[i].get<double>());
  }
  return t;
}

Trajectory read_path(const json& j, const std::string& path, const ProcessSpec& spec) {
  require_object(j, path, {"h", "m"});
  if (!j.contains("h") || !j.contains("m")) throw ConfigError(path, "needs \"h\" and \"m\"");
  Trajectory t{read_actions(j.at("h"), join(path, "h"), spec.human_actions, 0, false),
               read_actions(j.at("m"), join(path, "m"), spec.machine_actions, 0, false)};
  if (static_cast<int>(t.human.size()) != spec.horizon || static_cast<int>(t.machine.size()) != spec.horizon)
    throw ConfigError(path, "a path names T human and T machine actions");
  return t;
}

// Builders shared by features and the reward.
std::vector<double> build_table(const json& j, const std::string& path, const ProcessSpec& spec) {
  const auto name = read_string(j, "builder", path, "");
  try {
    if (name == "follow") return follow_table(spec);
    if (name == "weighted-follow")
      return weighted_follow_table(spec, static_cast<int>(read_int(j, "period", path, 5, 1)),
                                   read_number(j, "off_weight", path, 0.25));
    if (name == "periodic-target")
      return periodic_target_table(spec, static_cast<int>(read_int(j, "target", path, 0, 0)),
                                   static_cast<int>(read_int(j, "period", path, 5, 1)));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  throw ConfigError(join(path, "builder"), "unknown builder \"" + name + "\"");
}

RewardFunction parse_reward(const json& j, const std::string& path, const ProcessSpec& spec) {
  require_object(j, path, {"builder", "target", "period", "off_weight", "table", "paths"});
  RewardFunction r{spec, {}, {}};
  if (j.contains("builder") && j.contains("table")) throw ConfigError(path, "give either a builder or a table");
  if (j.contains("builder")) r.table = build_table(j, path, spec);
  if (j.contains("table")) r.table = read_table(j.at("table"), join(path, "table"), spec);
  if (j.contains("paths")) {
    const auto& ps = j.at("paths");
    const auto pp = join(path, "paths");
    if (!ps.is_array()) throw ConfigError(pp, "expected an array");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const auto where = pp + "[" + std::to_string(i) + "]";
      require_object(ps[i], where, {"h", "m", "coefficient"});
      json hm = {{"h", ps[i].value("h", json())}, {"m", ps[i].value("m", json())}};
      r.paths.push_back({read_path(hm, where, spec).interleaved(), read_number(ps[i], "coefficient", where, 1.0)});
    }
  }
  return r;
}

Feature parse_feature(const json& j, const std::string& path, const ProcessSpec& spec, const RewardFunction& reward) {
  require_object(j, path, {"id", "builder", "target", "period", "off_weight", "table", "path", "prefix", "coefficient"});
  const auto id = read_string(j, "id", path, "");
  if (id.empty()) throw ConfigError(join(path, "id"), "required");
  const int kinds = j.contains("builder") + j.contains("table") + j.contains("path") + j.contains("prefix");
  if (kinds != 1) throw ConfigError(path, "give exactly one of builder, table, path, prefix");
  if (j.contains("builder") && j.at("builder") == "reward") {
    auto f = reward.as_feature(id);
    return f;
  }
  if (j.contains("builder")) return decomposable_feature(id, spec, build_table(j, path, spec));
  if (j.contains("table")) return decomposable_feature(id, spec, read_table(j.at("table"), join(path, "table"), spec));
  const double c = read_number(j, "coefficient", path, 1.0);
  if (j.contains("path")) return path_feature(id, spec, read_path(j.at("path"), join(path, "path"), spec), c);
  auto prefix = read_actions(j.at("prefix"), join(path, "prefix"), spec.machine_actions, spec.human_actions, true);
  if (prefix.empty() || static_cast<int>(prefix.size()) > 2 * spec.horizon)
    throw ConfigError(join(path, "prefix"), "length must be in [1, 2T]");
  return prefix_feature(id, spec, std::move(prefix), c);
}

std::vector<int> read_int_list(const json& j, const std::string& path, int lo) {
  if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a non-empty array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number_integer() || j[i].get<long long>() < lo)
      throw ConfigError(path + "[" + std::to_string(i) + "]", "expected an integer >= " + std::to_string(lo));
    out.push_back(j[i].get<int>());
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  require_object(j, "", {"schema_version", "name", "spec", "features", "inequality", "reward", "gamma", "iterations",
                         "step_constraint", "moments", "estimation", "lca", "qlearning", "rounds", "convergence",
                         "comparison", "scaling", "seed", "output_dir"});
  if (!j.contains("schema_version")) throw ConfigError("schema_version", "required");
  if (!j.at("schema_version").is_number_integer() || j.at("schema_version").get<int>() != config_schema_version)
    throw ConfigError("schema_version", "unsupported; expected " + std::to_string(config_schema_version));
  ExperimentConfig c;
  c.source = j;
  c.name = read_string(j, "name", "", "");
  if (!j.contains("spec")) throw ConfigError("spec", "required");
  require_object(j.at("spec"), "spec", {"horizon", "human_actions", "machine_actions"});
  c.spec = spec_from_json(j.at("spec"), "spec");

  c.reward = j.contains("reward") ? parse_reward(j.at("reward"), "reward", c.spec) : RewardFunction{c.spec, {}, {}};
  if (j.contains("features")) {
    const auto& fs = j.at("features");
    if (!fs.is_array()) throw ConfigError("features", "expected an array");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < fs.size(); ++i) {
      const auto where = "features[" + std::to_string(i) + "]";
      auto f = parse_feature(fs[i], where, c.spec, c.reward);
      if (!ids.insert(f.id).second) throw ConfigError(join(where, "id"), "duplicate id \"" + f.id + "\"");
      c.features.push_back(std::move(f));
    }
  }
  if (j.contains("inequality")) {
    const auto& gs = j.at("inequality");
    if (!gs.is_array()) throw ConfigError("inequality", "expected an array");
    for (std::size_t i = 0; i < gs.size(); ++i) {
      const auto where = "inequality[" + std::to_string(i) + "]";
      require_object(gs[i], where, {"feature", "threshold"});
      if (!gs[i].contains("feature") || !gs[i].contains("threshold"))
        throw ConfigError(where, "needs \"feature\" and \"threshold\"");
      c.inequality.push_back({parse_feature(gs[i].at("feature"), join(where, "feature"), c.spec, c.reward),
                              read_number(gs[i], "threshold", where, 0.0)});
    }
  }

  c.gamma = read_number(j, "gamma", "", 1.0);
  if (c.gamma < 0.0) throw ConfigError("gamma", "must be >= 0");
  c.iterations = static_cast<int>(read_int(j, "iterations", "", 10, 0));
  c.step_constraint = read_bool(j, "step_constraint", "", true);

  if (j.contains("moments")) {
    const auto& m = j.at("moments");
    require_object(m, "moments", {"kind", "samples_per_iteration", "surrogate_samples", "surrogate_memory"});
    const auto kind = read_string(m, "kind", "moments", "exact");
    if (kind != "exact" && kind != "sampled") throw ConfigError("moments.kind", "expected \"exact\" or \"sampled\"");
    c.moments.kind = kind == "exact" ? MomentSource::Kind::exact : MomentSource::Kind::sampled;
    c.moments.samples_per_iteration =
        read_int(m, "samples_per_iteration", "moments", 100, 1, std::numeric_limits<long long>::max());
    c.moments.surrogate_samples =
        read_int(m, "surrogate_samples", "moments", 100'000, 1, std::numeric_limits<long long>::max());
    const auto mem = read_string(m, "surrogate_memory", "moments", "step-machine");
    if (mem != "step-machine" && mem != "previous-human")
      throw ConfigError("moments.surrogate_memory", "expected \"step-machine\" or \"previous-human\"");
    c.moments.surrogate_previous_human = mem == "previous-human";
  }

  if (j.contains("estimation")) {
    const auto& e = j.at("estimation");
    require_object(e, "estimation", {"learning_rate", "schedule", "max_iters", "grad_tol", "moment_tol"});
    c.estimation.learning_rate = read_number(e, "learning_rate", "estimation", c.estimation.learning_rate);
    if (!(c.estimation.learning_rate > 0.0)) throw ConfigError("estimation.learning_rate", "must be > 0");
    if (e.contains("schedule")) {
      try {
        c.estimation.schedule = schedule_from_string(read_string(e, "schedule", "estimation", ""));
      } catch (const std::exception& ex) {
        throw ConfigError("estimation.schedule", ex.what());
      }
    }
    c.estimation.max_iters = static_cast<int>(read_int(e, "max_iters", "estimation", c.estimation.max_iters, 1));
    c.estimation.grad_tol = read_number(e, "grad_tol", "estimation", c.estimation.grad_tol);
    c.estimation.moment_tol = read_number(e, "moment_tol", "estimation", c.estimation.moment_tol);
    if (!(c.estimation.grad_tol > 0.0)) throw ConfigError("estimation.grad_tol", "must be > 0");
    if (!(c.estimation.moment_tol > 0.0)) throw ConfigError("estimation.moment_tol", "must be > 0");
  }

  if (j.contains("lca")) {
    const auto& l = j.at("lca");
    require_object(l, "lca", {"decay", "inhibition", "stimulus", "noise_power", "initial", "stimulus_map"});
    c.lca.decay = read_number(l, "decay", "lca", c.lca.decay);
    c.lca.inhibition = read_number(l, "inhibition", "lca", c.lca.inhibition);
    c.lca.stimulus = read_number(l, "stimulus", "lca", c.lca.stimulus);
    c.lca.noise_power = read_number(l, "noise_power", "lca", c.lca.noise_power);
    c.lca.initial = read_number(l, "initial", "lca", c.lca.initial);
    if (l.contains("stimulus_map")) {
      const auto& sm = l.at("stimulus_map");
      if (!sm.is_array()) throw ConfigError("lca.stimulus_map", "expected an array");
      for (std::size_t i = 0; i < sm.size(); ++i) {
        if (!sm[i].is_number_integer()) throw ConfigError("lca.stimulus_map[" + std::to_string(i) + "]", "expected an integer");
        c.lca.stimulus_map.push_back(sm[i].get<int>());
      }
    }
  }
  c.lca.validate(c.spec);

  if (j.contains("qlearning")) {
    const auto& q = j.at("qlearning");
    require_object(q, "qlearning", {"learning_rate", "discount", "inverse_temperature", "memory"});
    c.qlearning.learning_rate = read_number(q, "learning_rate", "qlearning", c.qlearning.learning_rate);
    c.qlearning.discount = read_number(q, "discount", "qlearning", c.qlearning.discount);
    c.qlearning.inverse_temperature = read_number(q, "inverse_temperature", "qlearning", c.qlearning.inverse_temperature);
    c.qlearning.memory = static_cast<int>(read_int(q, "memory", "qlearning", c.qlearning.memory, 1, 16));
  }
  c.qlearning.validate();

  c.rounds = static_cast<int>(read_int(j, "rounds", "", 5, 1));

  if (j.contains("convergence")) {
    const auto& v = j.at("convergence");
    require_object(v, "convergence", {"sample_sizes", "seeds"});
    if (v.contains("sample_sizes")) {
      c.convergence.sample_sizes.clear();
      for (int n : read_int_list(v.at("sample_sizes"), "convergence.sample_sizes", 1))
        c.convergence.sample_sizes.push_back(n);
    }
    c.convergence.seeds = static_cast<int>(read_int(v, "seeds", "convergence", 5, 1));
  }
  if (j.contains("comparison")) {
    const auto& v = j.at("comparison");
    require_object(v, "comparison", {"samples_per_iteration", "iterations", "episodes"});
    c.comparison.samples_per_iteration = read_int(v, "samples_per_iteration", "comparison", 10, 1);
    c.comparison.iterations = static_cast<int>(read_int(v, "iterations", "comparison", 10, 1));
    c.comparison.episodes = static_cast<int>(read_int(v, "episodes", "comparison", 100, 1));
  }
  if (j.contains("scaling")) {
    const auto& v = j.at("scaling");
    require_object(v, "scaling", {"horizons", "human_actions", "machine_actions", "repeats"});
    if (v.contains("horizons")) c.scaling.horizons = read_int_list(v.at("horizons"), "scaling.horizons", 1);
    c.scaling.human_actions = static_cast<int>(read_int(v, "human_actions", "scaling", 3, 1));
    c.scaling.machine_actions = static_cast<int>(read_int(v, "machine_actions", "scaling", 3, 1));
    c.scaling.repeats = static_cast<int>(read_int(v, "repeats", "scaling", 5, 1));
  }

  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  c.output_dir = read_string(j, "output_dir", "", "out");
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const json& doc) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(doc.dump());
  return s.str();
}

AreaProblem make_problem(const ExperimentConfig& cfg) {
  return {cfg.spec, cfg.features, cfg.inequality, cfg.reward};
}

std::shared_ptr<const Human> make_surrogate_human(const ExperimentConfig& cfg, std::uint64_t seed) {
  const LcaHuman lca(cfg.spec, cfg.lca);
  return std::make_shared<MarkovHuman>(
      MarkovHuman::distill(lca, cfg.moments.surrogate_samples, seed, 0.5, cfg.moments.surrogate_previous_human));
}

MomentSource make_source(const ExperimentConfig& cfg, std::uint64_t seed, int threads) {
  MomentSource src;
  src.kind = cfg.moments.kind;
  src.seed = seed;
  src.threads = threads;
  if (src.kind == MomentSource::Kind::exact) {
    src.human = make_surrogate_human(cfg, derive_seed(seed, 0));
  } else {
    src.human = std::make_shared<LcaHuman>(cfg.spec, cfg.lca);
    src.sample_size = cfg.moments.samples_per_iteration;
  }
  return src;
}

AreaOptions make_area_options(const ExperimentConfig& cfg) {
  AreaOptions o;
  o.gamma = cfg.gamma;
  o.iterations = cfg.iterations;
  o.use_step_constraint = cfg.step_constraint;
  o.estimation = cfg.estimation;
  return o;
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(threads, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::jthread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

Interval student_t_interval(const std::vector<double>& xs, double level) {
  if (xs.empty()) throw std::invalid_argument("interval of an empty sample");
  Interval iv;
  for (double x : xs) iv.mean += x;
  iv.mean /= static_cast<double>(xs.size());
  iv.low = iv.high = iv.mean;
  if (xs.size() < 2) return iv;
  double ss = 0.0;
  for (double x : xs) ss += (x - iv.mean) * (x - iv.mean);
  const double n = static_cast<double>(xs.size());
  const double se = std::sqrt(ss / (n - 1.0) / n);
  const boost::math::students_t dist(n - 1.0);
  const double t = boost::math::quantile(boost::math::complement(dist, (1.0 - level) / 2.0));
  iv.low = iv.mean - t * se;
  iv.high = iv.mean + t * se;
  return iv;
}

// ---------------------------------------------------------------- convergence

std::vector<ConvergenceSeries> reproduce_convergence(const ExperimentConfig& cfg, int threads, bool include_exact) {
  const auto problem = make_problem(cfg);
  const auto opts = make_area_options(cfg);
  std::vector<ConvergenceSeries> out;
  if (include_exact) out.push_back({"exact", 0, 0, {}});
  for (auto n : cfg.convergence.sample_sizes)
    for (int s = 0; s < cfg.convergence.seeds; ++s) out.push_back({"N=" + std::to_string(n), n, s, {}});
  auto lca = std::make_shared<LcaHuman>(cfg.spec, cfg.lca);
  parallel_for(static_cast<int>(out.size()), threads, [&](int i) {
    auto& series = out[i];
    MomentSource src;
    if (series.sample_size == 0) {
      auto c = cfg;
      c.moments.kind = MomentSource::Kind::exact;
      src = make_source(c, cfg.seed, 1);
    } else {
      src.kind = MomentSource::Kind::sampled;
      src.human = lca;
      src.sample_size = series.sample_size;
      src.seed = derive_seed(derive_seed(cfg.seed, series.sample_size), static_cast<std::uint64_t>(series.replicate));
    }
    series.trace = run_area(problem, src, opts);
  });
  return out;
}

void write_convergence_csv(const std::string& path, const std::vector<ConvergenceSeries>& series) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "series,sample_size,replicate,iteration,L\n" << std::setprecision(17);
  for (const auto& s : series)
    for (const auto& r : s.trace.rows)
      out << s.label << ',' << s.sample_size << ',' << s.replicate << ',' << r.iter << ',' << r.L << '\n';
}

double mean_abs_step(const AreaTrace& trace) {
  if (trace.rows.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 1; i < trace.rows.size(); ++i) total += std::abs(trace.rows[i].L - trace.rows[i - 1].L);
  return total / static_cast<double>(trace.rows.size() - 1);
}

// ---------------------------------------------------------------- comparison

const ComparisonPoint& ComparisonResult::at(std::size_t samples, const std::string& method) const {
  for (const auto& p : points)
    if (p.samples_observed == samples && p.method == method) return p;
  throw std::out_of_range("no comparison point for " + method + " at " + std::to_string(samples));
}

ComparisonResult reproduce_comparison(const ExperimentConfig& cfg, int threads) {
  const auto& cc = cfg.comparison;
  const auto problem = make_problem(cfg);
  auto opts = make_area_options(cfg);
  opts.iterations = cc.iterations;
  const auto lca = std::make_shared<LcaHuman>(cfg.spec, cfg.lca);
  const double uniform_entropy = cfg.spec.horizon * std::log(static_cast<double>(cfg.spec.machine_actions));
  const double nan = std::numeric_limits<double>::quiet_NaN();

  ComparisonResult result;
  result.rounds.resize(cfg.rounds);
  parallel_for(cfg.rounds, threads, [&](int r) {
    const auto seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r));
    auto& round = result.rounds[r];

    // AREA: every sampled batch is scored against the policy that drew it.
    std::vector<double> batch_reward, batch_log_q;
    auto state = AreaState::initial(StructuredPolicy::uniform(cfg.spec));
    MomentSource src;
    src.kind = MomentSource::Kind::sampled;
    src.human = lca;
    src.sample_size = cc.samples_per_iteration;
    src.seed = derive_seed(seed, 0);
    src.on_batch = [&](int, const SampleBatch& b) {
      for (const auto& t : b.trajectories) {
        const auto seq = t.interleaved();
        double lq = 0.0;
        for (int k = 0; k < cfg.spec.horizon; ++k)
          lq += std::log(state.policy.at(std::span<const int>(seq).first(2 * k))[t.machine[k]]);
        batch_reward.push_back(reward_eval(cfg.reward, t));
        batch_log_q.push_back(lq);
      }
    };
    for (int i = 0; i < cc.iterations; ++i) area_step(state, problem, src, opts);

    const auto ql = run_qlearning(cfg.reward, cfg.lca, cfg.qlearning, cc.episodes, derive_seed(seed, 1));

    round.samples.push_back(0);
    round.area_reward.push_back(nan);
    round.area_entropy.push_back(uniform_entropy);
    round.ql_reward.push_back(nan);
    round.ql_entropy.push_back(uniform_entropy);
    const std::size_t total = std::max<std::size_t>(batch_reward.size(), ql.episodes.size());
    double ar = 0.0, ae = 0.0;
    for (std::size_t s = 1; s <= total; ++s) {
      if (s <= batch_reward.size()) {
        ar += batch_reward[s - 1];
        ae -= batch_log_q[s - 1];
      }
      if (s % cc.samples_per_iteration != 0) continue;
      round.samples.push_back(s);
      const bool area_ok = s <= batch_reward.size();
      round.area_reward.push_back(area_ok ? ar / s : nan);
      round.area_entropy.push_back(area_ok ? ae / s : nan);
      const bool ql_ok = s <= ql.episodes.size();
      round.ql_reward.push_back(ql_ok ? ql.episodes[s - 1].avg_reward : nan);
      round.ql_entropy.push_back(ql_ok ? ql.episodes[s - 1].entropy_estimate : nan);
    }
  });

  const auto& first = result.rounds.front();
  const auto collect = [&](std::size_t i, auto member) {
    std::vector<double> xs;
    for (const auto& r : result.rounds) xs.push_back((r.*member)[i]);
    return xs;
  };
  const auto interval = [&](const std::vector<double>& xs) {
    if (std::isnan(xs.front())) return Interval{nan, nan, nan};
    return student_t_interval(xs);
  };
  for (std::size_t i = 0; i < first.samples.size(); ++i) {
    result.points.push_back({first.samples[i], "area", interval(collect(i, &ComparisonRound::area_reward)),
                             interval(collect(i, &ComparisonRound::area_entropy))});
    result.points.push_back({first.samples[i], "qlearning", interval(collect(i, &ComparisonRound::ql_reward)),
                             interval(collect(i, &ComparisonRound::ql_entropy))});
  }
  return result;
}

void write_comparison_csv(const std::string& path, const ComparisonResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "samples_observed,method,avg_reward,entropy,ci90_low,ci90_high,entropy_ci90_low,entropy_ci90_high\n"
      << std::setprecision(17);
  for (const auto& p : result.points)
    out << p.samples_observed << ',' << p.method << ',' << p.reward.mean << ',' << p.entropy.mean << ','
        << p.reward.low << ',' << p.reward.high << ',' << p.entropy.low << ',' << p.entropy.high << '\n';
}

// ---------------------------------------------------------------- scaling

namespace {

// Median over repeats of the time per call, each repeat running at least
// ~20 ms so short calls are not dominated by timer resolution.
double time_ms(int repeats, const std::function<void()>& fn) {
  using clock = std::chrono::steady_clock;
  std::vector<double> samples;
  for (int r = 0; r < repeats; ++r) {
    int calls = 0;
    const auto start = clock::now();
    double elapsed = 0.0;
    do {
      fn();
      ++calls;
      elapsed = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    } while (elapsed < 20.0);
    samples.push_back(elapsed / calls);
  }
  std::sort(samples.begin(), samples.end());
  return samples[samples.size() / 2];
}

}  // namespace

ScalingResult bench_scaling(const ScalingConfig& cfg) {
  ScalingResult res;
  for (int T : cfg.horizons) {
    const ProcessSpec spec{T, cfg.human_actions, cfg.machine_actions};
    // One full-length path keeps a tree in play at every horizon.
    Trajectory path{std::vector<int>(T, 0), std::vector<int>(T, 0)};
    for (int k = 0; k < T; k += 2) path.machine[k] = (k / 2) % cfg.machine_actions;
    const RewardFunction reward{spec, periodic_target_table(spec), {{path.interleaved(), 1.0}}};
    std::vector<Constraint> eq{{decomposable_feature("follow", spec, follow_table(spec)), 0.0},
                               {decomposable_feature("weighted-follow", spec, weighted_follow_table(spec)), 0.0},
                               {reward.as_feature(), 0.0},
                               {path_feature("path", spec, path), 0.0}};
    const auto cs = build_constraint_set(eq, {});
    auto lambda = DualVars::zeros(cs);
    for (std::size_t i = 0; i < lambda.equality.size(); ++i) lambda.equality[i] = 0.3 * (1.0 + i);
    const auto q = StructuredPolicy::uniform(spec);

    ScalingRow row;
    row.horizon = T;
    StructuredModel model;
    row.dual_update_ms = time_ms(cfg.repeats, [&] {
      model = backward_z_structured(q, lambda, cs);
      const auto m = feature_moments_structured(model, q, cs);
      if (m.empty()) throw std::logic_error("no moments");
    });
    row.peak_model_entries = model.entry_count();
    row.machine_opt_ms = time_ms(cfg.repeats, [&] {
      const auto y = backward_y_structured(model, reward, 2.0);
      const auto next = extract_policy(y);
      if (next.entry_count() == 0) throw std::logic_error("empty policy");
    });
    res.rows.push_back(row);
  }
  std::vector<double> t, d, m;
  for (const auto& r : res.rows) {
    t.push_back(r.horizon);
    d.push_back(r.dual_update_ms);
    m.push_back(r.machine_opt_ms);
  }
  if (res.rows.size() >= 2) {
    res.dual_exponent = loglog_slope(t, d);
    res.machine_exponent = loglog_slope(t, m);
  }
  if (!cfg.horizons.empty()) {
    const ProcessSpec smallest{*std::min_element(cfg.horizons.begin(), cfg.horizons.end()), cfg.human_actions,
                               cfg.machine_actions};
    try {
      require_under_cap(smallest, default_trajectory_cap);
    } catch (const std::exception&) {
      res.dense_refused = true;
    }
  }
  return res;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("need two or more points");
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

void write_scaling_csv(const std::string& path, const ScalingResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "T,dual_update_ms,machine_opt_ms,peak_model_entries\n" << std::setprecision(6);
  for (const auto& r : result.rows)
    out << r.horizon << ',' << r.dual_update_ms << ',' << r.machine_opt_ms << ',' << r.peak_model_entries << '\n';
}

// ---------------------------------------------------------------- artifacts

void write_manifest(const std::string& dir, const Manifest& m) {
  std::filesystem::create_directories(dir);
  json j = {{"command", m.command},
            {"config_path", m.config_path},
            {"config_hash", m.config_hash},
            {"seed", m.seed},
            {"threads", m.threads},
            {"version", library_version},
            {"schema_version", config_schema_version},
            {"artifacts", m.artifacts},
            {"extra", m.extra}};
  std::ofstream out(std::filesystem::path(dir) / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir);
  out << j.dump(2) << '\n';
}

}  // namespace area
