#include "seqdesign/cli.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <thread>

#include "CLI11.hpp"
#include "seqdesign/backward_induction.hpp"
#include "seqdesign/boundary_opt.hpp"
#include "seqdesign/errors.hpp"
#include "seqdesign/example1.hpp"
#include "seqdesign/example2.hpp"
#include "seqdesign/forward_sim.hpp"
#include "seqdesign/nn.hpp"
#include "seqdesign/rl_pg.hpp"
#include "seqdesign/rl_qlearn.hpp"
#include "seqdesign/rollout.hpp"

#ifndef SEQDESIGN_VERSION
#define SEQDESIGN_VERSION "unknown"
#endif

namespace fs = std::filesystem;

namespace seqdesign::cli {

namespace {

constexpr int kManifestVersion = 1;

const std::vector<std::string> kSubcommands{"simulate", "dp",  "boundary", "qlearn",
                                            "dqn",      "pg",  "oracle",   "report"};

// ---- configuration ------------------------------------------------------

void merge_into(Json& base, const Json& patch, const std::string& path);

void assign(Json& slot, const Json& v, const std::string& key) {
  if (slot.is_object()) {
    merge_into(slot, v, key);
    return;
  }
  if (slot.is_boolean()) {
    if (!v.is_boolean()) throw ConfigError(key + ": expected true or false");
    slot = v;
  } else if (slot.is_number_integer()) {
    if (!v.is_number_integer()) throw ConfigError(key + ": expected an integer");
    slot = v;
  } else if (slot.is_number()) {
    if (!v.is_number()) throw ConfigError(key + ": expected a number");
    slot = v.get<double>();
  } else if (slot.is_string()) {
    if (!v.is_string()) throw ConfigError(key + ": expected a string");
    slot = v;
  } else if (slot.is_array()) {
    if (!v.is_array()) throw ConfigError(key + ": expected an array");
    const bool integers = !slot.empty() && slot.front().is_number_integer();
    Json out = Json::array();
    for (const auto& e : v) {
      if (integers ? !e.is_number_integer() : !e.is_number()) {
        throw ConfigError(key + ": expected an array of " + (integers ? "integers" : "numbers"));
      }
      out.push_back(integers ? e : Json(e.get<double>()));
    }
    slot = out;
  } else {
    slot = v;
  }
}

void merge_into(Json& base, const Json& patch, const std::string& path) {
  if (!patch.is_object()) {
    throw ConfigError((path.empty() ? std::string("configuration") : path) + ": expected an object");
  }
  for (const auto& [k, v] : patch.items()) {
    const std::string key = path.empty() ? k : path + "." + k;
    if (!base.contains(k)) throw ConfigError("unknown key '" + key + "'");
    assign(base[k], v, key);
  }
}

template <class E>
E pick(const Json& cfg, const std::string& section, const std::string& key,
       const std::vector<std::pair<std::string, E>>& choices) {
  const auto value = cfg.at(section).at(key).get<std::string>();
  std::string names;
  for (const auto& [name, e] : choices) {
    if (name == value) return e;
    names += (names.empty() ? "" : ", ") + name;
  }
  throw ConfigError(section + "." + key + ": '" + value + "' is not one of " + names);
}

struct Experiment {
  Json config;
  std::string env_id;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  fs::path root;
  ex1::Config ex1;
  ex2::Config ex2;

  bool is_ex1() const { return env_id == "example1"; }
  const Json& section(const std::string& name) const { return config.at(name); }

  std::unique_ptr<Environment> environment() const {
    if (is_ex1()) return std::make_unique<ex1::Environment>(ex1);
    return std::make_unique<ex2::Environment>(ex2);
  }
  std::uint64_t dataset_config_hash() const {
    return is_ex1() ? dataset_hash(ex1) : dataset_hash(ex2);
  }
  ForwardOptions forward_options(int episodes) const {
    const auto& s = section("simulate");
    ForwardOptions o;
    o.episodes = episodes;
    o.master_seed = seed;
    o.workers = workers;
    o.p_bins = s.at("p_bins").get<int>();
    o.summary_bins = s.at("summary_bins").get<int>();
    o.lower_pct = s.at("lower_pct").get<double>();
    o.upper_pct = s.at("upper_pct").get<double>();
    return o;
  }
  TrajectoryDataset forward(int episodes) const {
    const auto o = forward_options(episodes);
    return is_ex1() ? run_forward(ex1, o) : run_forward(ex2, o);
  }
  void require_example1(const std::string& what) const {
    if (!is_ex1()) throw ConfigError("env: " + what + " is defined for example1 only");
  }
};

Experiment make_experiment(const Json& config, unsigned workers) {
  Experiment x;
  x.config = config;
  x.env_id = config.at("env").get<std::string>();
  if (x.env_id != "example1" && x.env_id != "example2") {
    throw ConfigError("env: '" + x.env_id + "' is not one of example1, example2");
  }
  const auto& seed = config.at("seed");
  if (!seed.is_number_unsigned() && seed.get<std::int64_t>() < 0) {
    throw ConfigError("seed: must be nonnegative");
  }
  x.seed = seed.get<std::uint64_t>();
  x.root = config.at("output").get<std::string>();
  if (x.root.empty()) throw ConfigError("output: directory must not be empty");
  x.workers = std::max(1u, workers);
  x.ex1 = ex1_config_from_json(config.at("example1"));
  x.ex2 = ex2_config_from_json(config.at("example2"));
  x.ex1.validate();
  x.ex2.validate();
  if (config.at("evaluate").at("episodes").get<int>() < 1) {
    throw ConfigError("evaluate.episodes: must be positive");
  }
  return x;
}

// ---- artifacts ----------------------------------------------------------

std::string number(double v) { return format_double(v); }

class Summary {
 public:
  void add(const std::string& key, const std::string& value) { rows_.emplace_back(key, value); }
  void add(const std::string& key, double value) { add(key, number(value)); }
  void add(const std::string& key, long long value) { add(key, std::to_string(value)); }
  std::string csv() const {
    std::string out = "key,value\n";
    for (const auto& [k, v] : rows_) out += k + "," + v + "\n";
    return out;
  }

 private:
  std::vector<std::pair<std::string, std::string>> rows_;
};

class ArtifactDir {
 public:
  ArtifactDir(const Experiment& x, std::string subcommand)
      : x_(x), subcommand_(std::move(subcommand)), dir_(x.root / subcommand_) {
    fs::create_directories(dir_);
  }
  const fs::path& path() const { return dir_; }
  void write(const std::string& name, const std::string& contents) {
    csv::write_file(dir_ / name, contents);
    files_.push_back(name);
  }
  // For files written by library calls.
  void record(const std::string& name) { files_.push_back(name); }

  void finish() const {
    Json config = x_.config;
    config.erase("output");
    Json m = Json::object();
    m["manifest_version"] = kManifestVersion;
    m["subcommand"] = subcommand_;
    m["env"] = x_.env_id;
    m["seed"] = x_.seed;
    m["config_hash"] = hex64(fnv1a64(config.dump()));
    m["versions"] = {{"seqdesign", SEQDESIGN_VERSION},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                   std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    m["files"] = files_;
    m["config"] = config;
    csv::write_file(dir_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  const Experiment& x_;
  std::string subcommand_;
  fs::path dir_;
  std::vector<std::string> files_;
};

TrajectoryDataset load_simulated(const Experiment& x) {
  const auto path = x.root / "simulate" / "dataset.csv";
  if (!fs::exists(path)) {
    throw DependencyError("missing dataset " + path.string() + "; run the 'simulate' subcommand first");
  }
  TrajectoryDataset data;
  try {
    data = load_dataset(path);
    require_compatible(data, x.env_id, x.dataset_config_hash());
  } catch (const DataError& e) {
    throw DependencyError(std::string(e.what()) + "; rerun the 'simulate' subcommand");
  }
  const int episodes = x.section("simulate").at("episodes").get<int>();
  if (data.master_seed != x.seed || data.episodes != episodes) {
    throw DependencyError("dataset " + path.string() +
                          " was simulated with a different seed or episode count; rerun the "
                          "'simulate' subcommand");
  }
  return data;
}

RolloutSummary evaluate(const Experiment& x, const Environment& env, DecisionRule rule) {
  const auto& e = x.section("evaluate");
  return evaluate_rollouts(env, with_forced_steps(env, std::move(rule)), e.at("episodes").get<int>(),
                           e.at("seed").get<std::uint64_t>(), x.workers);
}

void add_evaluation(Summary& s, const RolloutSummary& r) {
  s.add("fresh_mean", r.mean);
  s.add("fresh_se", r.se);
  s.add("fresh_episodes", static_cast<long long>(r.returns.size()));
}

HeatmapStyle policy_style(const Experiment& x, const std::string& title) {
  HeatmapStyle s;
  s.title = title;
  s.x_label = x.is_ex1() ? "t" : "posterior sd of effect";
  s.y_label = x.is_ex1() ? "p (success fraction)" : "posterior mean of effect";
  return s;
}

void write_heatmap(ArtifactDir& dir, const std::string& name, const std::string& table_csv,
                   const HeatmapStyle& style) {
  dir.write(name, render_heatmap(csv::parse(table_csv, name), style));
}

// ---- subcommands --------------------------------------------------------

void cmd_simulate(const Experiment& x, std::ostream& out) {
  const auto data = x.forward(x.section("simulate").at("episodes").get<int>());
  ArtifactDir dir(x, "simulate");
  save_dataset(data, dir.path() / "dataset.csv");
  dir.record("dataset.csv");
  dir.record(metadata_path(dir.path() / "dataset.csv").filename().string());
  Summary s;
  s.add("episodes", static_cast<long long>(data.episodes));
  s.add("t_max", static_cast<long long>(data.t_max));
  s.add("dataset_hash", hex64(data.config_hash));
  dir.write("summary.csv", s.csv());
  dir.finish();
  out << "simulate: " << data.episodes << " episodes -> " << dir.path().string() << "\n";
}

void cmd_dp(const Experiment& x, std::ostream& out) {
  const auto data = load_simulated(x);
  const auto& c = x.section("dp");
  bi::Options options;
  options.max_iterations = c.at("max_iterations").get<int>();
  if (options.max_iterations < 1) throw ConfigError("dp.max_iterations: must be positive");
  options.order = pick<bi::SweepOrder>(x.config, "dp", "order",
                                       {{"auto", bi::SweepOrder::Auto},
                                        {"time_descending", bi::SweepOrder::TimeDescending},
                                        {"sd_ascending", bi::SweepOrder::SdAscending},
                                        {"cell_index", bi::SweepOrder::CellIndex}});
  const auto table = bi::solve(data, options);
  const auto env = x.environment();
  const auto fresh = evaluate(x, *env, [&table](const Episode& ep) { return table.decide(ep.state()); });

  ArtifactDir dir(x, "dp");
  const auto csv_text = bi::to_csv(table);
  dir.write("policy.csv", csv_text);
  write_heatmap(dir, "policy.svg", csv_text, policy_style(x, "backward induction policy"));
  Summary s;
  s.add("iterations", static_cast<long long>(table.iterations));
  s.add("converged", table.converged ? "true" : "false");
  s.add("visited_cells", static_cast<long long>(std::count_if(
                             table.counts.begin(), table.counts.end(), [](auto n) { return n > 0; })));
  add_evaluation(s, fresh);
  dir.write("summary.csv", s.csv());
  dir.finish();
  out << "dp: " << table.iterations << " sweeps, fresh value " << number(fresh.mean) << " +- "
      << number(fresh.se) << "\n";
}

std::vector<std::vector<double>> boundary_nodes(const Experiment& x) {
  const auto& c = x.section("boundary");
  if (x.is_ex1()) {
    return boundary::tensor_grid({boundary::linspace(c.at("phi_min").get<double>(),
                                                     c.at("phi_max").get<double>(),
                                                     c.at("phi_points").get<int>())});
  }
  const double b_max = c.at("b_max").get<double>();
  const int nb = c.at("b_points").get<int>();
  return boundary::tensor_grid({boundary::linspace(0.0, b_max, nb), boundary::linspace(0.0, b_max, nb),
                                boundary::linspace(0.0, 1.0, c.at("c_points").get<int>())});
}

void cmd_boundary(const Experiment& x, std::ostream& out) {
  const auto data = load_simulated(x);
  const auto best = boundary::optimize(data, boundary_nodes(x), x.workers);
  const auto rule = boundary::boundary_rule(data, best.fit.optimum);
  const auto env = x.environment();
  const auto fresh =
      evaluate(x, *env, [&rule](const Episode& ep) { return rule(ep.state(), ep.t()); });

  ArtifactDir dir(x, "boundary");
  dir.write("grid.csv", boundary::to_csv(best.table));
  dir.write("fit.csv", boundary::to_csv(best.fit, best.table.names));
  Summary s;
  for (std::size_t i = 0; i < best.table.names.size(); ++i) {
    s.add(best.table.names[i], best.fit.optimum[i]);
  }
  s.add("in_sample_mean", best.value.mean);
  s.add("in_sample_se", best.value.se);
  s.add("fallback", best.fit.fallback ? "true" : "false");
  add_evaluation(s, fresh);
  dir.write("summary.csv", s.csv());
  dir.finish();
  out << "boundary:";
  for (std::size_t i = 0; i < best.table.names.size(); ++i) {
    out << " " << best.table.names[i] << "=" << number(best.fit.optimum[i]);
  }
  out << ", value " << number(best.value.mean) << " +- " << number(best.value.se) << "\n";
}

rl::EpsilonSchedule epsilon_from(const Json& c) {
  rl::EpsilonSchedule e;
  e.initial = c.at("epsilon_initial").get<double>();
  e.final = c.at("epsilon_final").get<double>();
  e.decay_fraction = c.at("epsilon_decay_fraction").get<double>();
  e.validate();
  return e;
}

void cmd_qlearn(const Experiment& x, std::ostream& out) {
  x.require_example1("tabular Q-learning");
  const auto& c = x.section("qlearn");
  rl::TabularOptions o;
  o.episodes = c.at("episodes").get<long>();
  o.epsilon = epsilon_from(c);
  o.constant_alpha = c.at("constant_alpha").get<double>();
  o.alpha_exponent = c.at("alpha_exponent").get<double>();
  o.master_seed = x.seed;
  o.p_bins = x.section("simulate").at("p_bins").get<int>();
  const auto table = rl::run_tabular(x.ex1, o);
  const auto env = x.environment();
  const auto fresh = evaluate(x, *env, rl::greedy_rule(table));

  ArtifactDir dir(x, "qlearn");
  const auto csv_text = rl::to_csv(table);
  dir.write("qtable.csv", csv_text);
  write_heatmap(dir, "policy.svg", csv_text, policy_style(x, "tabular Q-learning greedy policy"));
  Summary s;
  s.add("episodes", static_cast<long long>(o.episodes));
  add_evaluation(s, fresh);
  dir.write("summary.csv", s.csv());
  dir.finish();
  out << "qlearn: fresh value " << number(fresh.mean) << " +- " << number(fresh.se) << "\n";
}

std::vector<int> hidden_from(const Json& c) { return c.at("hidden").get<std::vector<int>>(); }

void cmd_dqn(const Experiment& x, std::ostream& out) {
  const auto& c = x.section("dqn");
  rl::DqnConfig d;
  d.hidden = hidden_from(c);
  d.total_steps = c.at("total_steps").get<long>();
  d.buffer_capacity = c.at("buffer_capacity").get<std::size_t>();
  d.batch_size = c.at("batch_size").get<int>();
  d.learning_rate = c.at("learning_rate").get<double>();
  d.epsilon = epsilon_from(c);
  d.target_sync = c.at("target_sync").get<long>();
  d.learning_starts = c.at("learning_starts").get<long>();
  d.train_every = c.at("train_every").get<int>();
  d.eval_every = c.at("eval_every").get<long>();
  d.eval_episodes = c.at("eval_episodes").get<int>();
  d.reward_scale = c.at("reward_scale").get<double>();
  d.validate();
  const auto env = x.environment();
  ArtifactDir dir(x, "dqn");
  rl::DqnResult result;
  try {
    result = rl::dqn_train(*env, d, x.seed, x.workers);
  } catch (const rl::TrainingDiverged& e) {
    dir.write("trace.csv", rl::to_csv(e.trace()));
    dir.finish();
    throw;
  }
  const auto fresh = evaluate(x, *env, rl::greedy_rule(result.best));
  dir.write("trace.csv", rl::to_csv(result.trace));
  nn::save(result.best, dir.path() / "model.bin");
  dir.record("model.bin");
  Summary s;
  s.add("best_step", static_cast<long long>(result.best_step));
  s.add("best_checkpoint_mean", result.best_mean);
  add_evaluation(s, fresh);
  dir.write("summary.csv", s.csv());
  dir.finish();
  out << "dqn: best step " << result.best_step << ", fresh value " << number(fresh.mean) << " +- "
      << number(fresh.se) << "\n";
}

void cmd_pg(const Experiment& x, std::ostream& out) {
  const auto& c = x.section("pg");
  pg::PgConfig p;
  p.hidden = hidden_from(c);
  p.episodes_per_batch = c.at("episodes_per_batch").get<int>();
  p.batches = c.at("batches").get<int>();
  p.learning_rate = c.at("learning_rate").get<double>();
  p.baseline = pick<pg::Baseline>(x.config, "pg", "baseline",
                                  {{"none", pg::Baseline::None},
                                   {"batch_mean", pg::Baseline::BatchMean},
                                   {"per_step", pg::Baseline::PerStep}});
  p.entropy_coef = c.at("entropy_coef").get<double>();
  p.entropy_final = c.at("entropy_final").get<double>();
  p.reward_to_go = c.at("reward_to_go").get<bool>();
  p.normalize_returns = c.at("normalize_returns").get<bool>();
  const auto bias = c.at("initial_bias").get<std::vector<double>>();
  if (bias.size() != 3) throw ConfigError("pg.initial_bias: expected three numbers");
  std::copy(bias.begin(), bias.end(), p.initial_bias.begin());
  p.eval_every = c.at("eval_every").get<int>();
  p.eval_episodes = c.at("eval_episodes").get<int>();
  p.standardizer_episodes = c.at("standardizer_episodes").get<int>();
  p.validate();

  const auto reference = x.forward(p.standardizer_episodes);
  const auto env = x.environment();
  ArtifactDir dir(x, "pg");
  pg::PgResult result{pg::Policy(nn::Mlp({2, 3}, nn::Activation::Linear, 0), {}), 0, 0.0, {}};
  try {
    result = pg::train(*env, reference, p, x.seed, x.workers);
  } catch (const pg::PgDiverged& e) {
    dir.write("trace.csv", pg::to_csv(e.trace()));
    dir.finish();
    throw;
  }
  const auto fresh = evaluate(x, *env, pg::mode_rule(result.best));
  const auto regions =
      pg::extract_regions(result.best, reference.grid, pg::dataset_states(reference), 1, reference.t_max);
  dir.write("trace.csv", pg::to_csv(result.trace));
  const auto region_csv = pg::to_csv(regions);
  dir.write("regions.csv", region_csv);
  auto style = policy_style(x, "policy-gradient mode action");
  style.mask_column = "visits";
  write_heatmap(dir, "regions.svg", region_csv, style);
  nn::save(result.best.net(), dir.path() / "model.bin");
  dir.record("model.bin");
  Summary s;
  s.add("best_batch", static_cast<long long>(result.best_batch));
  s.add("best_checkpoint_mean", result.best_mean);
  s.add("banded_row_fraction", pg::banded_row_fraction(regions));
  add_evaluation(s, fresh);
  dir.write("summary.csv", s.csv());
  dir.finish();
  out << "pg: best batch " << result.best_batch << ", fresh value " << number(fresh.mean) << " +- "
      << number(fresh.se) << "\n";
}

std::string oracle_csv(const ex1::ExactSolution& sol) {
  std::string out = "t,k,p,u_continue,u_stop1,u_stop2,value,action\n";
  for (int t = 0; t <= sol.t_max(); ++t) {
    for (int k = 0; k <= t; ++k) {
      out += std::to_string(t) + "," + std::to_string(k) + "," +
             number(t == 0 ? 0.0 : static_cast<double>(k) / t);
      for (auto a : {Action::Continue, Action::Stop1, Action::Stop2}) {
        const double u = sol.utility(t, k, a);
        out += "," + (std::isfinite(u) ? number(u) : std::string());
      }
      out += "," + number(sol.value(t, k)) + "," + std::to_string(index_of(sol.policy(t, k))) + "\n";
    }
  }
  return out;
}

void cmd_oracle(const Experiment& x, std::ostream& out) {
  x.require_example1("the exact lattice oracle");
  const auto sol = ex1::exact_dp(x.ex1);
  ArtifactDir dir(x, "oracle");
  const auto csv_text = oracle_csv(sol);
  dir.write("oracle.csv", csv_text);
  HeatmapStyle style;
  style.title = "exact optimal policy";
  style.x_column = "t";
  style.y_column = "k";
  style.x_label = "t";
  style.y_label = "k (successes)";
  write_heatmap(dir, "policy.svg", csv_text, style);
  Summary s;
  s.add("optimal_value", sol.optimal_value());
  dir.write("summary.csv", s.csv());
  dir.finish();
  out << "oracle: optimal value " << number(sol.optimal_value()) << "\n";
}

struct ReportSource {
  std::string subcommand;
  std::string table;
  HeatmapStyle style;
};

void cmd_report(const Experiment& x, std::ostream& out) {
  std::vector<ReportSource> sources;
  auto policy = [&](const std::string& title) { return policy_style(x, title); };
  sources.push_back({"dp", "policy.csv", policy("backward induction policy")});
  sources.push_back({"qlearn", "qtable.csv", policy("tabular Q-learning greedy policy")});
  {
    auto s = policy("policy-gradient mode action");
    s.mask_column = "visits";
    sources.push_back({"pg", "regions.csv", s});
  }
  {
    HeatmapStyle s;
    s.title = "exact optimal policy";
    s.x_column = "t";
    s.y_column = "k";
    s.x_label = "t";
    s.y_label = "k (successes)";
    sources.push_back({"oracle", "oracle.csv", s});
  }

  std::string collated = "subcommand,key,value\n";
  std::vector<std::pair<std::string, std::string>> renders;
  int found = 0;
  for (const auto& sub : kSubcommands) {
    if (sub == "report") continue;
    const auto dir = x.root / sub;
    const auto manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) continue;
    ++found;
    Json manifest;
    try {
      manifest = Json::parse(csv::read_file(manifest_path));
    } catch (const Json::exception& e) {
      throw DependencyError(manifest_path.string() + ": " + e.what() + "; rerun '" + sub + "'");
    }
    for (const auto& f : manifest.at("files")) {
      const auto name = f.get<std::string>();
      if (!fs::exists(dir / name)) {
        throw DependencyError("report: " + (dir / name).string() + " listed in " +
                              manifest_path.string() + " is missing; rerun '" + sub + "'");
      }
    }
    const auto summary = csv::read(dir / "summary.csv");
    const auto key = summary.column("key");
    const auto value = summary.column("value");
    for (const auto& row : summary.rows) collated += sub + "," + row[key] + "," + row[value] + "\n";
    for (const auto& src : sources) {
      if (src.subcommand != sub) continue;
      renders.emplace_back(sub + "_" + fs::path(src.table).stem().string() + ".svg",
                           render_heatmap(csv::read(dir / src.table), src.style));
    }
  }
  if (found == 0) {
    throw DependencyError("report: no artifacts under " + x.root.string() +
                          "; run simulate, dp, boundary, qlearn, dqn, pg or oracle first");
  }
  ArtifactDir report(x, "report");
  report.write("summary.csv", collated);
  for (const auto& [name, svg] : renders) report.write(name, svg);
  report.finish();
  out << "report: " << found << " subcommand(s) collated -> " << report.path().string() << "\n";
}

using Command = std::function<void(const Experiment&, std::ostream&)>;

const std::map<std::string, Command>& commands() {
  static const std::map<std::string, Command> m{
      {"simulate", cmd_simulate}, {"dp", cmd_dp},         {"boundary", cmd_boundary},
      {"qlearn", cmd_qlearn},     {"dqn", cmd_dqn},       {"pg", cmd_pg},
      {"oracle", cmd_oracle},     {"report", cmd_report}};
  return m;
}

// ---- SVG ----------------------------------------------------------------

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string ramp(double f) {
  // Light to dark blue.
  const int lo[3] = {247, 251, 255};
  const int hi[3] = {8, 48, 107};
  char buf[8];
  int c[3];
  for (int i = 0; i < 3; ++i) c[i] = static_cast<int>(std::lround(lo[i] + f * (hi[i] - lo[i])));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

}  // namespace

Json default_config() {
  Json j = Json::object();
  j["env"] = "example1";
  j["seed"] = 1;
  j["output"] = "runs";
  j["example1"] = to_json(ex1::Config{});
  j["example2"] = to_json(ex2::Config{});
  j["simulate"] = {{"episodes", 1000},
                   {"p_bins", 100},
                   {"summary_bins", 50},
                   {"lower_pct", 0.01},
                   {"upper_pct", 0.99}};
  j["dp"] = {{"max_iterations", 100}, {"order", "auto"}};
  j["boundary"] = {{"phi_min", 0.02}, {"phi_max", 0.98}, {"phi_points", 33},
                   {"b_max", 3.0},    {"b_points", 10},   {"c_points", 10}};
  const rl::TabularOptions q;
  j["qlearn"] = {{"episodes", q.episodes},
                 {"alpha_exponent", q.alpha_exponent},
                 {"constant_alpha", q.constant_alpha},
                 {"epsilon_initial", q.epsilon.initial},
                 {"epsilon_final", q.epsilon.final},
                 {"epsilon_decay_fraction", q.epsilon.decay_fraction}};
  const rl::DqnConfig d;
  j["dqn"] = {{"hidden", d.hidden},
              {"total_steps", d.total_steps},
              {"buffer_capacity", d.buffer_capacity},
              {"batch_size", d.batch_size},
              {"learning_rate", d.learning_rate},
              {"epsilon_initial", d.epsilon.initial},
              {"epsilon_final", d.epsilon.final},
              {"epsilon_decay_fraction", d.epsilon.decay_fraction},
              {"target_sync", d.target_sync},
              {"learning_starts", d.learning_starts},
              {"train_every", d.train_every},
              {"eval_every", d.eval_every},
              {"eval_episodes", d.eval_episodes},
              {"reward_scale", d.reward_scale}};
  const pg::PgConfig p;
  j["pg"] = {{"hidden", p.hidden},
             {"episodes_per_batch", p.episodes_per_batch},
             {"batches", p.batches},
             {"learning_rate", p.learning_rate},
             {"baseline", "batch_mean"},
             {"entropy_coef", p.entropy_coef},
             {"entropy_final", p.entropy_final},
             {"reward_to_go", p.reward_to_go},
             {"normalize_returns", p.normalize_returns},
             {"initial_bias", p.initial_bias},
             {"eval_every", p.eval_every},
             {"eval_episodes", p.eval_episodes},
             {"standardizer_episodes", p.standardizer_episodes}};
  j["evaluate"] = {{"episodes", 10000}, {"seed", 1000003}};
  return j;
}

void apply_override(Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "': expected key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;  // bare strings need no quotes
  Json* slot = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!slot->is_object() || !slot->contains(part)) throw ConfigError("unknown key '" + key + "'");
    slot = &(*slot)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  assign(*slot, value, key);
}

Json resolve_config(const fs::path& file, const std::vector<std::string>& overrides) {
  Json config = default_config();
  if (!file.empty()) {
    if (!fs::exists(file)) throw ConfigError("config file " + file.string() + " does not exist");
    Json j = Json::parse(csv::read_file(file), nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file " + file.string() + ": invalid JSON");
    if (j.is_object() && j.contains("manifest_version") && j.contains("config")) {
      const auto output = config["output"];
      Json inner = j["config"];
      merge_into(config, inner, "");
      config["output"] = output;
    } else {
      merge_into(config, j, "");
    }
  }
  for (const auto& o : overrides) apply_override(config, o);
  return config;
}

std::string render_heatmap(const csv::Table& table, const HeatmapStyle& style) {
  if (table.rows.empty()) throw DataError("heatmap: table has no rows");
  const auto xc = table.column(style.x_column);
  const auto yc = table.column(style.y_column);
  const auto vc = table.column(style.value_column);
  const bool masked = !style.mask_column.empty();
  const auto mc = masked ? table.column(style.mask_column) : 0;

  struct Cell {
    long long x, y;
    double v;
    bool faded;
  };
  std::vector<Cell> cells;
  cells.reserve(table.rows.size());
  double vmin = std::numeric_limits<double>::infinity();
  double vmax = -vmin;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.line_numbers[r];
    Cell c{csv::to_int(row[xc], line, style.x_column), csv::to_int(row[yc], line, style.y_column), 0.0,
           masked && csv::to_double(row[mc], line, style.mask_column) == 0.0};
    if (style.categorical) {
      const auto code = csv::to_int(row[vc], line, style.value_column);
      if (code < 0 || code > 2) {
        throw DataError("heatmap: line " + std::to_string(line) + ": action code " +
                        std::to_string(code) + " is not 0, 1 or 2");
      }
      c.v = static_cast<double>(code);
    } else {
      c.v = row[vc].empty() ? std::nan("") : csv::to_double(row[vc], line, style.value_column);
      if (std::isfinite(c.v)) {
        vmin = std::min(vmin, c.v);
        vmax = std::max(vmax, c.v);
      }
    }
    cells.push_back(c);
  }
  long long x0 = cells[0].x, x1 = x0, y0 = cells[0].y, y1 = y0;
  for (const auto& c : cells) {
    x0 = std::min(x0, c.x);
    x1 = std::max(x1, c.x);
    y0 = std::min(y0, c.y);
    y1 = std::max(y1, c.y);
  }
  const long long nx = x1 - x0 + 1, ny = y1 - y0 + 1;
  // Cells shrink for large tables but stay at least 2 px.
  const long long size = std::max<long long>(2, std::min<long long>(16, 600 / std::max(nx, ny)));
  const long long left = 70, top = 40, legend = 150;
  const long long width = left + nx * size + 20 + legend, height = top + ny * size + 60;

  static const std::array<const char*, 3> kPalette{"#bdbdbd", "#2c7bb6", "#d7191c"};
  static const std::array<const char*, 3> kNames{"Continue", "Stop1", "Stop2"};
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
       std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) + " " +
       std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  s += "<text x=\"" + std::to_string(left) + "\" y=\"20\" font-size=\"14\">" + escape(style.title) +
       "</text>\n";
  for (const auto& c : cells) {
    std::string fill;
    if (style.categorical) {
      fill = kPalette[static_cast<int>(c.v)];
    } else if (!std::isfinite(c.v)) {
      fill = "#ffffff";
    } else {
      fill = ramp(vmax > vmin ? (c.v - vmin) / (vmax - vmin) : 0.5);
    }
    const long long px = left + (c.x - x0) * size;
    const long long py = top + (y1 - c.y) * size;
    s += "<rect class=\"cell\" x=\"" + std::to_string(px) + "\" y=\"" + std::to_string(py) +
         "\" width=\"" + std::to_string(size) + "\" height=\"" + std::to_string(size) + "\" fill=\"" +
         fill + "\"" + (c.faded ? " fill-opacity=\"0.25\"" : "") + "/>\n";
  }
  const long long bottom = top + ny * size;
  const long long right = left + nx * size;
  s += "<rect x=\"" + std::to_string(left) + "\" y=\"" + std::to_string(top) + "\" width=\"" +
       std::to_string(nx * size) + "\" height=\"" + std::to_string(ny * size) +
       "\" fill=\"none\" stroke=\"#000000\"/>\n";
  s += "<text x=\"" + std::to_string(left) + "\" y=\"" + std::to_string(bottom + 15) + "\">" +
       std::to_string(x0) + "</text>\n";
  s += "<text x=\"" + std::to_string(right) + "\" y=\"" + std::to_string(bottom + 15) +
       "\" text-anchor=\"end\">" + std::to_string(x1) + "</text>\n";
  s += "<text x=\"" + std::to_string((left + right) / 2) + "\" y=\"" + std::to_string(bottom + 35) +
       "\" text-anchor=\"middle\">" + escape(style.x_label) + " (" + escape(style.x_column) +
       " index)</text>\n";
  s += "<text x=\"" + std::to_string(left - 5) + "\" y=\"" + std::to_string(bottom) +
       "\" text-anchor=\"end\">" + std::to_string(y0) + "</text>\n";
  s += "<text x=\"" + std::to_string(left - 5) + "\" y=\"" + std::to_string(top + 10) +
       "\" text-anchor=\"end\">" + std::to_string(y1) + "</text>\n";
  const long long mid = (top + bottom) / 2;
  s += "<text x=\"20\" y=\"" + std::to_string(mid) + "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " +
       std::to_string(mid) + ")\">" + escape(style.y_label) + " (" + escape(style.y_column) +
       " index)</text>\n";
  const long long lx = right + 20;
  if (style.categorical) {
    for (int a = 0; a < 3; ++a) {
      const long long ly = top + a * 20;
      s += "<rect x=\"" + std::to_string(lx) + "\" y=\"" + std::to_string(ly) +
           "\" width=\"12\" height=\"12\" fill=\"" + kPalette[a] + "\"/>\n";
      s += "<text x=\"" + std::to_string(lx + 18) + "\" y=\"" + std::to_string(ly + 11) + "\">" +
           kNames[a] + "</text>\n";
    }
  } else if (std::isfinite(vmin)) {
    s += "<text x=\"" + std::to_string(lx) + "\" y=\"" + std::to_string(top + 11) + "\">max " +
         escape(number(vmax)) + "</text>\n";
    s += "<text x=\"" + std::to_string(lx) + "\" y=\"" + std::to_string(top + 31) + "\">min " +
         escape(number(vmin)) + "</text>\n";
  }
  if (masked) {
    s += "<text x=\"" + std::to_string(lx) + "\" y=\"" + std::to_string(top + 71) +
         "\">faded: no visits</text>\n";
  }
  s += "</svg>\n";
  return s;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulation-based sequential design solvers"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  static const std::map<std::string, std::string> kHelp{
      {"simulate", "forward-simulate no-stopping trajectories (dataset for dp and boundary)"},
      {"dp", "constrained backward induction on the simulated dataset"},
      {"boundary", "grid search and quadratic fit of the parametric stopping boundary"},
      {"qlearn", "tabular Q-learning (example1)"},
      {"dqn", "deep Q-network with replay and target network"},
      {"pg", "REINFORCE policy gradient and decision regions"},
      {"oracle", "exact lattice dynamic programming (example1)"},
      {"report", "collate summaries and render heatmaps from existing artifacts"}};
  app.name("seqdesign");
  for (const auto& name : kSubcommands) {
    auto* sub = app.add_subcommand(name, kHelp.at(name));
    sub->add_option("-c,--config", config_path, "JSON experiment configuration");
    sub->add_option("-s,--set", overrides, "override a key: dotted.key=value (repeatable)");
    sub->add_option("-o,--output", output, "artifact root directory (overrides 'output')");
    sub->add_option("-w,--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  }
  auto* defaults = app.add_subcommand("defaults", "print the default configuration");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (defaults->parsed()) {
      out << default_config().dump(2) << "\n";
      return kExitOk;
    }
    const auto name = app.get_subcommands().front()->get_name();
    Json config = resolve_config(config_path, overrides);
    if (!output.empty()) config["output"] = output;
    const auto experiment = make_experiment(config, workers);
    commands().at(name)(experiment, out);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ResourceError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DependencyError& e) {
    err << "dependency error: " << e.what() << "\n";
    return kExitDependency;
  } catch (const DataError& e) {
    err << "dependency error: " << e.what() << "\n";
    return kExitDependency;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "file error: " << e.what() << "\n";
    return kExitDependency;
  }
}

}  // namespace seqdesign::cli
