#include "seqdesign/forward_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <new>
#include <sstream>

#include "seqdesign/csv.hpp"
#include "seqdesign/errors.hpp"
#include "seqdesign/parallel.hpp"

namespace seqdesign {

namespace {

constexpr int kFormatVersion = 1;

void simulate_into(const Environment& env, TrajectoryDataset& data, const ForwardOptions& options) {
  if (options.episodes < 1) throw ConfigError("forward simulation: episodes must be >= 1");
  const int T = env.t_max();
  data.env_id = std::string(env.id());
  data.master_seed = options.master_seed;
  data.episodes = options.episodes;
  data.t_max = T;
  try {
    data.theta.assign(options.episodes, {});
    data.steps.assign(static_cast<std::size_t>(options.episodes) * T, {});
  } catch (const std::bad_alloc&) {
    data.theta.clear();
    data.steps.clear();
    throw ResourceError("forward simulation: cannot allocate " + std::to_string(options.episodes) +
                        " x " + std::to_string(T) + " steps");
  }
  parallel_for(static_cast<std::size_t>(options.episodes), options.workers, [&](std::size_t m) {
    auto ep = env.reset({options.master_seed, m});
    data.theta[m] = ep->theta();
    for (int t = 1; t <= T; ++t) {
      ep->step(Action::Continue);
      auto& rec = data.steps[m * T + (t - 1)];
      rec.summary = ep->state();
      rec.outcome = ep->last_outcome();
      rec.dose = ep->last_dose().value_or(std::numeric_limits<double>::quiet_NaN());
    }
  });
}

double percentile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const auto idx = static_cast<std::size_t>(std::floor(p * (values.size() - 1)));
  return values[std::min(idx, values.size() - 1)];
}

Axis fitted_axis(const TrajectoryDataset& data, int component, int bins, double lo_p, double hi_p) {
  std::vector<double> v;
  v.reserve(data.steps.size());
  for (const auto& s : data.steps) v.push_back(s.summary[component]);
  double lo = percentile(v, lo_p);
  double hi = percentile(v, hi_p);
  if (!(hi > lo)) {
    const double pad = std::max(1e-6, std::abs(lo) * 1e-6);
    lo -= pad;
    hi += pad;
  }
  return Axis{component, lo, hi, bins};
}

}  // namespace

bool TrajectoryDataset::operator==(const TrajectoryDataset& o) const {
  if (env_id != o.env_id || config != o.config || config_hash != o.config_hash ||
      master_seed != o.master_seed || episodes != o.episodes || t_max != o.t_max ||
      !(grid == o.grid) || theta != o.theta || steps.size() != o.steps.size()) {
    return false;
  }
  const auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& a = steps[i];
    const auto& b = o.steps[i];
    if (a.summary != b.summary || !same(a.outcome, b.outcome) || !same(a.dose, b.dose)) return false;
  }
  return true;
}

std::uint64_t dataset_hash(const ex1::Config& c) { return config_hash("example1", to_json(c)); }
std::uint64_t dataset_hash(const ex2::Config& c) { return config_hash("example2", to_json(c)); }

TrajectoryDataset run_forward(const ex1::Config& config, const ForwardOptions& options) {
  const ex1::Environment env(config);
  TrajectoryDataset data;
  data.config = to_json(config);
  data.config_hash = dataset_hash(config);
  simulate_into(env, data, options);
  data.grid = example1_grid(config.t_max, options.p_bins);
  return data;
}

TrajectoryDataset run_forward(const ex2::Config& config, const ForwardOptions& options) {
  const ex2::Environment env(config);
  TrajectoryDataset data;
  data.config = to_json(config);
  data.config_hash = dataset_hash(config);
  simulate_into(env, data, options);
  // Axis 0: posterior sd of the ED95 effect; axis 1: posterior mean.
  data.grid.axes[0] = fitted_axis(data, 1, options.summary_bins, options.lower_pct, options.upper_pct);
  data.grid.axes[1] = fitted_axis(data, 0, options.summary_bins, options.lower_pct, options.upper_pct);
  return data;
}

std::filesystem::path metadata_path(const std::filesystem::path& csv_path) {
  return std::filesystem::path(csv_path.string() + ".meta.json");
}

void save_dataset(const TrajectoryDataset& data, const std::filesystem::path& path) {
  std::string out = "episode_id,t,theta_0,theta_1,s_0,s_1,y,x\n";
  out.reserve(data.steps.size() * 120);
  for (int m = 0; m < data.episodes; ++m) {
    const auto& th = data.theta[m];
    const std::string prefix_theta = format_double(th[0]) + "," + format_double(th[1]);
    for (int t = 1; t <= data.t_max; ++t) {
      const auto& s = data.step(m, t);
      out += std::to_string(m);
      out += ',';
      out += std::to_string(t);
      out += ',';
      out += prefix_theta;
      out += ',';
      out += format_double(s.summary[0]);
      out += ',';
      out += format_double(s.summary[1]);
      out += ',';
      out += format_double(s.outcome);
      out += ',';
      if (!std::isnan(s.dose)) out += format_double(s.dose);
      out += '\n';
    }
  }
  csv::write_file(path, out);

  Json meta;
  meta["format_version"] = kFormatVersion;
  meta["env_id"] = data.env_id;
  meta["config"] = data.config;
  meta["config_hash"] = hex64(data.config_hash);
  meta["master_seed"] = data.master_seed;
  meta["episodes"] = data.episodes;
  meta["t_max"] = data.t_max;
  meta["grid"] = to_json(data.grid);
  csv::write_file(metadata_path(path), meta.dump(2) + "\n");
}

TrajectoryDataset load_dataset(const std::filesystem::path& path) {
  TrajectoryDataset data;
  Json meta;
  try {
    meta = Json::parse(csv::read_file(metadata_path(path)));
    if (meta.at("format_version").get<int>() != kFormatVersion) {
      throw DataError("dataset metadata: unsupported format_version");
    }
    data.env_id = meta.at("env_id").get<std::string>();
    data.config = meta.at("config");
    data.config_hash = parse_hex64(meta.at("config_hash").get<std::string>());
    data.master_seed = meta.at("master_seed").get<std::uint64_t>();
    data.episodes = meta.at("episodes").get<int>();
    data.t_max = meta.at("t_max").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("dataset metadata '" + metadata_path(path).string() + "': " + e.what());
  }
  data.grid = grid_from_json(meta.at("grid"));
  if (config_hash(data.env_id, data.config) != data.config_hash) {
    throw DataError("dataset metadata: config hash does not match the stored configuration");
  }
  if (data.episodes < 1 || data.t_max < 1) throw DataError("dataset metadata: invalid sizes");

  const auto table = csv::read(path);
  const std::vector<std::string> expected_header = {"episode_id", "t", "theta_0", "theta_1",
                                                    "s_0",        "s_1", "y",      "x"};
  if (table.header != expected_header) throw DataError(path.string() + ": unexpected CSV header");
  const std::size_t expected_rows = static_cast<std::size_t>(data.episodes) * data.t_max;
  if (table.rows.size() != expected_rows) {
    const std::size_t line = table.line_numbers.empty() ? 1 : table.line_numbers.back();
    throw DataError(path.string() + ": line " + std::to_string(line) + ": expected " +
                    std::to_string(expected_rows) + " data rows, found " +
                    std::to_string(table.rows.size()) + " (truncated file?)");
  }
  data.theta.resize(data.episodes);
  data.steps.resize(expected_rows);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::size_t line = table.line_numbers[i];
    const auto m = static_cast<int>(i / data.t_max);
    const int t = static_cast<int>(i % data.t_max) + 1;
    if (csv::to_int(row[0], line, "episode_id") != m || csv::to_int(row[1], line, "t") != t) {
      throw DataError(path.string() + ": line " + std::to_string(line) +
                      ": rows out of order (expected episode " + std::to_string(m) + ", t " +
                      std::to_string(t) + ")");
    }
    const std::array<double, 2> th = {csv::to_double(row[2], line, "theta_0"),
                                      csv::to_double(row[3], line, "theta_1")};
    if (t == 1) {
      data.theta[m] = th;
    } else if (th != data.theta[m]) {
      throw DataError(path.string() + ": line " + std::to_string(line) +
                      ": theta changes within an episode");
    }
    auto& s = data.steps[i];
    s.summary = {csv::to_double(row[4], line, "s_0"), csv::to_double(row[5], line, "s_1")};
    s.outcome = csv::to_double(row[6], line, "y");
    s.dose = row[7].empty() ? std::numeric_limits<double>::quiet_NaN()
                            : csv::to_double(row[7], line, "x");
  }
  return data;
}

void require_compatible(const TrajectoryDataset& data, std::string_view env_id,
                        std::uint64_t expected_hash) {
  if (data.env_id != env_id) {
    throw DataError("dataset was generated for '" + data.env_id + "', expected '" +
                    std::string(env_id) + "'");
  }
  if (data.config_hash != expected_hash) {
    throw DataError("dataset config hash " + hex64(data.config_hash) +
                    " does not match the solver configuration hash " + hex64(expected_hash));
  }
}

}  // namespace seqdesign
