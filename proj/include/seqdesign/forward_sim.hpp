#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "seqdesign/config_io.hpp"
#include "seqdesign/env_core.hpp"
#include "seqdesign/grid.hpp"

namespace seqdesign {

struct StepRecord {
  State summary{};
  double outcome = 0.0;
  double dose = 0.0;  // NaN when the design has no doses
};

// M no-stopping trajectories of t_max steps each, plus the grid used by the
// grid-based solvers. Immutable once built; safe to share across threads.
struct TrajectoryDataset {
  std::string env_id;
  Json config;
  std::uint64_t config_hash = 0;
  std::uint64_t master_seed = 0;
  int episodes = 0;
  int t_max = 0;
  Grid2D grid;
  std::vector<std::array<double, 2>> theta;  // one per episode
  std::vector<StepRecord> steps;             // episode-major, t = 1..t_max

  const StepRecord& step(int episode, int t) const {
    return steps[static_cast<std::size_t>(episode) * t_max + (t - 1)];
  }
  bool operator==(const TrajectoryDataset&) const;
};

struct ForwardOptions {
  int episodes = 1000;
  std::uint64_t master_seed = 1;
  unsigned workers = 1;
  int p_bins = 100;         // example 1
  int summary_bins = 50;    // example 2, per axis
  double lower_pct = 0.01;  // example 2 grid range percentiles
  double upper_pct = 0.99;
};

TrajectoryDataset run_forward(const ex1::Config& config, const ForwardOptions& options);
TrajectoryDataset run_forward(const ex2::Config& config, const ForwardOptions& options);

// Writes `path` (CSV) and `path` + ".meta.json".
void save_dataset(const TrajectoryDataset& data, const std::filesystem::path& path);
TrajectoryDataset load_dataset(const std::filesystem::path& path);
std::filesystem::path metadata_path(const std::filesystem::path& csv_path);

// Throws DataError unless the dataset was generated by `env_id` with a
// configuration hashing to `expected_hash`.
void require_compatible(const TrajectoryDataset& data, std::string_view env_id,
                        std::uint64_t expected_hash);

std::uint64_t dataset_hash(const ex1::Config& c);
std::uint64_t dataset_hash(const ex2::Config& c);

}  // namespace seqdesign
