#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "seqdesign/forward_sim.hpp"
#include "seqdesign/grid.hpp"

namespace seqdesign::bi {

// Which (episode, step) pairs of the forward sample fall in each grid cell.
struct Membership {
  Grid2D grid;
  std::uint64_t config_hash = 0;
  std::vector<std::size_t> offsets;  // cells + 1 entries into `members`
  std::vector<std::pair<int, int>> members;  // (episode, t), grouped by cell

  std::size_t count(std::size_t cell) const { return offsets[cell + 1] - offsets[cell]; }
  std::span<const std::pair<int, int>> of(std::size_t cell) const {
    return {members.data() + offsets[cell], count(cell)};
  }
};

Membership build_membership(const TrajectoryDataset& data);

// Utility of stopping episode m at step t with action d (total utility,
// sampling costs included).
using TerminalScorer = std::function<double(int episode, int t, Action d)>;

// Example 1 scores with the episode's drawn theta; Example 2 with the
// step's posterior summary.
TerminalScorer make_terminal_scorer(const TrajectoryDataset& data);

enum class SweepOrder { Auto, TimeDescending, SdAscending, CellIndex };

struct Options {
  int max_iterations = 100;
  std::size_t change_threshold = 0;
  double value_tolerance = 1e-9;
  SweepOrder order = SweepOrder::Auto;
};

struct GridValuePolicy {
  Grid2D grid;
  std::vector<std::array<double, 3>> value;     // NaN for unvisited cells
  std::vector<std::array<double, 3>> value_se;  // Monte Carlo standard errors
  std::vector<Action> policy;
  std::vector<std::size_t> counts;
  std::vector<bool> continue_allowed;
  std::vector<std::size_t> order;  // sweep order over visited cells
  std::vector<std::size_t> change_trace;  // policy changes per sweep
  int iterations = 0;
  bool converged = false;

  bool visited(std::size_t cell) const { return counts[cell] > 0; }
  // Policy lookup for an arbitrary state. Unvisited cells defer to the
  // terminal-only choice of the nearest visited cell on the same line of
  // the primary axis (t-column / sd-row).
  Action decide(const State& s) const;
  Action terminal_choice(std::size_t cell) const;
};

// Stop values for every visited cell and the terminal-argmax initial policy.
GridValuePolicy terminal_values(const TrajectoryDataset& data, const Membership& membership,
                                const TerminalScorer& scorer);

// One Gauss-Seidel pass in `table.order`. Returns the number of cells whose
// policy changed; `max_value_change` receives the largest continuation-value
// change.
std::size_t sweep(GridValuePolicy& table, const TrajectoryDataset& data,
                  const Membership& membership, double* max_value_change = nullptr);

GridValuePolicy solve(const TrajectoryDataset& data, const Options& options = {});

// CSV export: i0,i1,center_0,center_1,count,u_continue,u_stop1,u_stop2,
// se_continue,se_stop1,se_stop2,action
std::string to_csv(const GridValuePolicy& table);

}  // namespace seqdesign::bi
