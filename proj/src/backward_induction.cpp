#include "seqdesign/backward_induction.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "seqdesign/errors.hpp"
#include "seqdesign/rollout.hpp"

namespace seqdesign::bi {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Action argmax(const std::array<double, 3>& v, bool continue_allowed) {
  Action best = v[2] > v[1] ? Action::Stop2 : Action::Stop1;
  if (continue_allowed && v[0] >= v[index_of(best)]) best = Action::Continue;
  return best;
}

std::vector<std::size_t> sweep_order(const GridValuePolicy& table, SweepOrder order) {
  std::vector<std::size_t> cells;
  for (std::size_t c = 0; c < table.grid.cells(); ++c) {
    if (table.visited(c)) cells.push_back(c);
  }
  const auto& g = table.grid;
  switch (order) {
    case SweepOrder::TimeDescending:
      std::stable_sort(cells.begin(), cells.end(), [&](std::size_t a, std::size_t b) {
        return g.coords(a).first > g.coords(b).first;
      });
      break;
    case SweepOrder::SdAscending:
    case SweepOrder::CellIndex:
    case SweepOrder::Auto:
      break;  // row-major cell index is already ascending in the primary axis
  }
  return cells;
}

}  // namespace

Membership build_membership(const TrajectoryDataset& data) {
  Membership mem;
  mem.grid = data.grid;
  mem.config_hash = data.config_hash;
  const std::size_t cells = data.grid.cells();
  std::vector<std::size_t> cell_of(data.steps.size());
  std::vector<std::size_t> counts(cells, 0);
  for (std::size_t i = 0; i < data.steps.size(); ++i) {
    cell_of[i] = data.grid.cell(data.steps[i].summary);
    ++counts[cell_of[i]];
  }
  mem.offsets.assign(cells + 1, 0);
  for (std::size_t c = 0; c < cells; ++c) mem.offsets[c + 1] = mem.offsets[c] + counts[c];
  mem.members.resize(data.steps.size());
  std::vector<std::size_t> cursor(mem.offsets.begin(), mem.offsets.end() - 1);
  for (std::size_t i = 0; i < data.steps.size(); ++i) {
    const int m = static_cast<int>(i / data.t_max);
    const int t = static_cast<int>(i % data.t_max) + 1;
    mem.members[cursor[cell_of[i]]++] = {m, t};
  }
  return mem;
}

TerminalScorer make_terminal_scorer(const TrajectoryDataset& data) {
  if (data.env_id == "example1") {
    const auto c = ex1_config_from_json(data.config);
    return [c, &data](int m, int t, Action d) {
      const double theta = data.theta[m][0];
      return -c.cost_c * t + ex1::reward(d, theta, c);
    };
  }
  if (data.env_id == "example2") {
    const auto c = ex2_config_from_json(data.config);
    return [c, &data](int m, int t, Action d) {
      const auto& s = data.step(m, t).summary;
      return ex2::terminal_utility({s[0], s[1]}, d, t, c);
    };
  }
  throw ConfigError("unknown environment id '" + data.env_id + "'");
}

GridValuePolicy terminal_values(const TrajectoryDataset& data, const Membership& membership,
                                const TerminalScorer& scorer) {
  if (membership.config_hash != data.config_hash || !(membership.grid == data.grid)) {
    throw DataError("backward induction: membership was built from a different dataset");
  }
  GridValuePolicy table;
  table.grid = data.grid;
  const std::size_t cells = data.grid.cells();
  table.value.assign(cells, {kNaN, kNaN, kNaN});
  table.value_se.assign(cells, {kNaN, kNaN, kNaN});
  table.policy.assign(cells, Action::Continue);
  table.counts.assign(cells, 0);
  table.continue_allowed.assign(cells, false);
  std::vector<double> samples;
  for (std::size_t c = 0; c < cells; ++c) {
    const auto members = membership.of(c);
    table.counts[c] = members.size();
    if (members.empty()) continue;
    for (Action d : {Action::Stop1, Action::Stop2}) {
      samples.clear();
      for (const auto& [m, t] : members) samples.push_back(scorer(m, t, d));
      const auto s = mean_se(samples);
      table.value[c][index_of(d)] = s.mean;
      table.value_se[c][index_of(d)] = s.se;
    }
    table.continue_allowed[c] =
        std::any_of(members.begin(), members.end(), [&](const auto& mt) { return mt.second < data.t_max; });
    table.value[c][0] = kNegInf;
    table.policy[c] = argmax(table.value[c], false);
  }
  return table;
}

std::size_t sweep(GridValuePolicy& table, const TrajectoryDataset& data,
                  const Membership& membership, double* max_value_change) {
  if (membership.config_hash != data.config_hash) {
    throw DataError("backward induction: membership was built from a different dataset");
  }
  std::size_t changes = 0;
  double max_change = 0.0;
  std::vector<double> samples;
  for (std::size_t c : table.order) {
    if (!table.continue_allowed[c]) continue;
    samples.clear();
    for (const auto& [m, t] : membership.of(c)) {
      if (t >= data.t_max) continue;
      const std::size_t next = data.grid.cell(data.step(m, t + 1).summary);
      const auto& v = table.value[next];
      const Action next_action = (t + 1 >= data.t_max && table.policy[next] == Action::Continue)
                                     ? table.terminal_choice(next)
                                     : table.policy[next];
      samples.push_back(v[index_of(next_action)]);
    }
    const auto s = mean_se(samples);
    const double old = table.value[c][0];
    table.value[c][0] = s.mean;
    table.value_se[c][0] = s.se;
    max_change = std::max(max_change, std::isinf(old) ? std::numeric_limits<double>::infinity()
                                                      : std::abs(old - s.mean));
    const Action best = argmax(table.value[c], true);
    if (best != table.policy[c]) {
      table.policy[c] = best;
      ++changes;
    }
  }
  if (max_value_change) *max_value_change = max_change;
  return changes;
}

Action GridValuePolicy::terminal_choice(std::size_t cell) const {
  const auto& v = value[cell];
  return v[2] > v[1] ? Action::Stop2 : Action::Stop1;
}

Action GridValuePolicy::decide(const State& s) const {
  const std::size_t c = grid.cell(s);
  if (visited(c)) return policy[c];
  const auto [i0, i1] = grid.coords(c);
  // Nearest visited cell, searching the same primary-axis line first.
  for (int line_offset = 0; line_offset < grid.axes[0].bins; ++line_offset) {
    for (int sign : {1, -1}) {
      const int line = i0 + sign * line_offset;
      if (line < 0 || line >= grid.axes[0].bins) continue;
      for (int d = 0; d < grid.axes[1].bins; ++d) {
        for (int sgn : {-1, 1}) {
          const int j = i1 + sgn * d;
          if (j < 0 || j >= grid.axes[1].bins) continue;
          const std::size_t cand = grid.cell(line, j);
          if (visited(cand)) return terminal_choice(cand);
        }
      }
      if (line_offset == 0) break;
    }
  }
  throw UsageError("backward induction table has no visited cells");
}

GridValuePolicy solve(const TrajectoryDataset& data, const Options& options) {
  const auto membership = build_membership(data);
  auto table = terminal_values(data, membership, make_terminal_scorer(data));
  SweepOrder order = options.order;
  if (order == SweepOrder::Auto) {
    order = data.env_id == "example1" ? SweepOrder::TimeDescending : SweepOrder::SdAscending;
  }
  table.order = sweep_order(table, order);
  for (int it = 0; it < options.max_iterations; ++it) {
    double max_change = 0.0;
    const std::size_t changes = sweep(table, data, membership, &max_change);
    table.change_trace.push_back(changes);
    table.iterations = it + 1;
    if (changes <= options.change_threshold && max_change <= options.value_tolerance) {
      table.converged = true;
      break;
    }
  }
  if (!table.converged) {
    std::cerr << "warning: backward induction did not converge in " << options.max_iterations
              << " sweeps (last change count "
              << (table.change_trace.empty() ? 0 : table.change_trace.back()) << ")\n";
  }
  return table;
}

std::string to_csv(const GridValuePolicy& table) {
  std::string out = "i0,i1,center_0,center_1,count,u_continue,u_stop1,u_stop2,se_continue,se_stop1,se_stop2,action\n";
  for (std::size_t c = 0; c < table.grid.cells(); ++c) {
    if (!table.visited(c)) continue;
    const auto [i0, i1] = table.grid.coords(c);
    out += std::to_string(i0) + "," + std::to_string(i1) + "," +
           format_double(table.grid.axes[0].center(i0)) + "," +
           format_double(table.grid.axes[1].center(i1)) + "," + std::to_string(table.counts[c]);
    for (double v : table.value[c]) out += "," + format_double(v);
    for (double v : table.value_se[c]) out += "," + format_double(v);
    out += "," + std::to_string(index_of(table.policy[c])) + "\n";
  }
  return out;
}

}  // namespace seqdesign::bi
