#pragma once

#include <array>
#include <cstddef>
#include <utility>

#include "seqdesign/env_core.hpp"

namespace seqdesign {

// Uniform binning of one state component. Bins are left-closed and
// right-open except the last, which is closed; values outside [lo, hi]
// clamp to the edge bins.
struct Axis {
  int component = 0;
  double lo = 0.0;
  double hi = 1.0;
  int bins = 1;

  int bin(double v) const;
  double center(int i) const;
  double width() const { return (hi - lo) / bins; }
  bool operator==(const Axis&) const = default;
};

struct Grid2D {
  std::array<Axis, 2> axes{};

  std::size_t cells() const { return static_cast<std::size_t>(axes[0].bins) * axes[1].bins; }
  std::size_t cell(const State& s) const;
  std::size_t cell(int i0, int i1) const {
    return static_cast<std::size_t>(i0) * axes[1].bins + i1;
  }
  std::pair<int, int> coords(std::size_t cell) const {
    return {static_cast<int>(cell / axes[1].bins), static_cast<int>(cell % axes[1].bins)};
  }
  // State at the centre of a cell (components not on an axis stay 0).
  State center(std::size_t cell) const;
  bool operator==(const Grid2D&) const = default;
};

// Example 1 layout: one column per step t = 1..t_max, `p_bins` bins of p_t.
Grid2D example1_grid(int t_max, int p_bins = 100);

// Same layout extended with a t = 0 column, used by tabular learners that
// also visit the initial state.
Grid2D example1_grid_with_origin(int t_max, int p_bins = 100);

std::size_t bin_summary(const State& s, const Grid2D& grid);

}  // namespace seqdesign
