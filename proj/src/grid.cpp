#include "seqdesign/grid.hpp"

#include <algorithm>
#include <cmath>

namespace seqdesign {

int Axis::bin(double v) const {
  // The 1e-9 slack keeps values that sit on a bin edge (e.g. p = 29/100)
  // in the bin they open despite floating-point round-off.
  const double x = (v - lo) / (hi - lo) * bins;
  if (!(x > 0.0)) return 0;  // also catches NaN
  const auto i = static_cast<long long>(std::floor(x + 1e-9));
  return static_cast<int>(std::clamp<long long>(i, 0, bins - 1));
}

double Axis::center(int i) const { return lo + (i + 0.5) * width(); }

std::size_t Grid2D::cell(const State& s) const {
  return cell(axes[0].bin(s[axes[0].component]), axes[1].bin(s[axes[1].component]));
}

State Grid2D::center(std::size_t c) const {
  const auto [i0, i1] = coords(c);
  State s{};
  s[axes[0].component] = axes[0].center(i0);
  s[axes[1].component] = axes[1].center(i1);
  return s;
}

Grid2D example1_grid(int t_max, int p_bins) {
  return Grid2D{{Axis{0, 0.5, t_max + 0.5, t_max}, Axis{1, 0.0, 1.0, p_bins}}};
}

Grid2D example1_grid_with_origin(int t_max, int p_bins) {
  return Grid2D{{Axis{0, -0.5, t_max + 0.5, t_max + 1}, Axis{1, 0.0, 1.0, p_bins}}};
}

std::size_t bin_summary(const State& s, const Grid2D& grid) { return grid.cell(s); }

}  // namespace seqdesign
