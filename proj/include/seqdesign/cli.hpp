#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqdesign/config_io.hpp"
#include "seqdesign/csv.hpp"

namespace seqdesign::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDependency = 3;
inline constexpr int kExitNumerical = 4;

// An input produced by another subcommand is missing or stale.
class DependencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every experiment key with its default value.
Json default_config();

// Defaults, then the file (if given), then "dotted.key=value" overrides.
// Unknown keys and type mismatches raise ConfigError naming the key. A
// manifest written by any subcommand is accepted in place of a config file.
Json resolve_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);
void apply_override(Json& config, const std::string& assignment);

struct HeatmapStyle {
  std::string title;
  std::string x_column = "i0";
  std::string y_column = "i1";
  std::string value_column = "action";
  std::string x_label;
  std::string y_label;
  // Action codes 0/1/2 in a fixed palette; otherwise a two-colour ramp.
  bool categorical = true;
  // Optional: rows with 0 in this column are drawn faded (low data).
  std::string mask_column;
};

// Deterministic SVG: one rect per table row at its integer (x, y) indices.
// Throws DataError for an empty table, missing columns or bad codes.
std::string render_heatmap(const csv::Table& table, const HeatmapStyle& style);

// Runs one command line (without the program name); returns the exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace seqdesign::cli
