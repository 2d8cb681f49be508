#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "seqdesign/example1.hpp"
#include "seqdesign/example2.hpp"
#include "seqdesign/grid.hpp"

namespace seqdesign {

using Json = nlohmann::ordered_json;

Json to_json(const ex1::Config& c);
Json to_json(const ex2::Config& c);
// Strict: unknown keys and wrong types raise ConfigError naming the field.
// Missing keys keep their defaults.
ex1::Config ex1_config_from_json(const Json& j);
ex2::Config ex2_config_from_json(const Json& j);

Json to_json(const Grid2D& g);
Grid2D grid_from_json(const Json& j);

std::uint64_t fnv1a64(std::string_view bytes);
// Hash of the environment id and its canonical JSON configuration.
std::uint64_t config_hash(std::string_view env_id, const Json& config);
std::string hex64(std::uint64_t v);
std::uint64_t parse_hex64(const std::string& s);

// printf("%.17g") formatting used by every CSV writer.
std::string format_double(double v);

}  // namespace seqdesign
