#include "seqdesign/config_io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <variant>
#include <vector>

#include "seqdesign/errors.hpp"

namespace seqdesign {

namespace {

// Field table shared by the reader and writer of one config struct.
template <class C>
using FieldMap = std::vector<std::pair<std::string, std::variant<double C::*, int C::*>>>;

template <class C>
void read_fields(const Json& j, C& c, const FieldMap<C>& fields, const char* what,
                 const std::function<bool(const std::string&, const Json&, C&)>& extra = {}) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": configuration must be an object");
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    for (const auto& [name, member] : fields) {
      if (name != key) continue;
      found = true;
      if (!value.is_number()) throw ConfigError(std::string(what) + "." + key + ": expected a number");
      if (std::holds_alternative<double C::*>(member)) {
        c.*std::get<double C::*>(member) = value.template get<double>();
      } else {
        if (!value.is_number_integer()) {
          throw ConfigError(std::string(what) + "." + key + ": expected an integer");
        }
        c.*std::get<int C::*>(member) = value.template get<int>();
      }
    }
    if (!found && extra && extra(key, value, c)) found = true;
    if (!found) throw ConfigError(std::string(what) + ": unknown key '" + key + "'");
  }
}

template <class C>
Json write_fields(const C& c, const FieldMap<C>& fields) {
  Json j = Json::object();
  for (const auto& [name, member] : fields) {
    if (std::holds_alternative<double C::*>(member)) {
      j[name] = c.*std::get<double C::*>(member);
    } else {
      j[name] = c.*std::get<int C::*>(member);
    }
  }
  return j;
}

const FieldMap<ex1::Config>& ex1_fields() {
  static const FieldMap<ex1::Config> f = {
      {"theta1", &ex1::Config::theta1},       {"theta2", &ex1::Config::theta2},
      {"cost_c", &ex1::Config::cost_c},       {"penalty_K", &ex1::Config::penalty_K},
      {"t_max", &ex1::Config::t_max}};
  return f;
}

const FieldMap<ex2::Config>& ex2_fields() {
  using C = ex2::Config;
  static const FieldMap<C> f = {
      {"a", &C::a},
      {"r", &C::r},
      {"sigma", &C::sigma},
      {"b0", &C::b0},
      {"q0", &C::q0},
      {"lambda_b", &C::lambda_b},
      {"lambda_q", &C::lambda_q},
      {"q_min", &C::q_min},
      {"q_hi", &C::q_hi},
      {"q_nodes", &C::q_nodes},
      {"dose_step", &C::dose_step},
      {"dose_max", &C::dose_max},
      {"initial_dose", &C::initial_dose},
      {"cost_c1", &C::cost_c1},
      {"cost_c2", &C::cost_c2},
      {"prize_K", &C::prize_K},
      {"alpha", &C::alpha},
      {"beta", &C::beta},
      {"t_max", &C::t_max}};
  return f;
}

}  // namespace

Json to_json(const ex1::Config& c) { return write_fields(c, ex1_fields()); }

Json to_json(const ex2::Config& c) {
  Json j = write_fields(c, ex2_fields());
  j["delta_floor"] = c.pivotal.delta_floor;
  j["n_max"] = c.pivotal.n_max;
  return j;
}

ex1::Config ex1_config_from_json(const Json& j) {
  ex1::Config c;
  read_fields(j, c, ex1_fields(), "example1");
  return c;
}

ex2::Config ex2_config_from_json(const Json& j) {
  ex2::Config c;
  read_fields<ex2::Config>(j, c, ex2_fields(), "example2",
                           [](const std::string& key, const Json& v, ex2::Config& cfg) {
                             if (key == "delta_floor" && v.is_number()) {
                               cfg.pivotal.delta_floor = v.get<double>();
                               return true;
                             }
                             if (key == "n_max" && v.is_number_integer()) {
                               cfg.pivotal.n_max = v.get<int>();
                               return true;
                             }
                             return false;
                           });
  return c;
}

Json to_json(const Grid2D& g) {
  Json axes = Json::array();
  for (const auto& a : g.axes) {
    axes.push_back({{"component", a.component}, {"lo", a.lo}, {"hi", a.hi}, {"bins", a.bins}});
  }
  return Json{{"axes", axes}};
}

Grid2D grid_from_json(const Json& j) {
  try {
    Grid2D g;
    const auto& axes = j.at("axes");
    if (axes.size() != 2) throw DataError("grid: expected two axes");
    for (std::size_t i = 0; i < 2; ++i) {
      g.axes[i].component = axes[i].at("component").get<int>();
      g.axes[i].lo = axes[i].at("lo").get<double>();
      g.axes[i].hi = axes[i].at("hi").get<double>();
      g.axes[i].bins = axes[i].at("bins").get<int>();
      if (g.axes[i].bins < 1 || !(g.axes[i].hi > g.axes[i].lo) || g.axes[i].component < 0 ||
          g.axes[i].component > 1) {
        throw DataError("grid: invalid axis " + std::to_string(i));
      }
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("grid: ") + e.what());
  }
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(std::string_view env_id, const Json& config) {
  std::string canonical(env_id);
  canonical += '|';
  canonical += config.dump();
  return fnv1a64(canonical);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos, 16);
  if (pos != s.size()) throw DataError("invalid hex value: " + s);
  return v;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace seqdesign
