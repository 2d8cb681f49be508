#include "seqdesign/boundary_opt.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "seqdesign/config_io.hpp"
#include "seqdesign/errors.hpp"
#include "seqdesign/parallel.hpp"
#include "seqdesign/rollout.hpp"

namespace seqdesign::boundary {

namespace {

double time_fraction(int t, int t_max) {
  if (t_max <= 1) return 1.0;
  return std::sqrt(static_cast<double>(t - 1)) / std::sqrt(static_cast<double>(t_max - 1));
}

}  // namespace

void Ex1Boundary::validate() const {
  if (!(phi > 0.0 && phi < 1.0)) throw ConfigError("phi must lie in (0, 1)");
}

double Ex1Boundary::lower(int t, int t_max) const { return phi * time_fraction(t, t_max); }

double Ex1Boundary::upper(int t, int t_max) const {
  return 1.0 - (1.0 - phi) * time_fraction(t, t_max);
}

void Ex2Boundary::validate() const {
  if (!(b1 >= 0.0 && b2 >= 0.0)) throw ConfigError("boundary slopes must be nonnegative");
  if (!std::isfinite(c)) throw ConfigError("boundary intercept must be finite");
}

Action decide_ex1(const ex1::Summary& s, const Ex1Boundary& b, const ex1::Config& config) {
  if (s.t < 1) throw UsageError("boundary rule needs t >= 1");
  const double p = s.p();
  if (p < b.lower(s.t, config.t_max)) return Action::Stop1;
  if (p > b.upper(s.t, config.t_max)) return Action::Stop2;
  if (s.t < config.t_max) return Action::Continue;
  const double u1 = ex1::expected_terminal_utility(s, Action::Stop1, config);
  const double u2 = ex1::expected_terminal_utility(s, Action::Stop2, config);
  return u2 > u1 ? Action::Stop2 : Action::Stop1;
}

Action decide_ex2(const ex2::Summary& s, int t, const Ex2Boundary& b, const ex2::Config& config) {
  if (s.delta95_mean < b.c - b.b1 * s.delta95_sd) return Action::Stop1;
  if (s.delta95_mean > b.c + b.b2 * s.delta95_sd) return Action::Stop2;
  if (t < config.t_max) return Action::Continue;
  return ex2::stop_reward(s, Action::Stop2, config) > ex2::stop_reward(s, Action::Stop1, config)
             ? Action::Stop2
             : Action::Stop1;
}

int parameter_count(const TrajectoryDataset& data) {
  if (data.env_id == "example1") return 1;
  if (data.env_id == "example2") return 3;
  throw DataError("unknown environment '" + data.env_id + "'");
}

std::vector<std::string> parameter_names(const TrajectoryDataset& data) {
  if (parameter_count(data) == 1) return {"phi"};
  return {"b1", "b2", "c"};
}

StateRule boundary_rule(const TrajectoryDataset& data, const std::vector<double>& params) {
  if (static_cast<int>(params.size()) != parameter_count(data)) {
    throw ConfigError("expected " + std::to_string(parameter_count(data)) +
                      " boundary parameters, got " + std::to_string(params.size()));
  }
  if (data.env_id == "example1") {
    const auto config = ex1_config_from_json(data.config);
    const Ex1Boundary b{params[0]};
    b.validate();
    return [config, b](const State& s, int /*t*/) {
      return decide_ex1(ex1::summary_from_state(s), b, config);
    };
  }
  const auto config = ex2_config_from_json(data.config);
  const Ex2Boundary b{params[0], params[1], params[2]};
  b.validate();
  return [config, b](const State& s, int t) {
    return decide_ex2(ex2::Summary{s[0], s[1]}, t, b, config);
  };
}

std::vector<double> truncated_utilities(const TrajectoryDataset& data, const StateRule& rule) {
  std::function<double(int, int, Action)> score;
  std::function<Action(const State&)> forced;
  if (data.env_id == "example1") {
    const auto c = ex1_config_from_json(data.config);
    score = [c, &data](int m, int t, Action d) {
      return -c.cost_c * t + ex1::reward(d, data.theta[m][0], c);
    };
    forced = [env = ex1::Environment(c), &data](const State& s) {
      return env.terminal_argmax(s, data.t_max);
    };
  } else if (data.env_id == "example2") {
    const auto c = ex2_config_from_json(data.config);
    score = [c, &data](int m, int t, Action d) {
      const auto& s = data.step(m, t).summary;
      return ex2::terminal_utility(ex2::Summary{s[0], s[1]}, d, t, c);
    };
    forced = [c](const State& s) {
      const ex2::Summary summary{s[0], s[1]};
      return ex2::stop_reward(summary, Action::Stop2, c) > ex2::stop_reward(summary, Action::Stop1, c)
                 ? Action::Stop2
                 : Action::Stop1;
    };
  } else {
    throw DataError("unknown environment '" + data.env_id + "'");
  }

  std::vector<double> out(static_cast<std::size_t>(data.episodes));
  for (int m = 0; m < data.episodes; ++m) {
    for (int t = 1; t <= data.t_max; ++t) {
      const auto& s = data.step(m, t).summary;
      Action d = rule(s, t);
      if (d == Action::Continue && t < data.t_max) continue;
      if (d == Action::Continue) d = forced(s);
      out[m] = score(m, t, d);
      break;
    }
  }
  return out;
}

PolicyValue evaluate_policy_value(const TrajectoryDataset& data, const StateRule& rule) {
  const auto s = mean_se(truncated_utilities(data, rule));
  return {s.mean, s.se};
}

PolicyValue evaluate_policy_value(const TrajectoryDataset& data, const std::vector<double>& params) {
  return evaluate_policy_value(data, boundary_rule(data, params));
}

std::size_t ValueTable::best() const {
  if (values.empty()) throw UsageError("empty value table");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i].mean > values[best].mean) best = i;
  }
  return best;
}

std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 1) throw ConfigError("grid axis needs at least one point");
  if (n == 1) return {lo};
  std::vector<double> xs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) xs[i] = lo + (hi - lo) * i / (n - 1);
  return xs;
}

std::vector<std::vector<double>> tensor_grid(const std::vector<std::vector<double>>& axes) {
  std::vector<std::vector<double>> out{{}};
  for (const auto& axis : axes) {
    std::vector<std::vector<double>> next;
    next.reserve(out.size() * axis.size());
    for (const auto& prefix : out) {
      for (double x : axis) {
        auto node = prefix;
        node.push_back(x);
        next.push_back(std::move(node));
      }
    }
    out = std::move(next);
  }
  return out;
}

std::vector<std::vector<double>> default_grid(const TrajectoryDataset& data) {
  if (parameter_count(data) == 1) return tensor_grid({linspace(0.02, 0.98, 33)});
  return tensor_grid({linspace(0.0, 3.0, 10), linspace(0.0, 3.0, 10), linspace(0.0, 1.0, 10)});
}

ValueTable grid_search(const TrajectoryDataset& data, const std::vector<std::vector<double>>& nodes,
                       unsigned workers) {
  if (nodes.empty()) throw ConfigError("parameter grid is empty");
  ValueTable table;
  table.names = parameter_names(data);
  table.nodes = nodes;
  std::vector<StateRule> rules;
  rules.reserve(nodes.size());
  for (const auto& node : nodes) rules.push_back(boundary_rule(data, node));
  table.values.resize(nodes.size());
  parallel_for(nodes.size(), workers, [&](std::size_t i) {
    table.values[i] = evaluate_policy_value(data, rules[i]);
  });
  return table;
}

Eigen::VectorXd ResponseSurface::scale(const std::vector<double>& params) const {
  Eigen::VectorXd z(center.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = (params[i] - center[i]) / half_width[i];
  return z;
}

std::vector<double> ResponseSurface::unscale(const Eigen::VectorXd& z) const {
  std::vector<double> out(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) out[i] = center[i] + half_width[i] * z[i];
  return out;
}

double ResponseSurface::operator()(const std::vector<double>& params) const {
  const Eigen::VectorXd z = scale(params);
  return intercept + linear.dot(z) + z.dot(quadratic * z);
}

namespace {

// Design row: 1, z_i, then z_i z_j for i <= j.
Eigen::VectorXd design_row(const Eigen::VectorXd& z) {
  const Eigen::Index p = z.size();
  Eigen::VectorXd row(1 + p + p * (p + 1) / 2);
  Eigen::Index k = 0;
  row[k++] = 1.0;
  for (Eigen::Index i = 0; i < p; ++i) row[k++] = z[i];
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i; j < p; ++j) row[k++] = z[i] * z[j];
  }
  return row;
}

}  // namespace

FitResult fit_and_maximize(const ValueTable& table) {
  if (table.nodes.empty()) throw ConfigError("value table is empty");
  const auto p = static_cast<Eigen::Index>(table.nodes.front().size());
  const Eigen::Index terms = 1 + p + p * (p + 1) / 2;
  const auto n = static_cast<Eigen::Index>(table.nodes.size());
  if (n < terms) {
    throw ConfigError("quadratic fit in " + std::to_string(p) + " parameters needs at least " +
                      std::to_string(terms) + " nodes, got " + std::to_string(n));
  }

  FitResult fit;
  auto& s = fit.surface;
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(p, INFINITY);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(p, -INFINITY);
  for (const auto& node : table.nodes) {
    for (Eigen::Index i = 0; i < p; ++i) {
      lo[i] = std::min(lo[i], node[i]);
      hi[i] = std::max(hi[i], node[i]);
    }
  }
  s.center = (lo + hi) / 2;
  s.half_width = (hi - lo) / 2;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (!(s.half_width[i] > 0)) {
      throw NumericalError("rank-deficient design: parameter " + table.names.at(i) +
                           " takes a single value");
    }
  }

  Eigen::MatrixXd x(n, terms);
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    x.row(r) = design_row(s.scale(table.nodes[r])).transpose();
    y[r] = table.values[r].mean;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < terms) {
    throw NumericalError("rank-deficient design: rank " + std::to_string(qr.rank()) + " of " +
                         std::to_string(terms) + " quadratic terms");
  }
  const Eigen::VectorXd beta = qr.solve(y);

  s.intercept = beta[0];
  s.linear = beta.segment(1, p);
  s.quadratic = Eigen::MatrixXd::Zero(p, p);
  Eigen::Index k = 1 + p;
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i; j < p; ++j) {
      if (i == j) {
        s.quadratic(i, i) = beta[k];
      } else {
        s.quadratic(i, j) = s.quadratic(j, i) = beta[k] / 2;
      }
      ++k;
    }
  }

  const auto best_node = [&] {
    fit.fallback = true;
    fit.optimum = table.nodes[table.best()];
    fit.predicted = s(fit.optimum);
  };
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s.quadratic);
  if (eig.eigenvalues().maxCoeff() >= 0) {
    fit.diagnostic = "quadratic form is not negative definite";
    best_node();
    return fit;
  }
  const Eigen::VectorXd z = -0.5 * s.quadratic.ldlt().solve(s.linear);
  if ((z.array().abs() > 1.0 + 1e-12).any()) {
    fit.diagnostic = "stationary point outside the grid";
    best_node();
    return fit;
  }
  fit.optimum = s.unscale(z);
  fit.predicted = s(fit.optimum);
  return fit;
}

Optimum optimize(const TrajectoryDataset& data, const std::vector<std::vector<double>>& nodes,
                 unsigned workers) {
  Optimum out;
  out.table = grid_search(data, nodes, workers);
  out.fit = fit_and_maximize(out.table);
  out.value = evaluate_policy_value(data, out.fit.optimum);
  const auto& best = out.table.values[out.table.best()];
  if (!out.fit.fallback && out.value.mean < best.mean - 2 * best.se) {
    out.fit.fallback = true;
    out.fit.diagnostic = "fitted optimum more than 2 SE below the best node";
    out.fit.optimum = out.table.nodes[out.table.best()];
    out.fit.predicted = out.fit.surface(out.fit.optimum);
    out.value = best;
  }
  return out;
}

std::string to_csv(const ValueTable& table) {
  std::ostringstream os;
  for (const auto& name : table.names) os << name << ',';
  os << "value,se\n";
  for (std::size_t i = 0; i < table.nodes.size(); ++i) {
    for (double x : table.nodes[i]) os << format_double(x) << ',';
    os << format_double(table.values[i].mean) << ',' << format_double(table.values[i].se) << '\n';
  }
  return os.str();
}

std::string to_csv(const FitResult& fit, const std::vector<std::string>& names) {
  const auto& s = fit.surface;
  std::ostringstream os;
  os << "term,coefficient\n";
  os << "intercept," << format_double(s.intercept) << '\n';
  for (Eigen::Index i = 0; i < s.linear.size(); ++i) {
    os << names.at(i) << ',' << format_double(s.linear[i]) << '\n';
  }
  for (Eigen::Index i = 0; i < s.quadratic.rows(); ++i) {
    for (Eigen::Index j = i; j < s.quadratic.cols(); ++j) {
      const double coef = i == j ? s.quadratic(i, i) : 2 * s.quadratic(i, j);
      os << names.at(i) << '*' << names.at(j) << ',' << format_double(coef) << '\n';
    }
  }
  for (Eigen::Index i = 0; i < s.center.size(); ++i) {
    os << "center_" << names.at(i) << ',' << format_double(s.center[i]) << '\n';
    os << "half_width_" << names.at(i) << ',' << format_double(s.half_width[i]) << '\n';
  }
  for (std::size_t i = 0; i < fit.optimum.size(); ++i) {
    os << "optimum_" << names.at(i) << ',' << format_double(fit.optimum[i]) << '\n';
  }
  os << "predicted," << format_double(fit.predicted) << '\n';
  os << "fallback," << (fit.fallback ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace seqdesign::boundary
