#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "seqdesign/example1.hpp"
#include "seqdesign/example2.hpp"
#include "seqdesign/forward_sim.hpp"

namespace seqdesign::boundary {

// Example 1: Stop1 below lower(t), Stop2 above upper(t). Both bounds start at
// (0, 1) for t = 1 and meet at phi when t = t_max.
struct Ex1Boundary {
  double phi = 0.5;

  void validate() const;  // 0 < phi < 1
  double lower(int t, int t_max) const;
  double upper(int t, int t_max) const;
};

// Example 2: Stop1 when the mean effect is below c - b1 sd, Stop2 when it is
// above c + b2 sd.
struct Ex2Boundary {
  double b1 = 1.0;
  double b2 = 1.0;
  double c = 0.5;

  void validate() const;  // b1, b2 >= 0
};

// Strict inequalities; ties continue. At t = t_max a Continue is replaced by
// the better terminal report under the posterior.
Action decide_ex1(const ex1::Summary& s, const Ex1Boundary& b, const ex1::Config& config);
Action decide_ex2(const ex2::Summary& s, int t, const Ex2Boundary& b, const ex2::Config& config);

// Decision as a function of the stored summary and step.
using StateRule = std::function<Action(const State& summary, int t)>;

// Rule for a parameter vector: (phi) for example 1, (b1, b2, c) for example 2.
StateRule boundary_rule(const TrajectoryDataset& data, const std::vector<double>& params);

// Number of boundary parameters for the dataset's environment.
int parameter_count(const TrajectoryDataset& data);

// Walks every stored trajectory to its first stop under `rule` and returns the
// realised utility per episode. A Continue at t_max becomes the terminal
// argmax.
std::vector<double> truncated_utilities(const TrajectoryDataset& data, const StateRule& rule);

struct PolicyValue {
  double mean = 0.0;
  double se = 0.0;
};

PolicyValue evaluate_policy_value(const TrajectoryDataset& data, const StateRule& rule);
PolicyValue evaluate_policy_value(const TrajectoryDataset& data, const std::vector<double>& params);

struct ValueTable {
  std::vector<std::string> names;          // parameter names
  std::vector<std::vector<double>> nodes;  // one parameter vector per row
  std::vector<PolicyValue> values;

  std::size_t best() const;  // index of the largest mean
};

// Evenly spaced points on [lo, hi] including both ends.
std::vector<double> linspace(double lo, double hi, int n);
// Cartesian product, last axis fastest.
std::vector<std::vector<double>> tensor_grid(const std::vector<std::vector<double>>& axes);

std::vector<std::string> parameter_names(const TrajectoryDataset& data);

// Default search grids: 33 points on [0.02, 0.98] for example 1,
// 10 x 10 x 10 over [0,3] x [0,3] x [0,1] for example 2.
std::vector<std::vector<double>> default_grid(const TrajectoryDataset& data);

ValueTable grid_search(const TrajectoryDataset& data, const std::vector<std::vector<double>>& nodes,
                       unsigned workers = 1);

// f(x) = intercept + linear . z + z' quadratic z with z the parameters mapped
// affinely onto [-1, 1] over the grid's bounding box.
struct ResponseSurface {
  double intercept = 0.0;
  Eigen::VectorXd linear;
  Eigen::MatrixXd quadratic;  // symmetric
  Eigen::VectorXd center;
  Eigen::VectorXd half_width;

  double operator()(const std::vector<double>& params) const;
  Eigen::VectorXd scale(const std::vector<double>& params) const;
  std::vector<double> unscale(const Eigen::VectorXd& z) const;
};

struct FitResult {
  std::vector<double> optimum;
  ResponseSurface surface;
  double predicted = 0.0;
  bool fallback = false;  // optimum is the best grid node, not the stationary point
  std::string diagnostic;
};

// Least-squares quadratic fit and its stationary point. Falls back to the best
// node when the quadratic form is not negative definite or the stationary
// point leaves the bounding box. Throws ConfigError with too few nodes and
// NumericalError for a rank-deficient design.
FitResult fit_and_maximize(const ValueTable& table);

struct Optimum {
  ValueTable table;
  FitResult fit;
  PolicyValue value;  // at fit.optimum, same dataset
};

// Grid search, fit, and re-evaluation at the fitted optimum. A fitted optimum
// whose value is more than 2 SE below the best node is replaced by that node.
Optimum optimize(const TrajectoryDataset& data, const std::vector<std::vector<double>>& nodes,
                 unsigned workers = 1);

std::string to_csv(const ValueTable& table);
std::string to_csv(const FitResult& fit, const std::vector<std::string>& names);

}  // namespace seqdesign::boundary
