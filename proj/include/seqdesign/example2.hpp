#pragma once

#include <memory>
#include <vector>

#include "seqdesign/env_core.hpp"
#include "seqdesign/pivotal.hpp"

namespace seqdesign::ex2 {

// Emax dose-finding trial. Unknown (b, q); a, r and sigma are fixed.
struct Config {
  double a = 0.0;
  double r = 1.0;
  double sigma = 1.0;
  double b0 = 0.5;
  double q0 = 1.0;
  double lambda_b = 1.0;
  double lambda_q = 1.0;
  double q_min = 0.1;
  double q_hi = 8.0;
  int q_nodes = 200;
  double dose_step = 1.0;
  double dose_max = 10.0;
  double initial_dose = 0.0;
  double cost_c1 = 1.0;
  double cost_c2 = 1.0;
  double prize_K = 100.0;
  double alpha = 0.05;
  double beta = 0.2;
  int t_max = 50;
  pivotal::Options pivotal;

  void validate() const;  // throws ConfigError
};

struct EmaxTheta {
  double b = 0.0;
  double q = 1.0;
};

struct Observation {
  double dose = 0.0;
  double response = 0.0;
};

struct DoseHistory {
  std::vector<Observation> observations;
  double current_dose = 0.0;
};

struct Summary {
  double delta95_mean = 0.0;
  double delta95_sd = 0.0;
};

// Grid representation of p(q | H_t) with a conditional normal p(b | q, H_t)
// attached to each node.
struct PosteriorGrid {
  std::vector<double> q_nodes;
  std::vector<double> q_weights;  // normalized
  std::vector<double> b_mean;
  std::vector<double> b_var;
};

double emax_mean(double dose, const EmaxTheta& theta, const Config& config);

struct Ed95 {
  double x95 = 0.0;      // clipped to [0, dose_max]
  double delta95 = 0.0;  // 0.95 b, unclipped
};
Ed95 ed95_and_delta95(const EmaxTheta& theta, const Config& config);

// Fixed q-node layout and discretized prior shared by all episodes.
class QGrid {
 public:
  explicit QGrid(const Config& config);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<double>& nodes() const { return nodes_; }
  // log(prior density x quadrature width), normalized over the grid.
  const std::vector<double>& log_prior_mass() const { return log_prior_mass_; }

 private:
  std::vector<double> nodes_;
  std::vector<double> log_prior_mass_;
};

// Incrementally maintained posterior: per-node sufficient statistics of the
// conditional normal linear model y - a = b g_q(x) + eps.
class PosteriorAccumulator {
 public:
  PosteriorAccumulator(const Config& config, std::shared_ptr<const QGrid> grid);

  void add(double dose, double response);
  std::size_t count() const { return count_; }

  PosteriorGrid posterior() const;
  Summary summary() const;
  double mean_q() const;

 private:
  void refresh() const;

  Config config_;
  std::shared_ptr<const QGrid> grid_;
  std::vector<double> sum_gg_;
  std::vector<double> sum_gy_;
  std::size_t count_ = 0;

  mutable bool dirty_ = true;
  mutable PosteriorGrid cached_;
};

// Recomputes the posterior from scratch. Throws NumericalError if every
// node weight underflows.
PosteriorGrid posterior_update(const DoseHistory& history, const Config& config);

// Mixture-of-normals moments of 0.95 b.
Summary summarize(const PosteriorGrid& posterior);

double posterior_mean_q(const PosteriorGrid& posterior);

// min(current + step, estimated ED95), clipped to [0, dose_max].
double next_dose(double current, const PosteriorGrid& posterior, const Config& config);
double next_dose_from_mean_q(double current, double mean_q, const Config& config);

// Reward emitted by a stopping action (excludes accrued sampling costs).
double stop_reward(const Summary& s, Action a, const Config& config);

// Total utility of stopping with `a` at step t. Throws UsageError for Continue.
double terminal_utility(const Summary& s, Action a, int t, const Config& config);

class Environment final : public seqdesign::Environment {
 public:
  explicit Environment(Config config);

  std::string_view id() const override { return "example2"; }
  int t_max() const override { return config_.t_max; }
  std::unique_ptr<Episode> reset(SeedSpec seed) const override;
  Action terminal_argmax(const State& s, int t) const override;

  const Config& config() const { return config_; }
  Summary prior_summary() const;

 private:
  Config config_;
  std::shared_ptr<const QGrid> grid_;
};

}  // namespace seqdesign::ex2
