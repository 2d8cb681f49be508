#include "seqdesign/example2.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <string>

#include "seqdesign/errors.hpp"

namespace seqdesign::ex2 {

namespace {

double response_fraction(double dose, double q, double r) {
  if (dose <= 0.0) return 0.0;
  if (r == 1.0) return dose / (q + dose);
  const double xr = std::pow(dose, r);
  return xr / (std::pow(q, r) + xr);
}

double ed95_multiplier(double r) { return std::pow(19.0, 1.0 / r); }

class Ex2Episode final : public Episode {
 public:
  Ex2Episode(const Config& config, std::shared_ptr<const QGrid> grid, SeedSpec seed)
      : config_(config), rng_(seed), posterior_(config, std::move(grid)) {
    theta_.b = rng_.normal(config_.b0, config_.lambda_b);
    do {
      theta_.q = rng_.normal(config_.q0, config_.lambda_q);
    } while (theta_.q < config_.q_min);
    dose_ = config_.initial_dose;
    summary_ = posterior_.summary();
  }

  State state() const override { return {summary_.delta95_mean, summary_.delta95_sd}; }
  std::array<double, 2> features() const override { return state(); }
  int t() const override { return t_; }
  int t_max() const override { return config_.t_max; }
  bool terminal() const override { return terminal_; }
  std::array<double, 2> theta() const override { return {theta_.b, theta_.q}; }
  double return_so_far() const override { return return_; }
  double last_outcome() const override { return last_y_; }
  std::optional<double> last_dose() const override { return last_x_; }

  Transition step(Action a) override {
    if (terminal_) throw UsageError("example2: step after terminal");
    if (!mask()[a]) {
      throw UsageError("example2: action " + std::string(action_name(a)) +
                       " not allowed at t=" + std::to_string(t_));
    }
    Transition tr;
    tr.state = state();
    tr.action = a;
    tr.t = t_;
    if (a == Action::Continue) {
      tr.reward = -config_.cost_c1;
      const double x = dose_;
      const double y = emax_mean(x, theta_, config_) + config_.sigma * rng_.normal();
      posterior_.add(x, y);
      last_x_ = x;
      last_y_ = y;
      ++t_;
      summary_ = posterior_.summary();
      dose_ = next_dose_from_mean_q(x, posterior_.mean_q(), config_);
    } else {
      tr.reward = stop_reward(summary_, a, config_);
      terminal_ = true;
    }
    tr.next_state = state();
    tr.next_t = t_;
    tr.terminal = terminal_;
    return_ += tr.reward;
    return tr;
  }

 private:
  Config config_;
  RandomStream rng_;
  EmaxTheta theta_;
  PosteriorAccumulator posterior_;
  Summary summary_;
  double dose_ = 0.0;
  int t_ = 0;
  bool terminal_ = false;
  double return_ = 0.0;
  double last_y_ = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> last_x_;
};

}  // namespace

void Config::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("example2: sigma must be positive");
  if (!(r > 0.0)) throw ConfigError("example2: r must be positive");
  if (!(lambda_b > 0.0) || !(lambda_q > 0.0)) throw ConfigError("example2: prior sds must be positive");
  if (!(q_min > 0.0)) throw ConfigError("example2: q_min must be positive");
  if (!(q_hi > q_min)) throw ConfigError("example2: q_hi must exceed q_min");
  if (q_nodes < 2) throw ConfigError("example2: q_nodes must be >= 2");
  if (!(dose_step > 0.0)) throw ConfigError("example2: dose_step must be positive");
  if (!(dose_max > 0.0)) throw ConfigError("example2: dose_max must be positive");
  if (!(initial_dose >= 0.0 && initial_dose <= dose_max)) {
    throw ConfigError("example2: initial_dose must lie in [0, dose_max]");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("example2: alpha must lie in (0, 1)");
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("example2: beta must lie in (0, 1)");
  if (!(cost_c1 >= 0.0) || !(cost_c2 >= 0.0) || !(prize_K >= 0.0)) {
    throw ConfigError("example2: costs and prize must be non-negative");
  }
  if (t_max < 1) throw ConfigError("example2: t_max must be >= 1");
  if (!(pivotal.delta_floor > 0.0)) throw ConfigError("example2: pivotal.delta_floor must be positive");
  if (pivotal.n_max < 2) throw ConfigError("example2: pivotal.n_max must be >= 2");
}

double emax_mean(double dose, const EmaxTheta& theta, const Config& config) {
  return config.a + theta.b * response_fraction(dose, theta.q, config.r);
}

Ed95 ed95_and_delta95(const EmaxTheta& theta, const Config& config) {
  Ed95 e;
  e.x95 = std::clamp(ed95_multiplier(config.r) * theta.q, 0.0, config.dose_max);
  e.delta95 = 0.95 * theta.b;
  return e;
}

QGrid::QGrid(const Config& config) {
  const int n = config.q_nodes;
  nodes_.resize(n);
  const double log_lo = std::log(config.q_min), log_hi = std::log(config.q_hi);
  for (int j = 0; j < n; ++j) {
    nodes_[j] = std::exp(log_lo + (log_hi - log_lo) * j / (n - 1));
  }
  nodes_.front() = config.q_min;
  nodes_.back() = config.q_hi;
  // Trapezoid widths turn the truncated-normal density into node masses.
  log_prior_mass_.resize(n);
  double max_log = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    const double left = j == 0 ? nodes_[0] : nodes_[j - 1];
    const double right = j == n - 1 ? nodes_[n - 1] : nodes_[j + 1];
    const double width = 0.5 * (right - left);
    const double z = (nodes_[j] - config.q0) / config.lambda_q;
    log_prior_mass_[j] = -0.5 * z * z + std::log(width);
    max_log = std::max(max_log, log_prior_mass_[j]);
  }
  double total = 0.0;
  for (double v : log_prior_mass_) total += std::exp(v - max_log);
  const double log_norm = max_log + std::log(total);
  for (double& v : log_prior_mass_) v -= log_norm;
}

PosteriorAccumulator::PosteriorAccumulator(const Config& config, std::shared_ptr<const QGrid> grid)
    : config_(config),
      grid_(std::move(grid)),
      sum_gg_(grid_->size(), 0.0),
      sum_gy_(grid_->size(), 0.0) {}

void PosteriorAccumulator::add(double dose, double response) {
  const auto& q = grid_->nodes();
  const double centered = response - config_.a;
  for (std::size_t j = 0; j < q.size(); ++j) {
    const double g = response_fraction(dose, q[j], config_.r);
    sum_gg_[j] += g * g;
    sum_gy_[j] += g * centered;
  }
  ++count_;
  dirty_ = true;
}

void PosteriorAccumulator::refresh() const {
  if (!dirty_) return;
  const std::size_t n = grid_->size();
  const double prior_prec = 1.0 / (config_.lambda_b * config_.lambda_b);
  const double noise_prec = 1.0 / (config_.sigma * config_.sigma);
  const double b0_term = config_.b0 * config_.b0 * prior_prec;

  cached_.q_nodes = grid_->nodes();
  cached_.q_weights.resize(n);
  cached_.b_mean.resize(n);
  cached_.b_var.resize(n);

  // log p(y | q) up to a q-independent constant:
  //   -1/2 log(lambda^2 P) + 1/2 (m^2 P - b0^2 / lambda^2)
  std::vector<double> log_w(n);
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    const double precision = prior_prec + sum_gg_[j] * noise_prec;
    const double var = 1.0 / precision;
    const double mean = var * (config_.b0 * prior_prec + sum_gy_[j] * noise_prec);
    cached_.b_mean[j] = mean;
    cached_.b_var[j] = var;
    log_w[j] = grid_->log_prior_mass()[j] - 0.5 * std::log(precision / prior_prec) +
               0.5 * (mean * mean * precision - b0_term);
    max_log = std::max(max_log, log_w[j]);
  }
  if (!std::isfinite(max_log)) throw NumericalError("posterior_update: all q weights underflow");
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    cached_.q_weights[j] = std::exp(log_w[j] - max_log);
    total += cached_.q_weights[j];
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw NumericalError("posterior_update: q weights do not normalize");
  }
  for (double& w : cached_.q_weights) w /= total;
  dirty_ = false;
}

PosteriorGrid PosteriorAccumulator::posterior() const {
  refresh();
  return cached_;
}

Summary PosteriorAccumulator::summary() const {
  refresh();
  return summarize(cached_);
}

double PosteriorAccumulator::mean_q() const {
  refresh();
  return posterior_mean_q(cached_);
}

PosteriorGrid posterior_update(const DoseHistory& history, const Config& config) {
  config.validate();
  PosteriorAccumulator acc(config, std::make_shared<const QGrid>(config));
  for (const auto& obs : history.observations) acc.add(obs.dose, obs.response);
  return acc.posterior();
}

Summary summarize(const PosteriorGrid& posterior) {
  double mean = 0.0, second = 0.0;
  for (std::size_t j = 0; j < posterior.q_weights.size(); ++j) {
    const double w = posterior.q_weights[j];
    const double m = posterior.b_mean[j];
    mean += w * m;
    second += w * (posterior.b_var[j] + m * m);
  }
  double var = second - mean * mean;
  if (var < 0.0) {
    if (var < -1e-12) {
      std::cerr << "warning: summarize clamped negative variance " << var << "\n";
    }
    var = 0.0;
  }
  return {0.95 * mean, 0.95 * std::sqrt(var)};
}

double posterior_mean_q(const PosteriorGrid& posterior) {
  double m = 0.0;
  for (std::size_t j = 0; j < posterior.q_weights.size(); ++j) {
    m += posterior.q_weights[j] * posterior.q_nodes[j];
  }
  return m;
}

double next_dose_from_mean_q(double current, double mean_q, const Config& config) {
  const double estimate = ed95_multiplier(config.r) * mean_q;
  return std::clamp(std::min(current + config.dose_step, estimate), 0.0, config.dose_max);
}

double next_dose(double current, const PosteriorGrid& posterior, const Config& config) {
  return next_dose_from_mean_q(current, posterior_mean_q(posterior), config);
}

double stop_reward(const Summary& s, Action a, const Config& config) {
  switch (a) {
    case Action::Continue:
      throw UsageError("stop_reward: Continue is not terminal");
    case Action::Stop1:
      return 0.0;
    case Action::Stop2: {
      const auto piv = pivotal::evaluate(s.delta95_mean, s.delta95_sd, config.alpha, config.beta,
                                         config.pivotal);
      return -config.cost_c2 * piv.n_total + config.prize_K * piv.rejection_prob;
    }
  }
  return 0.0;
}

double terminal_utility(const Summary& s, Action a, int t, const Config& config) {
  if (a == Action::Continue) throw UsageError("terminal_utility: Continue is not terminal");
  return -config.cost_c1 * t + stop_reward(s, a, config);
}

Environment::Environment(Config config) : config_(config) {
  config_.validate();
  grid_ = std::make_shared<const QGrid>(config_);
}

std::unique_ptr<Episode> Environment::reset(SeedSpec seed) const {
  return std::make_unique<Ex2Episode>(config_, grid_, seed);
}

Action Environment::terminal_argmax(const State& s, int /*t*/) const {
  const Summary summary{s[0], s[1]};
  return stop_reward(summary, Action::Stop2, config_) > stop_reward(summary, Action::Stop1, config_)
             ? Action::Stop2
             : Action::Stop1;
}

Summary Environment::prior_summary() const {
  return PosteriorAccumulator(config_, grid_).summary();
}

}  // namespace seqdesign::ex2
