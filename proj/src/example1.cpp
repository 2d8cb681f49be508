#include "seqdesign/example1.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "seqdesign/errors.hpp"

namespace seqdesign::ex1 {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kMaxExactCells = std::size_t{1} << 22;

Action best_terminal(double u1, double u2) { return u2 > u1 ? Action::Stop2 : Action::Stop1; }

class Ex1Episode final : public Episode {
 public:
  Ex1Episode(const Config& config, SeedSpec seed) : config_(config), rng_(seed) {
    hypothesis_ = rng_.bernoulli(0.5) ? 1 : 2;
    theta_ = hypothesis_ == 1 ? config_.theta1 : config_.theta2;
  }

  State state() const override { return {static_cast<double>(summary_.t), summary_.p()}; }
  std::array<double, 2> features() const override {
    return {static_cast<double>(summary_.t) / config_.t_max, summary_.p()};
  }
  int t() const override { return summary_.t; }
  int t_max() const override { return config_.t_max; }
  bool terminal() const override { return terminal_; }
  std::array<double, 2> theta() const override {
    return {theta_, static_cast<double>(hypothesis_)};
  }
  double return_so_far() const override { return return_; }
  double last_outcome() const override { return last_y_; }

  Transition step(Action a) override {
    if (terminal_) throw UsageError("example1: step after terminal");
    if (!mask()[a]) {
      throw UsageError("example1: action " + std::string(action_name(a)) +
                       " not allowed at t=" + std::to_string(summary_.t));
    }
    Transition tr;
    tr.state = state();
    tr.action = a;
    tr.t = summary_.t;
    tr.reward = reward(a, theta_, config_);
    if (a == Action::Continue) {
      const int y = rng_.bernoulli(theta_) ? 1 : 0;
      last_y_ = y;
      summary_.successes += y;
      summary_.t += 1;
    } else {
      terminal_ = true;
    }
    tr.next_state = state();
    tr.next_t = summary_.t;
    tr.terminal = terminal_;
    return_ += tr.reward;
    return tr;
  }

 private:
  Config config_;
  RandomStream rng_;
  int hypothesis_ = 1;
  double theta_ = 0.0;
  Summary summary_;
  bool terminal_ = false;
  double return_ = 0.0;
  double last_y_ = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace

void Config::validate() const {
  if (!(theta1 > 0.0 && theta1 < theta2 && theta2 < 1.0)) {
    throw ConfigError("example1: require 0 < theta1 < theta2 < 1");
  }
  if (!(cost_c > 0.0)) throw ConfigError("example1: cost_c must be positive");
  if (!(penalty_K > 0.0)) throw ConfigError("example1: penalty_K must be positive");
  if (t_max < 1) throw ConfigError("example1: t_max must be >= 1");
}

double posterior_prob_theta1(const Summary& s, const Config& config) {
  const int failures = s.t - s.successes;
  const double log1 = s.successes * std::log(config.theta1) + failures * std::log1p(-config.theta1);
  const double log2 = s.successes * std::log(config.theta2) + failures * std::log1p(-config.theta2);
  // 1 / (1 + exp(log2 - log1)), stable for either sign.
  const double d = log2 - log1;
  if (d > 0) {
    const double e = std::exp(-d);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(d));
}

double expected_terminal_utility(const Summary& s, Action a, const Config& config) {
  if (a == Action::Continue) throw UsageError("expected_terminal_utility: Continue is not terminal");
  const double p1 = posterior_prob_theta1(s, config);
  const double wrong = a == Action::Stop1 ? 1.0 - p1 : p1;
  return -config.cost_c * s.t - config.penalty_K * wrong;
}

double reward(Action a, double theta, const Config& config) {
  switch (a) {
    case Action::Continue:
      return -config.cost_c;
    case Action::Stop1:
      return theta == config.theta1 ? 0.0 : -config.penalty_K;
    case Action::Stop2:
      return theta == config.theta2 ? 0.0 : -config.penalty_K;
  }
  return 0.0;
}

Summary summary_from_state(const State& s) {
  const int t = static_cast<int>(std::lround(s[0]));
  const int k = t == 0 ? 0 : static_cast<int>(std::lround(s[1] * t));
  return {t, k};
}

ExactSolution::ExactSolution(Config config, std::vector<std::array<double, 3>> utility,
                             std::vector<Action> policy)
    : config_(config), utility_(std::move(utility)), policy_(std::move(policy)) {}

double ExactSolution::utility(int t, int k, Action a) const {
  return utility_.at(cell_index(t, k))[index_of(a)];
}

double ExactSolution::action_value(int t, int k, Action a) const {
  return utility(t, k, a) + config_.cost_c * t;
}

double ExactSolution::value(int t, int k) const {
  return utility(t, k, policy(t, k));
}

Action ExactSolution::policy(int t, int k) const { return policy_.at(cell_index(t, k)); }

ExactSolution exact_dp(const Config& config) {
  config.validate();
  const auto n = static_cast<std::size_t>(config.t_max + 1);
  const std::size_t cells = n * (n + 1) / 2;
  if (cells > kMaxExactCells) {
    throw ResourceError("exact_dp: t_max=" + std::to_string(config.t_max) +
                        " gives too many lattice cells");
  }
  std::vector<std::array<double, 3>> utility(cells);
  std::vector<Action> policy(cells, Action::Continue);

  for (int t = config.t_max; t >= 0; --t) {
    for (int k = 0; k <= t; ++k) {
      const Summary s{t, k};
      auto& u = utility[ExactSolution::cell_index(t, k)];
      u[1] = expected_terminal_utility(s, Action::Stop1, config);
      u[2] = expected_terminal_utility(s, Action::Stop2, config);
      if (t == config.t_max) {
        u[0] = kNegInf;
      } else {
        const double p1 = posterior_prob_theta1(s, config);
        const double p_success = p1 * config.theta1 + (1.0 - p1) * config.theta2;
        const auto next_best = [&](int kk) {
          const auto& nu = utility[ExactSolution::cell_index(t + 1, kk)];
          return nu[index_of(policy[ExactSolution::cell_index(t + 1, kk)])];
        };
        u[0] = p_success * next_best(k + 1) + (1.0 - p_success) * next_best(k);
      }
      Action best;
      if (t == 0) {
        best = Action::Continue;
      } else {
        best = best_terminal(u[1], u[2]);
        if (t < config.t_max && u[0] >= u[index_of(best)]) best = Action::Continue;
      }
      policy[ExactSolution::cell_index(t, k)] = best;
    }
  }
  return ExactSolution(config, std::move(utility), std::move(policy));
}

double exact_policy_value(const Config& config, const LatticeRule& rule) {
  config.validate();
  // Forward propagation of the joint probability of (theta, t, k) over
  // still-running paths; accumulate utility at stopping cells.
  const int T = config.t_max;
  std::vector<double> mass1(1, 0.5), mass2(1, 0.5);
  double total = 0.0;
  for (int t = 0; t <= T; ++t) {
    std::vector<double> next1(t + 2, 0.0), next2(t + 2, 0.0);
    for (int k = 0; k <= t; ++k) {
      const double m1 = mass1[k], m2 = mass2[k];
      if (m1 == 0.0 && m2 == 0.0) continue;
      Action a = Action::Continue;
      if (t > 0) {
        a = rule(t, k);
        if (t == T && a == Action::Continue) {
          const Summary s{t, k};
          a = best_terminal(expected_terminal_utility(s, Action::Stop1, config),
                            expected_terminal_utility(s, Action::Stop2, config));
        }
      }
      if (a == Action::Continue) {
        next1[k + 1] += m1 * config.theta1;
        next1[k] += m1 * (1.0 - config.theta1);
        next2[k + 1] += m2 * config.theta2;
        next2[k] += m2 * (1.0 - config.theta2);
      } else {
        const double wrong = a == Action::Stop1 ? m2 : m1;
        total += -config.cost_c * t * (m1 + m2) - config.penalty_K * wrong;
      }
    }
    mass1 = std::move(next1);
    mass2 = std::move(next2);
  }
  return total;
}

Environment::Environment(Config config) : config_(config) { config_.validate(); }

std::unique_ptr<Episode> Environment::reset(SeedSpec seed) const {
  return std::make_unique<Ex1Episode>(config_, seed);
}

Action Environment::terminal_argmax(const State& s, int /*t*/) const {
  const Summary summary = summary_from_state(s);
  return best_terminal(expected_terminal_utility(summary, Action::Stop1, config_),
                       expected_terminal_utility(summary, Action::Stop2, config_));
}

}  // namespace seqdesign::ex1
