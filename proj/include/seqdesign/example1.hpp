#pragma once

#include <functional>
#include <vector>

#include "seqdesign/env_core.hpp"

namespace seqdesign::ex1 {

// Binary-hypothesis trial: Bernoulli outcomes with success probability either
// theta1 or theta2 (prior mass 1/2 each), sampling cost per cohort and a
// penalty for reporting the wrong hypothesis.
struct Config {
  double theta1 = 0.4;
  double theta2 = 0.6;
  double cost_c = 1.0;
  double penalty_K = 100.0;
  int t_max = 50;

  void validate() const;  // throws ConfigError
};

struct Summary {
  int t = 0;
  int successes = 0;

  double p() const { return t == 0 ? 0.5 : static_cast<double>(successes) / t; }
};

// P(theta = theta1 | k successes in t trials), evaluated in log space.
double posterior_prob_theta1(const Summary& s, const Config& config);

// -c t - K P(wrong hypothesis | data). Throws UsageError for Continue.
double expected_terminal_utility(const Summary& s, Action a, const Config& config);

// Per-step reward given the true theta: -c for Continue, -K for a wrong report.
double reward(Action a, double theta, const Config& config);

// Recovers the integer summary from a (t, p_t) state vector.
Summary summary_from_state(const State& s);

// Exact backward induction over the (t, k) lattice.
class ExactSolution {
 public:
  ExactSolution(Config config, std::vector<std::array<double, 3>> utility,
                std::vector<Action> policy);

  const Config& config() const { return config_; }
  int t_max() const { return config_.t_max; }

  // Expected total utility (sampling costs already paid included) of taking
  // `a` at (t, k) and acting optimally afterwards. -inf for masked actions.
  double utility(int t, int k, Action a) const;
  // Reward-to-go form: utility + c t. This is the quantity Q-learning estimates.
  double action_value(int t, int k, Action a) const;
  double value(int t, int k) const;  // max over allowed actions (total utility)
  Action policy(int t, int k) const;
  // Expected utility of the optimal policy from the initial state.
  double optimal_value() const { return value(0, 0); }

  static std::size_t cell_index(int t, int k) {
    return static_cast<std::size_t>(t) * (t + 1) / 2 + k;
  }

 private:
  Config config_;
  std::vector<std::array<double, 3>> utility_;
  std::vector<Action> policy_;
};

ExactSolution exact_dp(const Config& config);

// Exact expected utility of an arbitrary stationary rule on the lattice.
// The rule is consulted for 1 <= t <= t_max; t = 0 always continues and a
// Continue at t_max is replaced by the better terminal report.
using LatticeRule = std::function<Action(int t, int k)>;
double exact_policy_value(const Config& config, const LatticeRule& rule);

class Environment final : public seqdesign::Environment {
 public:
  explicit Environment(Config config);

  std::string_view id() const override { return "example1"; }
  int t_max() const override { return config_.t_max; }
  std::unique_ptr<Episode> reset(SeedSpec seed) const override;
  Action terminal_argmax(const State& s, int t) const override;

  const Config& config() const { return config_; }

 private:
  Config config_;
};

}  // namespace seqdesign::ex1
