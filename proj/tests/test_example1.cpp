#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "seqdesign/errors.hpp"
#include "seqdesign/example1.hpp"

using namespace seqdesign;
using ex1::Config;
using ex1::Summary;

namespace {

Config small_config(int t_max = 10) {
  Config c;
  c.t_max = t_max;
  return c;
}

// Bayes-optimal expected total utility of every action after an explicit
// outcome sequence, computed from raw likelihood products (no log space, no
// (t, k) aggregation). Visits all 2^t_max histories.
struct SequenceOracle {
  Config config;
  std::function<void(int t, int k, const std::array<double, 3>&)> visit;

  double solve(int t, int k, double like1, double like2) {
    const double p1 = like1 / (like1 + like2);
    std::array<double, 3> u{};
    u[1] = -config.cost_c * t - config.penalty_K * (1.0 - p1);
    u[2] = -config.cost_c * t - config.penalty_K * p1;
    if (t < config.t_max) {
      const double p_success = p1 * config.theta1 + (1.0 - p1) * config.theta2;
      u[0] = p_success * solve(t + 1, k + 1, like1 * config.theta1, like2 * config.theta2) +
             (1.0 - p_success) *
                 solve(t + 1, k, like1 * (1.0 - config.theta1), like2 * (1.0 - config.theta2));
    } else {
      u[0] = -std::numeric_limits<double>::infinity();
    }
    visit(t, k, u);
    if (t == 0) return u[0];
    return std::max({u[0], u[1], u[2]});
  }
};

}  // namespace

TEST(Example1Posterior, PriorIsHalf) {
  EXPECT_DOUBLE_EQ(ex1::posterior_prob_theta1({0, 0}, Config{}), 0.5);
}

TEST(Example1Posterior, SymmetricAtHalfSuccesses) {
  EXPECT_NEAR(ex1::posterior_prob_theta1({10, 5}, Config{}), 0.5, 1e-15);
}

TEST(Example1Posterior, SevenOfTen) {
  // (2/3)^4 / (1 + (2/3)^4) = 16/97
  EXPECT_NEAR(ex1::posterior_prob_theta1({10, 7}, Config{}), 16.0 / 97.0, 1e-14);
}

TEST(Example1Posterior, NoUnderflowAtLongHorizon) {
  Config c;
  c.theta1 = 0.1;
  c.theta2 = 0.9;
  const double p = ex1::posterior_prob_theta1({2000, 0}, c);
  EXPECT_EQ(p, 1.0);
  const double q = ex1::posterior_prob_theta1({2000, 1100}, c);
  EXPECT_GT(q, 0.0);
  EXPECT_LT(q, 1e-10);
}

TEST(Example1Posterior, StrictlyDecreasingInSuccesses) {
  const Config c;
  for (int t = 1; t <= 50; ++t) {
    for (int k = 0; k < t; ++k) {
      EXPECT_GT(ex1::posterior_prob_theta1({t, k}, c), ex1::posterior_prob_theta1({t, k + 1}, c));
    }
  }
}

TEST(Example1Utility, WorkedValues) {
  const Config c;
  EXPECT_NEAR(ex1::expected_terminal_utility({10, 7}, Action::Stop1, c), -10.0 - 100.0 * 81.0 / 97.0,
              1e-12);
  EXPECT_NEAR(ex1::expected_terminal_utility({10, 7}, Action::Stop2, c), -10.0 - 100.0 * 16.0 / 97.0,
              1e-12);
  EXPECT_DOUBLE_EQ(ex1::expected_terminal_utility({0, 0}, Action::Stop1, c), -50.0);
  EXPECT_THROW(ex1::expected_terminal_utility({3, 1}, Action::Continue, c), UsageError);
}

TEST(Example1Utility, SingleCrossingPerColumn) {
  const Config c;
  for (int t = 1; t <= 50; ++t) {
    int switches = 0;
    bool prev_prefers_stop2 = false;
    for (int k = 0; k <= t; ++k) {
      const bool stop2 = ex1::expected_terminal_utility({t, k}, Action::Stop2, c) >
                         ex1::expected_terminal_utility({t, k}, Action::Stop1, c);
      if (k > 0 && stop2 != prev_prefers_stop2) ++switches;
      prev_prefers_stop2 = stop2;
    }
    EXPECT_EQ(switches, 1) << "t=" << t;
  }
}

TEST(Example1Reward, Formula) {
  const Config c;
  EXPECT_EQ(ex1::reward(Action::Continue, c.theta1, c), -1.0);
  EXPECT_EQ(ex1::reward(Action::Stop2, c.theta2, c), 0.0);
  EXPECT_EQ(ex1::reward(Action::Stop2, c.theta1, c), -100.0);
  EXPECT_EQ(ex1::reward(Action::Stop1, c.theta1, c), 0.0);
}

TEST(Example1Config, Validation) {
  Config c;
  c.theta2 = c.theta1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = Config{};
  c.t_max = 0;
  EXPECT_THROW(ex1::Environment{c}, ConfigError);
  c = Config{};
  c.penalty_K = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Example1ExactDp, HorizonColumnIsForcedStop) {
  const auto sol = ex1::exact_dp(small_config());
  for (int k = 0; k <= 10; ++k) {
    EXPECT_TRUE(std::isinf(sol.utility(10, k, Action::Continue)));
    EXPECT_NE(sol.policy(10, k), Action::Continue);
    const double u1 = ex1::expected_terminal_utility({10, k}, Action::Stop1, sol.config());
    const double u2 = ex1::expected_terminal_utility({10, k}, Action::Stop2, sol.config());
    EXPECT_EQ(sol.policy(10, k), u2 > u1 ? Action::Stop2 : Action::Stop1);
  }
  EXPECT_EQ(sol.policy(0, 0), Action::Continue);
}

TEST(Example1ExactDp, StopValuesAreTerminalUtilities) {
  const auto sol = ex1::exact_dp(small_config());
  for (int t = 0; t <= 10; ++t) {
    for (int k = 0; k <= t; ++k) {
      for (Action a : {Action::Stop1, Action::Stop2}) {
        EXPECT_EQ(sol.utility(t, k, a), ex1::expected_terminal_utility({t, k}, a, sol.config()));
      }
    }
  }
}

TEST(Example1ExactDp, BellmanResidualInRewardToGoForm) {
  for (int t_max : {10, 50}) {
    const auto sol = ex1::exact_dp(small_config(t_max));
    const auto& c = sol.config();
    for (int t = 0; t < t_max; ++t) {
      for (int k = 0; k <= t; ++k) {
        const double p1 = ex1::posterior_prob_theta1({t, k}, c);
        const double ps = p1 * c.theta1 + (1 - p1) * c.theta2;
        auto best = [&](int kk) {
          return sol.action_value(t + 1, kk, sol.policy(t + 1, kk));
        };
        const double rhs = -c.cost_c + ps * best(k + 1) + (1 - ps) * best(k);
        EXPECT_NEAR(sol.action_value(t, k, Action::Continue), rhs, 1e-12);
      }
    }
  }
}

TEST(Example1ExactDp, MatchesFullSequenceEnumeration) {
  const auto sol = ex1::exact_dp(small_config());
  SequenceOracle oracle{small_config(), {}};
  int visited = 0;
  oracle.visit = [&](int t, int k, const std::array<double, 3>& u) {
    ++visited;
    for (int a = 0; a < 3; ++a) {
      const double expected = u[a];
      const double got = sol.utility(t, k, action_from_index(a));
      if (std::isinf(expected)) {
        EXPECT_TRUE(std::isinf(got));
      } else {
        ASSERT_NEAR(got, expected, 1e-9) << "t=" << t << " k=" << k << " a=" << a;
      }
    }
  };
  const double root = oracle.solve(0, 0, 1.0, 1.0);
  EXPECT_EQ(visited, (1 << 11) - 1);
  EXPECT_NEAR(sol.optimal_value(), root, 1e-9);
}

TEST(Example1ExactDp, PolicyValueOfOptimalRuleEqualsOptimalValue) {
  const auto sol = ex1::exact_dp(small_config(30));
  const double v = ex1::exact_policy_value(sol.config(),
                                           [&](int t, int k) { return sol.policy(t, k); });
  EXPECT_NEAR(v, sol.optimal_value(), 1e-9);
}

TEST(Example1ExactDp, DominatesFixedRules) {
  const auto sol = ex1::exact_dp(small_config(20));
  const auto& c = sol.config();
  const double stop_now = ex1::exact_policy_value(c, [&](int t, int k) {
    return ex1::expected_terminal_utility({t, k}, Action::Stop2, c) >
                   ex1::expected_terminal_utility({t, k}, Action::Stop1, c)
               ? Action::Stop2
               : Action::Stop1;
  });
  // t=1 report: -1 - 100 * 0.4
  EXPECT_NEAR(stop_now, -41.0, 1e-12);
  const double never = ex1::exact_policy_value(c, [](int, int) { return Action::Continue; });
  for (double phi = 0.05; phi < 1.0; phi += 0.05) {
    const double v = ex1::exact_policy_value(c, [&](int t, int k) {
      const double s = std::sqrt((t - 1.0) / (c.t_max - 1.0));
      const double p = static_cast<double>(k) / t;
      if (p < phi * s) return Action::Stop1;
      if (p > 1.0 - (1.0 - phi) * s) return Action::Stop2;
      return Action::Continue;
    });
    EXPECT_GE(sol.optimal_value(), v - 1e-12);
  }
  EXPECT_GE(sol.optimal_value(), stop_now);
  EXPECT_GE(sol.optimal_value(), never);
}

TEST(Example1ExactDp, RejectsHugeHorizon) {
  EXPECT_THROW(ex1::exact_dp(small_config(100000)), ResourceError);
}

TEST(Example1Env, ResetIsDeterministic) {
  const ex1::Environment env(Config{});
  for (std::uint64_t id = 0; id < 20; ++id) {
    auto a = env.reset({7, id});
    auto b = env.reset({7, id});
    EXPECT_EQ(a->theta(), b->theta());
    EXPECT_EQ(a->state(), b->state());
    EXPECT_EQ(a->state()[0], 0.0);
    EXPECT_EQ(a->state()[1], 0.5);
    while (!a->terminal()) {
      const Action act = a->t() < 15 ? Action::Continue : Action::Stop1;
      const auto ta = a->step(act);
      const auto tb = b->step(act);
      EXPECT_EQ(ta.next_state, tb.next_state);
      EXPECT_EQ(ta.reward, tb.reward);
    }
  }
}

TEST(Example1Env, StepSemantics) {
  const ex1::Environment env(Config{});
  auto ep = env.reset({1, 3});
  EXPECT_THROW(ep->step(Action::Stop1), UsageError);  // no data yet
  auto tr = ep->step(Action::Continue);
  EXPECT_EQ(tr.reward, -1.0);
  EXPECT_FALSE(tr.terminal);
  EXPECT_EQ(tr.next_t, 1);
  const bool is_theta1 = ep->theta()[1] == 1.0;
  tr = ep->step(is_theta1 ? Action::Stop1 : Action::Stop2);
  EXPECT_EQ(tr.reward, 0.0);
  EXPECT_TRUE(tr.terminal);
  EXPECT_THROW(ep->step(Action::Continue), UsageError);
}

TEST(Example1Env, ReturnsEqualUtilityAndHorizonForcesStop) {
  Config c;
  c.t_max = 12;
  const ex1::Environment env(c);
  for (std::uint64_t id = 0; id < 200; ++id) {
    auto ep = env.reset({11, id});
    const int stop_at = static_cast<int>(id % 13);
    int successes = 0;
    Action last = Action::Continue;
    while (!ep->terminal()) {
      if (ep->t() >= std::max(stop_at, 1)) {
        EXPECT_FALSE(ep->mask()[Action::Continue] && ep->t() == c.t_max);
        last = id % 2 ? Action::Stop1 : Action::Stop2;
      } else {
        last = Action::Continue;
      }
      if (ep->t() == c.t_max) EXPECT_THROW(ep->step(Action::Continue), UsageError);
      const auto tr = ep->step(last);
      if (last == Action::Continue) successes += static_cast<int>(ep->last_outcome());
    }
    EXPECT_LE(ep->t(), c.t_max);
    const double theta = ep->theta()[0];
    const double wrong = (last == Action::Stop1) != (theta == c.theta1) ? 1.0 : 0.0;
    EXPECT_DOUBLE_EQ(ep->return_so_far(), -c.cost_c * ep->t() - c.penalty_K * wrong);
    EXPECT_EQ(ep->state()[1], ep->t() ? static_cast<double>(successes) / ep->t() : 0.5);
  }
}
