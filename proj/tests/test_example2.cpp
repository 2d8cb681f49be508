#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "emax_quadrature.hpp"
#include "seqdesign/errors.hpp"
#include "seqdesign/example2.hpp"

using namespace seqdesign;
using ex2::Config;

namespace {

ex2::DoseHistory simulate_history(const ex2::Environment& env, SeedSpec seed, int steps,
                                  ex2::Summary* final_summary = nullptr) {
  auto ep = env.reset(seed);
  ex2::DoseHistory h;
  for (int i = 0; i < steps; ++i) {
    ep->step(Action::Continue);
    h.observations.push_back({*ep->last_dose(), ep->last_outcome()});
  }
  if (final_summary) *final_summary = {ep->state()[0], ep->state()[1]};
  return h;
}

}  // namespace

TEST(Emax, MeanFunction) {
  const Config c;
  EXPECT_EQ(ex2::emax_mean(0.0, {1.3, 0.7}, c), 0.0);
  EXPECT_DOUBLE_EQ(ex2::emax_mean(1.0, {1.0, 1.0}, c), 0.5);
  EXPECT_NEAR(ex2::emax_mean(9.5, {2.0, 0.5}, c), 1.9, 1e-15);
}

TEST(Emax, Ed95) {
  Config c;
  c.dose_max = 100;
  auto e = ex2::ed95_and_delta95({1.0, 1.0}, c);
  EXPECT_NEAR(e.x95, 19.0, 1e-12);
  EXPECT_NEAR(e.delta95, 0.95, 1e-15);
  // x95 solves x / (q + x) = 0.95
  EXPECT_NEAR(e.x95 / (1.0 + e.x95), 0.95, 1e-15);
  c.dose_max = 10;
  EXPECT_EQ(ex2::ed95_and_delta95({1.0, 1.0}, c).x95, 10.0);
  EXPECT_EQ(ex2::ed95_and_delta95({0.0, 2.0}, c).delta95, 0.0);
}

TEST(Emax, Ed95GeneralHillExponent) {
  Config c;
  c.r = 2.0;
  c.dose_max = 1000;
  const auto e = ex2::ed95_and_delta95({1.0, 1.5}, c);
  EXPECT_NEAR(ex2::emax_mean(e.x95, {1.0, 1.5}, c), 0.95, 1e-12);
}

TEST(Posterior, EmptyHistoryIsPrior) {
  const Config c;
  const auto post = ex2::posterior_update({}, c);
  ASSERT_EQ(post.q_nodes.size(), 200u);
  EXPECT_NEAR(std::accumulate(post.q_weights.begin(), post.q_weights.end(), 0.0), 1.0, 1e-12);
  for (std::size_t j = 0; j < post.q_nodes.size(); ++j) {
    EXPECT_DOUBLE_EQ(post.b_mean[j], 0.5);
    EXPECT_DOUBLE_EQ(post.b_var[j], 1.0);
  }
  // Node masses follow the truncated normal density times the node spacing.
  const ex2::QGrid grid(c);
  for (std::size_t j = 1; j + 1 < post.q_nodes.size(); ++j) {
    const double q = post.q_nodes[j];
    const double width = 0.5 * (post.q_nodes[j + 1] - post.q_nodes[j - 1]);
    const double expected = std::exp(-0.5 * (q - 1) * (q - 1)) * width;
    EXPECT_NEAR(post.q_weights[j] / expected, post.q_weights[1] / (std::exp(-0.5 * std::pow(post.q_nodes[1] - 1, 2)) *
                                                                   0.5 * (post.q_nodes[2] - post.q_nodes[0])),
                1e-9);
  }
  const auto s = ex2::summarize(post);
  EXPECT_NEAR(s.delta95_mean, 0.475, 1e-12);
  EXPECT_NEAR(s.delta95_sd, 0.95, 1e-12);
  // Node layout: log-spaced on [q_min, q_hi].
  EXPECT_DOUBLE_EQ(post.q_nodes.front(), 0.1);
  EXPECT_DOUBLE_EQ(post.q_nodes.back(), 8.0);
  EXPECT_NEAR(post.q_nodes[1] / post.q_nodes[0], post.q_nodes[2] / post.q_nodes[1], 1e-12);
}

TEST(Posterior, PlaceboObservationIsUninformative) {
  const Config c;
  const auto prior = ex2::posterior_update({}, c);
  ex2::DoseHistory h;
  h.observations.push_back({0.0, 3.7});
  const auto post = ex2::posterior_update(h, c);
  for (std::size_t j = 0; j < prior.q_nodes.size(); ++j) {
    EXPECT_NEAR(post.q_weights[j], prior.q_weights[j], 1e-15);
    EXPECT_EQ(post.b_mean[j], prior.b_mean[j]);
    EXPECT_EQ(post.b_var[j], prior.b_var[j]);
  }
}

TEST(Posterior, RecoversEffectFromTwentyPoints) {
  const Config c;
  RandomStream rng({2024, 0});
  ex2::DoseHistory h;
  for (int i = 0; i < 20; ++i) {
    const double x = 1.0 + (i % 10);
    h.observations.push_back({x, ex2::emax_mean(x, {1.0, 1.0}, c) + rng.normal()});
  }
  const auto post = ex2::posterior_update(h, c);
  const auto s = ex2::summarize(post);
  const double b_mean = s.delta95_mean / 0.95, b_sd = s.delta95_sd / 0.95;
  EXPECT_LT(std::abs(b_mean - 1.0), 3 * b_sd);
  const auto ref = reference::emax_posterior_quadrature(h, c);
  EXPECT_NEAR(s.delta95_mean, ref.delta95_mean, 1e-2);
  EXPECT_NEAR(s.delta95_sd, ref.delta95_sd, 1e-2);
}

TEST(Posterior, MatchesQuadratureOnRandomHistories) {
  const ex2::Environment env(Config{});
  RandomStream pick({99, 1});
  for (std::uint64_t m = 0; m < 10; ++m) {
    const int steps = 5 + static_cast<int>(pick.below(40));
    ex2::Summary from_episode;
    const auto h = simulate_history(env, {314, m}, steps, &from_episode);
    const auto s = ex2::summarize(ex2::posterior_update(h, env.config()));
    EXPECT_NEAR(from_episode.delta95_mean, s.delta95_mean, 1e-12);
    EXPECT_NEAR(from_episode.delta95_sd, s.delta95_sd, 1e-12);
    const auto ref = reference::emax_posterior_quadrature(h, env.config());
    EXPECT_NEAR(s.delta95_mean, ref.delta95_mean, 1e-2) << "history " << m;
    EXPECT_NEAR(s.delta95_sd, ref.delta95_sd, 1e-2) << "history " << m;
  }
}

TEST(Posterior, LargeHistoriesStayNormalized) {
  const Config c;
  RandomStream rng({5, 5});
  ex2::DoseHistory h;
  for (int i = 0; i < 5000; ++i) {
    const double x = 10.0 * rng.uniform();
    h.observations.push_back({x, ex2::emax_mean(x, {2.0, 0.5}, c) + 10.0 + rng.normal()});
  }
  const auto post = ex2::posterior_update(h, c);
  double sum = 0;
  for (double w : post.q_weights) {
    EXPECT_TRUE(std::isfinite(w));
    sum += w;
  }
  EXPECT_NEAR(sum, 1.0, 1e-10);
  for (double v : post.b_var) EXPECT_GT(v, 0.0);
}

TEST(Summarize, MixtureMoments) {
  ex2::PosteriorGrid one{{1.0}, {1.0}, {0.5}, {1.0}};
  auto s = ex2::summarize(one);
  EXPECT_NEAR(s.delta95_mean, 0.475, 1e-15);
  EXPECT_NEAR(s.delta95_sd, 0.95, 1e-15);
  ex2::PosteriorGrid two{{1.0, 2.0}, {0.5, 0.5}, {0.0, 1.0}, {0.0, 0.0}};
  s = ex2::summarize(two);
  EXPECT_NEAR(s.delta95_mean, 0.475, 1e-15);
  EXPECT_NEAR(s.delta95_sd, 0.475, 1e-15);
}

TEST(Summarize, PriorMatchesQuadrature) {
  const Config c;
  const auto s = ex2::summarize(ex2::posterior_update({}, c));
  const auto ref = reference::emax_posterior_quadrature({}, c, 400, 200, -7.5, 8.5);
  EXPECT_NEAR(s.delta95_mean, ref.delta95_mean, 1e-3);
  EXPECT_NEAR(s.delta95_sd, ref.delta95_sd, 1e-3);
}

TEST(NextDose, EscalationRule) {
  const Config c;
  auto post_with_mean_q = [](double q) { return ex2::PosteriorGrid{{q}, {1.0}, {0.0}, {1.0}}; };
  EXPECT_DOUBLE_EQ(ex2::next_dose(2.0, post_with_mean_q(1.0), c), 3.0);
  EXPECT_NEAR(ex2::next_dose(5.0, post_with_mean_q(0.2), c), 3.8, 1e-12);
  EXPECT_DOUBLE_EQ(ex2::next_dose(c.dose_max, post_with_mean_q(5.0), c), c.dose_max);
}

TEST(TerminalUtility, Values) {
  const Config c;
  EXPECT_EQ(ex2::terminal_utility({0.3, 0.2}, Action::Stop1, 12, c), -12.0);
  const double u = ex2::terminal_utility({0.6, 0.1}, Action::Stop2, 10, c);
  EXPECT_NEAR(u, -10.0 - 100.0 + 100.0 * pivotal::rejection_prob(0.6, 0.1, 100, 0.05), 1e-12);
  EXPECT_NEAR(u, -21.27, 0.05);
  const double weak = ex2::terminal_utility({0.2, 0.3}, Action::Stop2, 10, c);
  EXPECT_NEAR(weak, -10.0 - 2000.0 + 100.0 * pivotal::rejection_prob(0.2, 0.3, 2000, 0.05), 1e-9);
  EXPECT_THROW(ex2::terminal_utility({0.2, 0.3}, Action::Continue, 10, c), UsageError);
}

TEST(Example2Env, InitialStateIsPriorSummary) {
  const ex2::Environment env(Config{});
  const auto prior = env.prior_summary();
  const auto ref = reference::emax_posterior_quadrature({}, env.config(), 400, 200, -7.5, 8.5);
  EXPECT_NEAR(prior.delta95_mean, ref.delta95_mean, 1e-3);
  EXPECT_NEAR(prior.delta95_sd, ref.delta95_sd, 1e-3);
  for (std::uint64_t id = 0; id < 5; ++id) {
    auto a = env.reset({3, id});
    auto b = env.reset({3, id});
    EXPECT_EQ(a->state()[0], prior.delta95_mean);
    EXPECT_EQ(a->state()[1], prior.delta95_sd);
    EXPECT_EQ(a->theta(), b->theta());
    EXPECT_GE(a->theta()[1], env.config().q_min);
  }
}

TEST(Example2Env, StepRewardsAndDoses) {
  const ex2::Environment env(Config{});
  for (std::uint64_t id = 0; id < 100; ++id) {
    auto ep = env.reset({8, id});
    const int stop_at = 1 + static_cast<int>(id % 50);
    double prev_dose = 0.0;
    while (!ep->terminal()) {
      if (ep->t() < stop_at) {
        const auto tr = ep->step(Action::Continue);
        EXPECT_EQ(tr.reward, -1.0);
        const double x = *ep->last_dose();
        if (ep->t() == 1) EXPECT_EQ(x, 0.0);  // first patient on placebo
        EXPECT_LE(x, prev_dose + 1.0 + 1e-12);
        EXPECT_LE(x, 10.0);
        EXPECT_GE(x, 0.0);
        prev_dose = x;
      } else {
        const ex2::Summary s{ep->state()[0], ep->state()[1]};
        const Action a = id % 2 ? Action::Stop1 : Action::Stop2;
        const double expected = ex2::terminal_utility(s, a, ep->t(), env.config());
        ep->step(a);
        EXPECT_NEAR(ep->return_so_far(), expected, 1e-9);
      }
    }
    EXPECT_THROW(ep->step(Action::Stop1), UsageError);
  }
}

TEST(Example2Env, UncertaintyShrinksAlongTrajectories) {
  const ex2::Environment env(Config{});
  double sd5 = 0, sd30 = 0;
  const int M = 1000;
  for (int m = 0; m < M; ++m) {
    auto ep = env.reset({77, static_cast<std::uint64_t>(m)});
    while (ep->t() < 30) {
      ep->step(Action::Continue);
      if (ep->t() == 5) sd5 += ep->state()[1];
    }
    sd30 += ep->state()[1];
  }
  EXPECT_LT(sd30 / M, sd5 / M);
}

TEST(Example2Config, Validation) {
  Config c;
  c.sigma = 0;
  EXPECT_THROW(ex2::Environment{c}, ConfigError);
  c = Config{};
  c.alpha = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = Config{};
  c.q_min = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}
