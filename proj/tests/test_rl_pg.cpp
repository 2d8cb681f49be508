#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "seqdesign/example1.hpp"
#include "seqdesign/example2.hpp"
#include "seqdesign/rl_pg.hpp"

using namespace seqdesign;
using namespace seqdesign::pg;

namespace {

// 2 -> 3 network whose logits ignore the input.
Policy constant_policy(const std::array<double, 3>& logits) {
  nn::Layer layer;
  layer.weight = Eigen::MatrixXd::Zero(3, 2);
  layer.bias = Eigen::Vector3d(logits[0], logits[1], logits[2]);
  layer.activation = nn::Activation::Linear;
  return Policy(nn::Mlp({layer}), Standardizer{});
}

ex2::Config short_ex2(int t_max) {
  ex2::Config c;
  c.t_max = t_max;
  return c;
}

// Two-action bandit: one decision with Continue masked, fixed input x.
struct Bandit {
  Policy policy{nn::Mlp({2, 4, 3}, nn::Activation::Linear, 11), Standardizer{}};
  std::array<double, 2> x{0.3, -0.7};
  ActionMask mask = ActionMask::at_step(5, 5);
  double r1 = 1.0;
  double r2 = 3.0;

  RolloutBatch sample(int n, std::uint64_t seed, bool unit_return) const {
    const auto p = masked_softmax(policy.logits_standardized(x), mask);
    RolloutBatch batch;
    RandomStream rng({seed, 0});
    for (int i = 0; i < n; ++i) {
      PolicyStep s;
      s.input = x;
      s.mask = mask;
      s.action = sample_action(p, rng);
      s.log_prob = std::log(p[index_of(s.action)]);
      s.reward = unit_return ? 1.0 : (s.action == Action::Stop1 ? r1 : r2);
      EpisodeRecord ep;
      ep.steps.push_back(s);
      ep.ret = s.reward;
      batch.episodes.push_back(ep);
    }
    return batch;
  }

  // dJ/dz1 = p1 p2 (r1 - r2), dJ/dz2 = -dJ/dz1, pushed back through the net.
  Eigen::VectorXd exact_gradient() const {
    Eigen::MatrixXd in(2, 1);
    in << x[0], x[1];
    nn::Cache cache;
    const Eigen::MatrixXd z = policy.net().forward(in, cache);
    const auto p = masked_softmax({z(0, 0), z(1, 0), z(2, 0)}, mask);
    const double d = p[1] * p[2] * (r1 - r2);
    Eigen::MatrixXd g(3, 1);
    g << 0.0, d, -d;
    return nn::flatten(policy.net().backward(cache, g));
  }
};

// Mean and per-coordinate SE of flattened gradients over independent sub-batches.
struct VectorEstimate {
  Eigen::VectorXd mean;
  Eigen::VectorXd se;
};

VectorEstimate summarize(const std::vector<Eigen::VectorXd>& parts) {
  const double k = static_cast<double>(parts.size());
  VectorEstimate e;
  e.mean = Eigen::VectorXd::Zero(parts[0].size());
  for (const auto& v : parts) e.mean += v;
  e.mean /= k;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(e.mean.size());
  for (const auto& v : parts) var += (v - e.mean).cwiseAbs2();
  e.se = (var / (k - 1) / k).cwiseSqrt();
  return e;
}

constexpr int kSubBatches = 20;
constexpr int kPerSubBatch = 5000;  // 1e5 episodes in total

}  // namespace

TEST(MaskedSoftmax, ZeroesMaskedActions) {
  const auto p = masked_softmax({5.0, 1.0, 1.0}, ActionMask::at_step(4, 4));
  EXPECT_EQ(p[0], 0.0);
  EXPECT_NEAR(p[1], 0.5, 1e-15);
  EXPECT_NEAR(p[2], 0.5, 1e-15);
  EXPECT_EQ(mode_action({5.0, 1.0, 1.0}, ActionMask::at_step(4, 4)), Action::Stop1);
  EXPECT_EQ(mode_action({1.0, 1.0, 0.0}, ActionMask::at_step(2, 4)), Action::Continue);
}

TEST(Rollout, HugeLogitFollowsTheMatchingRule) {
  const ex2::Environment env(short_ex2(8));
  // Continue everywhere it is allowed, Stop1 at the horizon.
  const auto policy = constant_policy({1e9, 1e8, 0.0});
  const auto batch = rollout(env, policy, 200, 5);
  const DecisionRule rule = [](const Episode& ep) {
    return ep.mask().allowed[0] ? Action::Continue : Action::Stop1;
  };
  const auto replay = evaluate_rollouts(env, rule, 200, 5);
  for (std::size_t i = 0; i < batch.episodes.size(); ++i) {
    const auto& ep = batch.episodes[i];
    ASSERT_EQ(ep.steps.size(), 9u);
    EXPECT_EQ(ep.steps.back().action, Action::Stop1);
    EXPECT_DOUBLE_EQ(ep.ret, replay.returns[i]);
  }

  const auto stop_now = rollout(env, constant_policy({0.0, 1e9, 0.0}), 50, 5);
  for (const auto& ep : stop_now.episodes) {
    ASSERT_EQ(ep.steps.size(), 2u);  // forced Continue at t = 0, then Stop1
    EXPECT_EQ(ep.steps[1].action, Action::Stop1);
    EXPECT_DOUBLE_EQ(ep.ret, -env.config().cost_c1);
  }
}

TEST(Rollout, UniformPolicyFrequenciesAtFirstDecision) {
  const ex2::Environment env(short_ex2(3));
  const int n = 10000;
  const auto batch = rollout(env, constant_policy({0.0, 0.0, 0.0}), n, 17);
  std::array<double, 3> counts{};
  for (const auto& ep : batch.episodes) {
    ASSERT_GE(ep.steps.size(), 2u);
    EXPECT_EQ(ep.steps[0].action, Action::Continue);
    counts[index_of(ep.steps[1].action)] += 1;
  }
  const double se = std::sqrt((1.0 / 3) * (2.0 / 3) / n);
  for (double c : counts) EXPECT_LT(std::abs(c / n - 1.0 / 3), 3 * se);
}

TEST(Rollout, ReturnsMatchRewardsAndReplay) {
  const ex2::Environment env(short_ex2(6));
  const auto batch = rollout(env, constant_policy({0.5, -0.5, -1.0}), 300, 23);
  for (std::size_t i = 0; i < batch.episodes.size(); ++i) {
    const auto& rec = batch.episodes[i];
    double sum = 0.0;
    for (const auto& s : rec.steps) {
      EXPECT_TRUE(std::isfinite(s.log_prob));
      sum += s.reward;
    }
    EXPECT_NEAR(rec.ret, sum, 1e-9 * (1 + std::abs(sum)));
    auto ep = env.reset({23, i});
    for (const auto& s : rec.steps) ep->step(s.action);
    EXPECT_TRUE(ep->terminal());
    EXPECT_DOUBLE_EQ(ep->return_so_far(), rec.ret);
  }
}

TEST(Rollout, NeverSamplesContinueAtHorizon) {
  const ex2::Environment env(short_ex2(5));
  const auto batch = rollout(env, constant_policy({4.0, 0.0, 0.0}), 500, 3);
  int reached_horizon = 0;
  for (const auto& ep : batch.episodes) {
    for (const auto& s : ep.steps) EXPECT_TRUE(s.mask.allowed[index_of(s.action)]);
    if (ep.steps.size() == 6u) {
      ++reached_horizon;
      EXPECT_NE(ep.steps.back().action, Action::Continue);
    }
  }
  EXPECT_GT(reached_horizon, 100);
}

TEST(Rollout, IndependentOfWorkerCount) {
  const ex1::Environment env(ex1::Config{});
  const Policy policy(nn::Mlp({2, 8, 3}, nn::Activation::Linear, 4), Standardizer{});
  const auto a = rollout(env, policy, 64, 9, 0, 1);
  const auto b = rollout(env, policy, 64, 9, 0, 3);
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    EXPECT_EQ(a.episodes[i].ret, b.episodes[i].ret);
    EXPECT_EQ(a.episodes[i].steps.size(), b.episodes[i].steps.size());
  }
}

TEST(PgGradient, CenteredReturnsGiveZero) {
  Bandit bandit;
  auto batch = bandit.sample(100, 1, false);
  for (auto& ep : batch.episodes) ep.ret = 2.5;
  const auto g = nn::flatten(pg_gradient(batch, bandit.policy, Baseline::BatchMean));
  EXPECT_EQ(g.norm(), 0.0);
}

TEST(PgGradient, RejectsBadBatches) {
  Bandit bandit;
  EXPECT_THROW(pg_gradient(RolloutBatch{}, bandit.policy, Baseline::None), UsageError);
  auto batch = bandit.sample(4, 1, false);
  batch.episodes[2].steps[0].log_prob = -std::numeric_limits<double>::infinity();
  EXPECT_THROW(pg_gradient(batch, bandit.policy, Baseline::None), NumericalError);
}

TEST(PgGradient, MatchesClosedFormBandit) {
  Bandit bandit;
  const Eigen::VectorXd exact = bandit.exact_gradient();
  ASSERT_GT(exact.norm(), 1e-3);
  std::vector<Eigen::VectorXd> parts;
  for (int k = 0; k < kSubBatches; ++k) {
    const auto batch = bandit.sample(kPerSubBatch, 100 + k, false);
    parts.push_back(nn::flatten(pg_gradient(batch, bandit.policy, Baseline::None)));
  }
  const auto est = summarize(parts);
  EXPECT_LT((est.mean - exact).norm() / exact.norm(), 0.05);
}

TEST(PgGradient, BaselineLeavesExpectationUnchanged) {
  Bandit bandit;
  const Eigen::VectorXd dir = bandit.exact_gradient().normalized();
  std::vector<double> none, base, diff;
  for (int k = 0; k < kSubBatches; ++k) {
    const auto batch = bandit.sample(kPerSubBatch, 200 + k, false);
    const double a = nn::flatten(pg_gradient(batch, bandit.policy, Baseline::None)).dot(dir);
    const double b = nn::flatten(pg_gradient(batch, bandit.policy, Baseline::BatchMean)).dot(dir);
    none.push_back(a);
    base.push_back(b);
    diff.push_back(a - b);
  }
  const auto d = mean_se(diff);
  EXPECT_LT(std::abs(d.mean), 3 * d.se + 1e-12);
  // The baseline is there to cut variance.
  EXPECT_LT(mean_se(base).se, mean_se(none).se);
}

TEST(PgGradient, ScoreFunctionHasZeroMean) {
  Bandit bandit;
  std::vector<Eigen::VectorXd> parts;
  for (int k = 0; k < kSubBatches; ++k) {
    const auto batch = bandit.sample(kPerSubBatch, 300 + k, true);
    parts.push_back(nn::flatten(pg_gradient(batch, bandit.policy, Baseline::None)));
  }
  const auto est = summarize(parts);
  EXPECT_LT(est.mean.norm(), 3 * est.se.norm());
}

TEST(PgGradient, PerStepBaselineUnbiasedOnBandit) {
  // With one decision per episode the per-step baseline is the batch mean.
  Bandit bandit;
  const auto batch = bandit.sample(1000, 7, false);
  const auto a = nn::flatten(pg_gradient(batch, bandit.policy, Baseline::BatchMean));
  const auto b = nn::flatten(pg_gradient(batch, bandit.policy, Baseline::PerStep));
  EXPECT_LT((a - b).norm(), 1e-12 * (1 + a.norm()));
}

TEST(EntropyGradient, PushesTowardUniform) {
  Bandit bandit;
  bandit.policy = constant_policy({0.0, 2.0, -1.0});
  const auto batch = bandit.sample(10, 1, false);
  double h = 0.0;
  const auto g = entropy_gradient(batch, bandit.policy, &h);
  const auto p = masked_softmax({0.0, 2.0, -1.0}, bandit.mask);
  EXPECT_NEAR(h, -(p[1] * std::log(p[1]) + p[2] * std::log(p[2])), 1e-12);
  // Bias gradient lowers the favoured logit and raises the other.
  EXPECT_LT(g.bias[0](1), 0.0);
  EXPECT_GT(g.bias[0](2), 0.0);
  EXPECT_EQ(g.bias[0](0), 0.0);
}

TEST(Train, DeterministicAcrossRunsAndWorkers) {
  const ex2::Config config = short_ex2(8);
  const ex2::Environment env(config);
  const auto reference = run_forward(config, {.episodes = 40, .master_seed = 2});
  PgConfig pc;
  pc.hidden = {8};
  pc.episodes_per_batch = 16;
  pc.batches = 6;
  pc.eval_every = 2;
  pc.eval_episodes = 50;
  const auto a = train(env, reference, pc, 5, 1);
  const auto b = train(env, reference, pc, 5, 2);
  ASSERT_EQ(a.trace.size(), 3u);
  EXPECT_EQ(to_csv(a.trace), to_csv(b.trace));
  EXPECT_TRUE(a.best == b.best);
  EXPECT_EQ(a.best_batch, b.best_batch);
}

TEST(Train, RejectsInvalidConfig) {
  PgConfig pc;
  pc.entropy_coef = -0.1;
  EXPECT_THROW(pc.validate(), ConfigError);
  pc = PgConfig{};
  pc.batches = 0;
  EXPECT_THROW(pc.validate(), ConfigError);
}

TEST(Train, Example2DefaultAgainstBaselines) {
  const ex2::Config config;
  const ex2::Environment env(config);
  const auto reference = run_forward(config, {.episodes = 200, .master_seed = 1});
  const auto result = train(env, reference, PgConfig{}, 1);
  const auto fresh = evaluate_rollouts(env, mode_rule(result.best), 2000, 4242);
  const DecisionRule never = [](const Episode& ep) {
    return ep.mask().allowed[0] ? Action::Continue : Action::Stop1;
  };
  const auto never_stop = evaluate_rollouts(env, with_forced_steps(env, never), 2000, 4242);
  EXPECT_GT(fresh.mean - never_stop.mean,
            2 * std::sqrt(fresh.se * fresh.se + never_stop.se * never_stop.se));
  // REINFORCE reaches the always-Stop1 value but does not clear it: early on,
  // any continuation under an exploring policy risks a Stop2 costing thousands,
  // so stopping at the prior is the attractor. Only parity is asserted here.
  EXPECT_GE(fresh.mean, -config.cost_c1 - 1e-9);
}

TEST(Regions, ConstantPolicyAndVisitMask) {
  Grid2D grid;
  grid.axes[0] = {1, 0.0, 2.0, 4};
  grid.axes[1] = {0, -1.0, 3.0, 5};
  const std::vector<State> states{{0.1, 0.1}, {0.1, 0.2}, {2.9, 1.9}};
  const auto r = extract_regions(constant_policy({0.0, 0.0, 3.0}), grid, states, 5, 10);
  ASSERT_EQ(r.action.size(), 20u);
  for (auto a : r.action) EXPECT_EQ(a, Action::Stop2);
  std::size_t visited = 0, total = 0;
  for (auto v : r.visits) {
    visited += v > 0;
    total += v;
  }
  EXPECT_EQ(visited, 2u);
  EXPECT_EQ(total, 3u);
  EXPECT_EQ(r.visits[grid.cell(State{0.1, 0.1})], 2u);
  const auto csv = to_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 21);
  // Continue is masked at the horizon, so the mode falls to a stop.
  const auto h = extract_regions(constant_policy({9.0, 1.0, 0.0}), grid, states, 10, 10);
  for (auto a : h.action) EXPECT_EQ(a, Action::Stop1);
}

TEST(Regions, BandedRowFraction) {
  Grid2D grid;
  grid.axes[0] = {1, 0.0, 1.0, 3};
  grid.axes[1] = {0, 0.0, 1.0, 4};
  RegionTable r;
  r.grid = grid;
  r.visits.assign(12, 1);
  using A = Action;
  r.action = {A::Stop1, A::Continue, A::Continue, A::Stop2,    // banded
              A::Stop1, A::Stop2, A::Continue, A::Stop2,       // Continue after Stop2
              A::Continue, A::Stop1, A::Stop1, A::Continue};   // unordered except...
  r.visits[8] = 0;  // ...cell 8 is unvisited, leaving Stop1 Stop1 Continue
  EXPECT_NEAR(banded_row_fraction(r), 2.0 / 3, 1e-15);
  r.visits.assign(12, 0);
  EXPECT_EQ(banded_row_fraction(r), 0.0);
}
