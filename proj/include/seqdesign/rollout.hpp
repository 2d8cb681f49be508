#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "seqdesign/env_core.hpp"

namespace seqdesign {

// Maps the current episode state to an action. Must respect the episode's
// action mask.
using DecisionRule = std::function<Action(const Episode&)>;

struct RolloutSummary {
  double mean = 0.0;
  double se = 0.0;
  std::vector<double> returns;  // per episode, in stream order
};

// Runs `episodes` fresh episodes with streams (master_seed, 0..episodes-1).
// Per-episode results are independent of the worker count.
RolloutSummary evaluate_rollouts(const Environment& env, const DecisionRule& rule, int episodes,
                                 std::uint64_t master_seed, unsigned workers = 1);

// Mean and standard error of a sample.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};
MeanSe mean_se(const std::vector<double>& xs);

// Mean and standard error of the paired differences a[i] - b[i].
MeanSe paired_difference(const std::vector<double>& a, const std::vector<double>& b);

// Wraps a rule so that t = 0 always continues and a Continue at the horizon
// is replaced by the environment's terminal argmax.
DecisionRule with_forced_steps(const Environment& env, DecisionRule rule);

}  // namespace seqdesign
