#include "seqdesign/rollout.hpp"

#include <cmath>

#include "seqdesign/errors.hpp"
#include "seqdesign/parallel.hpp"

namespace seqdesign {

RolloutSummary evaluate_rollouts(const Environment& env, const DecisionRule& rule, int episodes,
                                 std::uint64_t master_seed, unsigned workers) {
  if (episodes < 1) throw ConfigError("evaluate_rollouts: episodes must be >= 1");
  RolloutSummary out;
  out.returns.assign(episodes, 0.0);
  parallel_for(static_cast<std::size_t>(episodes), workers, [&](std::size_t m) {
    auto ep = env.reset({master_seed, m});
    while (!ep->terminal()) ep->step(rule(*ep));
    out.returns[m] = ep->return_so_far();
  });
  const auto s = mean_se(out.returns);
  out.mean = s.mean;
  out.se = s.se;
  return out;
}

MeanSe mean_se(const std::vector<double>& xs) {
  if (xs.empty()) return {};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(xs.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

MeanSe paired_difference(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw UsageError("paired_difference: size mismatch");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return mean_se(d);
}

DecisionRule with_forced_steps(const Environment& env, DecisionRule rule) {
  return [&env, rule = std::move(rule)](const Episode& ep) {
    if (ep.t() == 0) return Action::Continue;
    const Action a = rule(ep);
    if (ep.t() >= ep.t_max() && a == Action::Continue) return env.terminal_argmax(ep.state(), ep.t());
    return a;
  };
}

}  // namespace seqdesign
