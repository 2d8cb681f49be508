#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "seqdesign/errors.hpp"
#include "seqdesign/forward_sim.hpp"
#include "seqdesign/nn.hpp"
#include "seqdesign/rng.hpp"
#include "seqdesign/rollout.hpp"

namespace seqdesign::pg {

// Frozen per-component location and scale applied to episode features.
struct Standardizer {
  std::array<double, 2> location{0.0, 0.0};
  std::array<double, 2> scale{1.0, 1.0};

  std::array<double, 2> operator()(const std::array<double, 2>& x) const {
    return {(x[0] - location[0]) / scale[0], (x[1] - location[1]) / scale[1]};
  }
};

// Mean and standard deviation of the stored summaries of a forward dataset.
Standardizer fit_standardizer(const TrajectoryDataset& data);

// Softmax over the allowed actions; masked entries get probability 0.
std::array<double, 3> masked_softmax(const std::array<double, 3>& logits, const ActionMask& mask);
Action sample_action(const std::array<double, 3>& probs, RandomStream& rng);
// Most probable allowed action; ties go to the lowest index.
Action mode_action(const std::array<double, 3>& logits, const ActionMask& mask);

struct PolicyStep {
  std::array<double, 2> input{};  // standardized
  ActionMask mask;
  Action action = Action::Continue;
  double log_prob = 0.0;
  double reward = 0.0;
};

struct EpisodeRecord {
  std::vector<PolicyStep> steps;
  double ret = 0.0;  // sum of step rewards
  State final_state{};
};

struct RolloutBatch {
  std::vector<EpisodeRecord> episodes;
};

class Policy {
 public:
  Policy(nn::Mlp net, Standardizer standardizer);

  std::array<double, 3> logits(const std::array<double, 2>& features) const;
  std::array<double, 3> logits_standardized(const std::array<double, 2>& input) const;
  const nn::Mlp& net() const { return net_; }
  nn::Mlp& net() { return net_; }
  const Standardizer& standardizer() const { return standardizer_; }
  bool operator==(const Policy& o) const { return net_ == o.net_; }

 private:
  nn::Mlp net_;
  Standardizer standardizer_;
};

// Episodes first_episode .. first_episode + n - 1 with environment streams
// (master_seed, index) and separate action-sampling streams. The result does
// not depend on the worker count.
RolloutBatch rollout(const Environment& env, const Policy& policy, int n, std::uint64_t master_seed,
                     std::uint64_t first_episode = 0, unsigned workers = 1);

// PerStep subtracts the batch mean weight of episodes still running at each step.
enum class Baseline { None, BatchMean, PerStep };

// Estimate of grad J = E[(sum_t grad log pi(a_t | s_t)) (G - b)], oriented for
// ascent. With reward_to_go, each score term is weighted by the return from
// that step on instead of G. With normalize, the weights are divided by the
// batch standard deviation of the returns (a positive per-batch rescaling).
nn::Gradients pg_gradient(const RolloutBatch& batch, const Policy& policy, Baseline baseline,
                          bool reward_to_go = false, bool normalize = false);

// Gradient of the per-episode summed policy entropy, averaged over episodes.
// mean_entropy receives the per-step average.
nn::Gradients entropy_gradient(const RolloutBatch& batch, const Policy& policy,
                               double* mean_entropy = nullptr);

struct PgConfig {
  std::vector<int> hidden{64, 64};
  int episodes_per_batch = 64;
  int batches = 600;
  double learning_rate = 1e-3;
  Baseline baseline = Baseline::BatchMean;
  double entropy_coef = 0.01;
  double entropy_final = -1.0;  // < 0: constant; otherwise linear decay to this over training
  bool reward_to_go = false;
  bool normalize_returns = true;
  std::array<double, 3> initial_bias{0.0, 0.0, 0.0};  // output-layer logit offsets at start
  int eval_every = 20;  // batches
  int eval_episodes = 1000;
  int standardizer_episodes = 200;

  void validate() const;
};

struct PgTracePoint {
  int batch = 0;
  double mean = 0.0;
  double se = 0.0;
  double entropy = 0.0;
  double batch_mean = 0.0;  // mean return of the sampled training episodes since the last point
};

struct PgResult {
  Policy best;
  int best_batch = 0;
  double best_mean = 0.0;
  std::vector<PgTracePoint> trace;
};

class PgDiverged : public NumericalError {
 public:
  PgDiverged(const std::string& what, std::vector<PgTracePoint> trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const std::vector<PgTracePoint>& trace() const { return trace_; }

 private:
  std::vector<PgTracePoint> trace_;
};

// Standardizer from a forward pass of `standardizer_episodes`, then repeated
// rollout, gradient and Adam steps. Evaluation uses the mode action.
PgResult train(const Environment& env, const TrajectoryDataset& reference, const PgConfig& config,
               std::uint64_t seed, unsigned workers = 1);

DecisionRule mode_rule(const Policy& policy);

// Mode action at every grid cell centre plus the number of reference states
// falling in each cell. Cells with zero visits are low-data and not trusted.
struct RegionTable {
  Grid2D grid;
  std::vector<Action> action;
  std::vector<std::size_t> visits;
};

// `t_for_mask` selects the action mask used when taking the mode.
RegionTable extract_regions(const Policy& policy, const Grid2D& grid,
                            const std::vector<State>& reference_states, int t_for_mask, int t_max);

// Every summary visited by a forward dataset.
std::vector<State> dataset_states(const TrajectoryDataset& data);

// Fraction of rows (primary axis) with at least one visited cell whose
// visited cells, ordered along the secondary axis, read Stop1*, Continue*,
// Stop2*.
double banded_row_fraction(const RegionTable& regions);

std::string to_csv(const std::vector<PgTracePoint>& trace);
std::string to_csv(const RegionTable& regions);

}  // namespace seqdesign::pg
