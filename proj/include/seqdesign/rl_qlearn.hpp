#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "seqdesign/errors.hpp"
#include "seqdesign/example1.hpp"
#include "seqdesign/grid.hpp"
#include "seqdesign/nn.hpp"
#include "seqdesign/rng.hpp"
#include "seqdesign/rollout.hpp"

namespace seqdesign::rl {

// Argmax over allowed actions; ties go to the lowest action index.
Action greedy_action(const std::array<double, 3>& q, const ActionMask& mask);

// Linear decay from `initial` to `final` over the first `decay_fraction` of
// the budget, constant afterwards.
struct EpsilonSchedule {
  double initial = 1.0;
  double final = 0.05;
  double decay_fraction = 0.2;

  double at(long step, long total) const;
  void validate() const;
};

// Q-values over the example 1 grid including the t = 0 column. Masked
// entries hold -inf.
struct QTable {
  Grid2D grid;
  int t_max = 0;
  std::vector<std::array<double, 3>> q;
  std::vector<std::array<long, 3>> visits;  // updates per (cell, action)
  std::vector<long> state_visits;

  std::size_t cell(const State& s) const { return grid.cell(s); }
  int step_of(std::size_t cell) const { return grid.coords(cell).first; }
  ActionMask mask(std::size_t cell) const { return ActionMask::at_step(step_of(cell), t_max); }
  Action greedy(const State& s) const;
};

QTable make_qtable(int t_max, int p_bins = 100);

// Q(s,a) <- (1 - alpha) Q(s,a) + alpha (r + max_a' Q(s',a')), with the
// bootstrap term dropped for terminal transitions.
void tabular_update(QTable& table, const Transition& tr, double alpha);

struct TabularOptions {
  long episodes = 200000;
  EpsilonSchedule epsilon{};
  double constant_alpha = 0.0;  // 0: per-pair (1 + visits)^-alpha_exponent
  double alpha_exponent = 1.0;
  std::uint64_t master_seed = 1;
  int p_bins = 100;
};

QTable run_tabular(const ex1::Config& config, const TabularOptions& options);

DecisionRule greedy_rule(const QTable& table);

// Same schema as the backward-induction table; SE columns are empty.
std::string to_csv(const QTable& table);

struct ReplayItem {
  std::array<double, 2> features{};
  Action action = Action::Continue;
  double reward = 0.0;
  std::array<double, 2> next_features{};
  bool terminal = false;
  bool next_continue_allowed = true;
};

// Bounded FIFO; the oldest item is overwritten once full.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const ReplayItem& item);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }
  const ReplayItem& operator[](std::size_t i) const { return items_[i]; }

  // Uniform with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, RandomStream& rng) const;
  std::vector<ReplayItem> sample(std::size_t n, RandomStream& rng) const;

 private:
  std::size_t capacity_;
  std::vector<ReplayItem> items_;
  std::uint64_t inserted_ = 0;
};

struct DqnConfig {
  std::vector<int> hidden{64, 64};
  long total_steps = 200000;
  std::size_t buffer_capacity = 50000;
  int batch_size = 64;
  double learning_rate = 5e-4;
  EpsilonSchedule epsilon{};
  long target_sync = 1000;
  long learning_starts = 1000;
  int train_every = 4;
  long eval_every = 5000;
  int eval_episodes = 2000;
  double reward_scale = 0.05;  // networks learn scaled returns

  void validate() const;
};

struct TracePoint {
  long step = 0;
  double mean = 0.0;
  double se = 0.0;
  double epsilon = 0.0;
  double loss = 0.0;  // mean training loss since the previous evaluation
};

struct DqnResult {
  nn::Mlp best;
  long best_step = 0;
  double best_mean = 0.0;
  nn::Mlp last;
  std::vector<TracePoint> trace;
};

class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, std::vector<TracePoint> trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const std::vector<TracePoint>& trace() const { return trace_; }

 private:
  std::vector<TracePoint> trace_;
};

// One gradient step on the mean of 1/2 (Q(s,a) - y)^2 with targets from the
// frozen network. Returns the loss before the step.
double dqn_step(nn::Mlp& online, const nn::Mlp& target, nn::Adam& optimizer,
                const std::vector<ReplayItem>& batch, double reward_scale);

DqnResult dqn_train(const Environment& env, const DqnConfig& config, std::uint64_t seed,
                    unsigned workers = 1);

// Masked argmax of the network on the episode's features.
DecisionRule greedy_rule(const nn::Mlp& net);
std::array<double, 3> q_values(const nn::Mlp& net, const std::array<double, 2>& features);

std::string to_csv(const std::vector<TracePoint>& trace);

}  // namespace seqdesign::rl
