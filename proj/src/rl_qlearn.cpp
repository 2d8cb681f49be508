#include "seqdesign/rl_qlearn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seqdesign/config_io.hpp"

namespace seqdesign::rl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Uniform draw among allowed actions.
Action random_action(const ActionMask& mask, RandomStream& rng) {
  std::array<Action, 3> allowed{};
  std::size_t n = 0;
  for (Action a : kAllActions) {
    if (mask[a]) allowed[n++] = a;
  }
  return allowed[rng.below(n)];
}

// Exploration streams live far from the per-episode environment streams.
constexpr std::uint64_t kExplorationStream = 0xe9100000'00000000ULL;
constexpr std::uint64_t kEvaluationSalt = 0x5eed'e7a1ULL;

}  // namespace

Action greedy_action(const std::array<double, 3>& q, const ActionMask& mask) {
  int best = -1;
  for (int a = 0; a < 3; ++a) {
    if (!mask.allowed[a]) continue;
    if (best < 0 || q[a] > q[best]) best = a;
  }
  if (best < 0) throw UsageError("no action allowed");
  return action_from_index(best);
}

double EpsilonSchedule::at(long step, long total) const {
  const double horizon = decay_fraction * static_cast<double>(total);
  if (horizon <= 0 || step >= horizon) return final;
  return initial + (final - initial) * static_cast<double>(step) / horizon;
}

void EpsilonSchedule::validate() const {
  if (!(initial >= 0 && initial <= 1 && final >= 0 && final <= 1)) {
    throw ConfigError("epsilon must lie in [0, 1]");
  }
  if (!(decay_fraction >= 0 && decay_fraction <= 1)) {
    throw ConfigError("epsilon decay fraction must lie in [0, 1]");
  }
}

Action QTable::greedy(const State& s) const {
  const auto c = cell(s);
  return greedy_action(q[c], mask(c));
}

QTable make_qtable(int t_max, int p_bins) {
  QTable table;
  table.grid = example1_grid_with_origin(t_max, p_bins);
  table.t_max = t_max;
  const std::size_t cells = table.grid.cells();
  table.q.assign(cells, {0.0, 0.0, 0.0});
  table.visits.assign(cells, {0, 0, 0});
  table.state_visits.assign(cells, 0);
  for (std::size_t c = 0; c < cells; ++c) {
    const auto mask = table.mask(c);
    for (Action a : kAllActions) {
      if (!mask[a]) table.q[c][index_of(a)] = kNegInf;
    }
  }
  return table;
}

void tabular_update(QTable& table, const Transition& tr, double alpha) {
  const auto c = table.cell(tr.state);
  const int a = index_of(tr.action);
  double target = tr.reward;
  if (!tr.terminal) {
    const auto next = table.cell(tr.next_state);
    target += table.q[next][index_of(greedy_action(table.q[next], table.mask(next)))];
  }
  double& q = table.q[c][a];
  q = (1.0 - alpha) * q + alpha * target;
  ++table.visits[c][a];
}

QTable run_tabular(const ex1::Config& config, const TabularOptions& options) {
  config.validate();
  options.epsilon.validate();
  if (options.episodes < 1) throw ConfigError("episodes must be >= 1");
  if (options.constant_alpha < 0 || options.constant_alpha > 1) {
    throw ConfigError("learning rate must lie in [0, 1]");
  }
  if (!(options.alpha_exponent > 0.5 && options.alpha_exponent <= 1.0)) {
    throw ConfigError("learning-rate exponent must lie in (0.5, 1]");
  }
  const ex1::Environment env(config);
  QTable table = make_qtable(config.t_max, options.p_bins);
  RandomStream explore({options.master_seed, kExplorationStream});
  for (long e = 0; e < options.episodes; ++e) {
    const double eps = options.epsilon.at(e, options.episodes);
    auto ep = env.reset({options.master_seed, static_cast<std::uint64_t>(e)});
    while (!ep->terminal()) {
      const auto c = table.cell(ep->state());
      ++table.state_visits[c];
      const auto mask = ep->mask();
      const Action a = explore.uniform() < eps ? random_action(mask, explore)
                                               : greedy_action(table.q[c], mask);
      const auto tr = ep->step(a);
      const double alpha = options.constant_alpha > 0
                               ? options.constant_alpha
                               : std::pow(1.0 + static_cast<double>(table.visits[c][index_of(a)]),
                                          -options.alpha_exponent);
      tabular_update(table, tr, alpha);
    }
  }
  return table;
}

DecisionRule greedy_rule(const QTable& table) {
  return [&table](const Episode& ep) {
    return greedy_action(table.q[table.cell(ep.state())], ep.mask());
  };
}

std::string to_csv(const QTable& table) {
  std::string out =
      "i0,i1,center_0,center_1,count,u_continue,u_stop1,u_stop2,se_continue,se_stop1,se_stop2,action\n";
  for (std::size_t c = 0; c < table.grid.cells(); ++c) {
    if (table.state_visits[c] == 0) continue;
    const auto [i0, i1] = table.grid.coords(c);
    out += std::to_string(i0) + "," + std::to_string(i1) + "," +
           format_double(table.grid.axes[0].center(i0)) + "," +
           format_double(table.grid.axes[1].center(i1)) + "," +
           std::to_string(table.state_visits[c]);
    for (double v : table.q[c]) out += "," + format_double(v);
    out += ",,,," + std::to_string(index_of(greedy_action(table.q[c], table.mask(c)))) + "\n";
  }
  return out;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 20));
}

void ReplayBuffer::push(const ReplayItem& item) {
  if (items_.size() < capacity_) {
    items_.push_back(item);
  } else {
    items_[inserted_ % capacity_] = item;
  }
  ++inserted_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, RandomStream& rng) const {
  if (items_.empty()) throw UsageError("sampling from an empty replay buffer");
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.below(items_.size());
  return idx;
}

std::vector<ReplayItem> ReplayBuffer::sample(std::size_t n, RandomStream& rng) const {
  std::vector<ReplayItem> out;
  out.reserve(n);
  for (std::size_t i : sample_indices(n, rng)) out.push_back(items_[i]);
  return out;
}

void DqnConfig::validate() const {
  epsilon.validate();
  if (total_steps < 1 || buffer_capacity < 1 || batch_size < 1 || target_sync < 1 ||
      train_every < 1 || eval_every < 1 || eval_episodes < 1 || learning_starts < 0) {
    throw ConfigError("DQN step counts and sizes must be positive");
  }
  if (!(learning_rate > 0) || !(reward_scale > 0)) {
    throw ConfigError("learning rate and reward scale must be positive");
  }
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden layer sizes must be positive");
  }
}

std::array<double, 3> q_values(const nn::Mlp& net, const std::array<double, 2>& features) {
  Eigen::MatrixXd x(2, 1);
  x << features[0], features[1];
  const Eigen::MatrixXd out = net.forward(x);
  return {out(0, 0), out(1, 0), out(2, 0)};
}

DecisionRule greedy_rule(const nn::Mlp& net) {
  return [net](const Episode& ep) { return greedy_action(q_values(net, ep.features()), ep.mask()); };
}

double dqn_step(nn::Mlp& online, const nn::Mlp& target, nn::Adam& optimizer,
                const std::vector<ReplayItem>& batch, double reward_scale) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd x(2, n), xn(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(0, i) = batch[i].features[0];
    x(1, i) = batch[i].features[1];
    xn(0, i) = batch[i].next_features[0];
    xn(1, i) = batch[i].next_features[1];
  }
  const Eigen::MatrixXd next_q = target.forward(xn);
  nn::Cache cache;
  const Eigen::MatrixXd q = online.forward(x, cache);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(q.rows(), n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& item = batch[i];
    double y = reward_scale * item.reward;
    if (!item.terminal) {
      double best = std::max(next_q(1, i), next_q(2, i));
      if (item.next_continue_allowed) best = std::max(best, next_q(0, i));
      y += best;
    }
    const double diff = q(index_of(item.action), i) - y;
    loss += 0.5 * diff * diff;
    grad(index_of(item.action), i) = diff / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw NumericalError("non-finite DQN loss");
  optimizer.step(online, online.backward(cache, grad));
  return loss;
}

DqnResult dqn_train(const Environment& env, const DqnConfig& config, std::uint64_t seed,
                    unsigned workers) {
  config.validate();
  std::vector<int> sizes{2};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(3);
  nn::Mlp online(sizes, nn::Activation::Linear, seed);
  nn::Mlp target = online;
  nn::Adam optimizer(online, {.learning_rate = config.learning_rate});
  ReplayBuffer buffer(config.buffer_capacity);
  RandomStream explore({seed, kExplorationStream});
  RandomStream sampler({seed, kExplorationStream + 1});
  const std::uint64_t eval_seed = mix64(seed ^ kEvaluationSalt);

  DqnResult result;
  result.best_mean = -std::numeric_limits<double>::infinity();
  std::uint64_t episode_index = 0;
  auto ep = env.reset({seed, episode_index++});
  double loss_sum = 0.0;
  long loss_count = 0;

  for (long step = 1; step <= config.total_steps; ++step) {
    const double eps = config.epsilon.at(step - 1, config.total_steps);
    const auto mask = ep->mask();
    const auto features = ep->features();
    const Action a = (step <= config.learning_starts || explore.uniform() < eps)
                         ? random_action(mask, explore)
                         : greedy_action(q_values(online, features), mask);
    const auto tr = ep->step(a);
    buffer.push({features, a, tr.reward, ep->features(), tr.terminal,
                 tr.terminal || ep->mask()[Action::Continue]});
    if (ep->terminal()) ep = env.reset({seed, episode_index++});

    if (step > config.learning_starts && step % config.train_every == 0) {
      const auto batch = buffer.sample(static_cast<std::size_t>(config.batch_size), sampler);
      try {
        loss_sum += dqn_step(online, target, optimizer, batch, config.reward_scale);
      } catch (const NumericalError& e) {
        throw TrainingDiverged(std::string(e.what()) + " at step " + std::to_string(step),
                               result.trace);
      }
      ++loss_count;
    }
    if (step % config.target_sync == 0) target = online;

    if (step % config.eval_every == 0 || step == config.total_steps) {
      const auto eval =
          evaluate_rollouts(env, greedy_rule(online), config.eval_episodes, eval_seed, workers);
      result.trace.push_back({step, eval.mean, eval.se, eps,
                              loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0});
      loss_sum = 0.0;
      loss_count = 0;
      if (eval.mean > result.best_mean) {
        result.best_mean = eval.mean;
        result.best_step = step;
        result.best = online;
      }
    }
  }
  result.last = online;
  return result;
}

std::string to_csv(const std::vector<TracePoint>& trace) {
  std::string out = "step,mean_return,se,epsilon,loss\n";
  for (const auto& p : trace) {
    out += std::to_string(p.step) + "," + format_double(p.mean) + "," + format_double(p.se) + "," +
           format_double(p.epsilon) + "," + format_double(p.loss) + "\n";
  }
  return out;
}

}  // namespace seqdesign::rl
