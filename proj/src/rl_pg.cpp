#include "seqdesign/rl_pg.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "seqdesign/config_io.hpp"
#include "seqdesign/parallel.hpp"

namespace seqdesign::pg {

namespace {

constexpr std::uint64_t kActionSalt = 0xac71'0a5e'0000'0001ULL;
constexpr std::uint64_t kEvaluationSalt = 0x9e7a'1000ULL;

Eigen::MatrixXd stack_inputs(const RolloutBatch& batch, std::vector<const PolicyStep*>& steps) {
  steps.clear();
  for (const auto& ep : batch.episodes) {
    for (const auto& s : ep.steps) steps.push_back(&s);
  }
  Eigen::MatrixXd x(2, static_cast<Eigen::Index>(steps.size()));
  for (std::size_t i = 0; i < steps.size(); ++i) {
    x(0, static_cast<Eigen::Index>(i)) = steps[i]->input[0];
    x(1, static_cast<Eigen::Index>(i)) = steps[i]->input[1];
  }
  return x;
}

std::array<double, 3> column(const Eigen::MatrixXd& m, Eigen::Index j) {
  return {m(0, j), m(1, j), m(2, j)};
}

}  // namespace

Standardizer fit_standardizer(const TrajectoryDataset& data) {
  Standardizer s;
  if (data.steps.empty()) throw DataError("empty dataset for standardization");
  const double n = static_cast<double>(data.steps.size());
  for (int k = 0; k < 2; ++k) {
    double mean = 0.0;
    for (const auto& step : data.steps) mean += step.summary[k];
    mean /= n;
    double var = 0.0;
    for (const auto& step : data.steps) var += (step.summary[k] - mean) * (step.summary[k] - mean);
    const double sd = std::sqrt(var / n);
    s.location[k] = mean;
    s.scale[k] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

std::array<double, 3> masked_softmax(const std::array<double, 3>& logits, const ActionMask& mask) {
  double top = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (mask.allowed[a]) top = std::max(top, logits[a]);
  }
  std::array<double, 3> p{0.0, 0.0, 0.0};
  double sum = 0.0;
  for (int a = 0; a < 3; ++a) {
    if (mask.allowed[a]) sum += p[a] = std::exp(logits[a] - top);
  }
  for (double& v : p) v /= sum;
  return p;
}

Action sample_action(const std::array<double, 3>& probs, RandomStream& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int last = 0;
  for (int a = 0; a < 3; ++a) {
    if (probs[a] <= 0.0) continue;
    last = a;
    acc += probs[a];
    if (u < acc) return action_from_index(a);
  }
  return action_from_index(last);
}

Action mode_action(const std::array<double, 3>& logits, const ActionMask& mask) {
  int best = -1;
  for (int a = 0; a < 3; ++a) {
    if (mask.allowed[a] && (best < 0 || logits[a] > logits[best])) best = a;
  }
  return action_from_index(best);
}

Policy::Policy(nn::Mlp net, Standardizer standardizer)
    : net_(std::move(net)), standardizer_(standardizer) {
  if (net_.inputs() != 2 || net_.outputs() != 3) {
    throw ConfigError("policy network must map 2 inputs to 3 logits");
  }
}

std::array<double, 3> Policy::logits_standardized(const std::array<double, 2>& input) const {
  Eigen::MatrixXd x(2, 1);
  x << input[0], input[1];
  return column(net_.forward(x), 0);
}

std::array<double, 3> Policy::logits(const std::array<double, 2>& features) const {
  return logits_standardized(standardizer_(features));
}

RolloutBatch rollout(const Environment& env, const Policy& policy, int n, std::uint64_t master_seed,
                     std::uint64_t first_episode, unsigned workers) {
  if (n < 1) throw ConfigError("rollout needs at least one episode");
  RolloutBatch batch;
  batch.episodes.resize(static_cast<std::size_t>(n));
  const std::uint64_t action_seed = mix64(master_seed ^ kActionSalt);
  parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
    const std::uint64_t index = first_episode + i;
    auto ep = env.reset({master_seed, index});
    RandomStream rng({action_seed, index});
    auto& rec = batch.episodes[i];
    while (!ep->terminal()) {
      PolicyStep step;
      step.input = policy.standardizer()(ep->features());
      step.mask = ep->mask();
      const auto probs = masked_softmax(policy.logits_standardized(step.input), step.mask);
      for (double p : probs) {
        if (!std::isfinite(p)) throw NumericalError("non-finite policy probabilities");
      }
      step.action = sample_action(probs, rng);
      step.log_prob = std::log(probs[index_of(step.action)]);
      step.reward = ep->step(step.action).reward;
      rec.steps.push_back(step);
    }
    rec.ret = ep->return_so_far();
    rec.final_state = ep->state();
  });
  return batch;
}

nn::Gradients pg_gradient(const RolloutBatch& batch, const Policy& policy, Baseline baseline,
                          bool reward_to_go, bool normalize) {
  if (batch.episodes.empty()) throw UsageError("empty rollout batch");
  const double n = static_cast<double>(batch.episodes.size());
  double mean = 0.0;
  for (const auto& ep : batch.episodes) mean += ep.ret;
  mean /= n;
  const double b = baseline == Baseline::BatchMean ? mean : 0.0;
  double scale = n;
  if (normalize) {
    double var = 0.0;
    for (const auto& ep : batch.episodes) var += (ep.ret - mean) * (ep.ret - mean);
    const double sd = std::sqrt(var / n);
    if (sd > 1e-12) scale *= sd;
  }
  // Per-step baseline: mean weight among episodes still running at step k.
  std::vector<double> step_sum, step_count;
  if (baseline == Baseline::PerStep) {
    for (const auto& ep : batch.episodes) {
      double to_go = ep.ret;
      for (std::size_t k = 0; k < ep.steps.size(); ++k) {
        if (k >= step_sum.size()) {
          step_sum.push_back(0.0);
          step_count.push_back(0.0);
        }
        step_sum[k] += reward_to_go ? to_go : ep.ret;
        step_count[k] += 1.0;
        to_go -= ep.steps[k].reward;
      }
    }
  }
  std::vector<const PolicyStep*> steps;
  const Eigen::MatrixXd x = stack_inputs(batch, steps);
  nn::Cache cache;
  const Eigen::MatrixXd logits = policy.net().forward(x, cache);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(3, x.cols());
  Eigen::Index j = 0;
  for (const auto& ep : batch.episodes) {
    double to_go = ep.ret;
    for (std::size_t k = 0; k < ep.steps.size(); ++k) {
      const auto& s = ep.steps[k];
      if (!std::isfinite(s.log_prob)) throw NumericalError("non-finite log-probability in batch");
      const double base = baseline == Baseline::PerStep ? step_sum[k] / step_count[k] : b;
      const double weight = (reward_to_go ? to_go : ep.ret) - base;
      to_go -= s.reward;
      const auto p = masked_softmax(column(logits, j), s.mask);
      for (int a = 0; a < 3; ++a) {
        const double score = (a == index_of(s.action) ? 1.0 : 0.0) - p[a];
        grad(a, j) = score * weight / scale;
      }
      ++j;
    }
  }
  return policy.net().backward(cache, grad);
}

nn::Gradients entropy_gradient(const RolloutBatch& batch, const Policy& policy,
                               double* mean_entropy) {
  std::vector<const PolicyStep*> steps;
  const Eigen::MatrixXd x = stack_inputs(batch, steps);
  nn::Cache cache;
  const Eigen::MatrixXd logits = policy.net().forward(x, cache);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(3, x.cols());
  // Summed over each episode's steps and averaged over episodes, matching the
  // scale of the score-function term.
  const double n = static_cast<double>(std::max<std::size_t>(batch.episodes.size(), 1));
  double total = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const auto p = masked_softmax(column(logits, j), steps[j]->mask);
    double h = 0.0;
    for (double v : p) {
      if (v > 0) h -= v * std::log(v);
    }
    total += h;
    // dH/dz_a = -p_a (log p_a + H)
    for (int a = 0; a < 3; ++a) {
      if (p[a] > 0) grad(a, j) = -p[a] * (std::log(p[a]) + h) / n;
    }
  }
  if (mean_entropy) *mean_entropy = total / static_cast<double>(std::max<Eigen::Index>(x.cols(), 1));
  return policy.net().backward(cache, grad);
}

void PgConfig::validate() const {
  if (episodes_per_batch < 1 || batches < 1 || eval_every < 1 || eval_episodes < 1 ||
      standardizer_episodes < 1) {
    throw ConfigError("policy-gradient budgets must be positive");
  }
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
  if (!(entropy_coef >= 0)) throw ConfigError("entropy coefficient must be nonnegative");
  if (std::isnan(entropy_final)) throw ConfigError("final entropy coefficient must be a number");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden layer sizes must be positive");
  }
}

DecisionRule mode_rule(const Policy& policy) {
  return [policy](const Episode& ep) { return mode_action(policy.logits(ep.features()), ep.mask()); };
}

PgResult train(const Environment& env, const TrajectoryDataset& reference, const PgConfig& config,
               std::uint64_t seed, unsigned workers) {
  config.validate();
  std::vector<int> sizes{2};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(3);
  Policy policy(nn::Mlp(sizes, nn::Activation::Linear, seed), fit_standardizer(reference));
  // Start close to uniform so every action is explored.
  auto& out_layer = policy.net().layers().back();
  out_layer.weight *= 0.01;
  for (int a = 0; a < 3; ++a) out_layer.bias[a] = config.initial_bias[a];
  nn::Adam optimizer(policy.net(), {.learning_rate = config.learning_rate});
  const std::uint64_t eval_seed = mix64(seed ^ kEvaluationSalt);

  PgResult result{policy, 0, -std::numeric_limits<double>::infinity(), {}};
  double entropy = 0.0;
  double batch_sum = 0.0;
  long batch_count = 0;
  for (int b = 1; b <= config.batches; ++b) {
    try {
      const auto batch = rollout(env, policy, config.episodes_per_batch, seed,
                                 static_cast<std::uint64_t>(b - 1) * config.episodes_per_batch,
                                 workers);
      for (const auto& ep : batch.episodes) batch_sum += ep.ret;
      batch_count += static_cast<long>(batch.episodes.size());
      auto g = pg_gradient(batch, policy, config.baseline, config.reward_to_go,
                           config.normalize_returns);
      double coef = config.entropy_coef;
      if (config.entropy_final >= 0 && config.batches > 1) {
        coef += (config.entropy_final - config.entropy_coef) * (b - 1) / (config.batches - 1);
      }
      if (coef > 0) {
        const auto h = entropy_gradient(batch, policy, &entropy);
        for (std::size_t l = 0; l < g.weight.size(); ++l) {
          g.weight[l] += coef * h.weight[l];
          g.bias[l] += coef * h.bias[l];
        }
      }
      // Adam descends; the objective is maximised.
      for (std::size_t l = 0; l < g.weight.size(); ++l) {
        g.weight[l] = -g.weight[l];
        g.bias[l] = -g.bias[l];
      }
      optimizer.step(policy.net(), g);
    } catch (const NumericalError& e) {
      throw PgDiverged(std::string(e.what()) + " at batch " + std::to_string(b), result.trace);
    }
    if (b % config.eval_every == 0 || b == config.batches) {
      const auto eval = evaluate_rollouts(env, mode_rule(policy), config.eval_episodes, eval_seed, workers);
      result.trace.push_back({b, eval.mean, eval.se, entropy, batch_sum / static_cast<double>(batch_count)});
      batch_sum = 0.0;
      batch_count = 0;
      if (eval.mean > result.best_mean) {
        result.best_mean = eval.mean;
        result.best_batch = b;
        result.best = policy;
      }
    }
  }
  return result;
}

std::vector<State> dataset_states(const TrajectoryDataset& data) {
  std::vector<State> out;
  out.reserve(data.steps.size());
  for (const auto& s : data.steps) out.push_back(s.summary);
  return out;
}

RegionTable extract_regions(const Policy& policy, const Grid2D& grid,
                            const std::vector<State>& reference_states, int t_for_mask, int t_max) {
  RegionTable r;
  r.grid = grid;
  r.action.resize(grid.cells());
  r.visits.assign(grid.cells(), 0);
  const auto mask = ActionMask::at_step(t_for_mask, t_max);
  for (std::size_t c = 0; c < grid.cells(); ++c) {
    r.action[c] = mode_action(policy.logits(grid.center(c)), mask);
  }
  for (const auto& s : reference_states) ++r.visits[grid.cell(s)];
  return r;
}

double banded_row_fraction(const RegionTable& regions) {
  // Position of each action in the expected order Stop1, Continue, Stop2.
  constexpr std::array<int, 3> kRank{1, 0, 2};
  const auto& g = regions.grid;
  int rows = 0, banded = 0;
  for (int i0 = 0; i0 < g.axes[0].bins; ++i0) {
    int prev = -1;
    bool ok = true;
    for (int i1 = 0; i1 < g.axes[1].bins; ++i1) {
      const auto c = g.cell(i0, i1);
      if (regions.visits[c] == 0) continue;
      const int rank = kRank[index_of(regions.action[c])];
      if (rank < prev) ok = false;
      prev = std::max(prev, rank);
    }
    if (prev < 0) continue;
    ++rows;
    if (ok) ++banded;
  }
  return rows ? static_cast<double>(banded) / rows : 0.0;
}

std::string to_csv(const std::vector<PgTracePoint>& trace) {
  std::string out = "batch,mean_return,se,entropy,batch_mean_return\n";
  for (const auto& p : trace) {
    out += std::to_string(p.batch) + "," + format_double(p.mean) + "," + format_double(p.se) + "," +
           format_double(p.entropy) + "," + format_double(p.batch_mean) + "\n";
  }
  return out;
}

std::string to_csv(const RegionTable& r) {
  std::string out = "i0,i1,center_0,center_1,action,visits\n";
  for (std::size_t c = 0; c < r.grid.cells(); ++c) {
    const auto [i0, i1] = r.grid.coords(c);
    const auto s = r.grid.center(c);
    out += std::to_string(i0) + "," + std::to_string(i1) + "," + format_double(s[0]) + "," +
           format_double(s[1]) + "," + std::to_string(index_of(r.action[c])) + "," +
           std::to_string(r.visits[c]) + "\n";
  }
  return out;
}

}  // namespace seqdesign::pg
