#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "seqdesign/rng.hpp"

namespace seqdesign {

enum class Action : std::uint8_t { Continue = 0, Stop1 = 1, Stop2 = 2 };

inline constexpr int kNumActions = 3;
inline constexpr std::array<Action, 3> kAllActions = {Action::Continue, Action::Stop1,
                                                      Action::Stop2};

constexpr int index_of(Action a) { return static_cast<int>(a); }
Action action_from_index(int i);
std::string_view action_name(Action a);

constexpr bool is_stop(Action a) { return a != Action::Continue; }

// Two-component summary statistic. Example 1: (t, p_t). Example 2: (mean, sd)
// of the posterior of the ED95 effect.
using State = std::array<double, 2>;

// Actions available at step t of an episode with horizon t_max. No data has
// been seen at t = 0, so only Continue is allowed; at t_max Continue is masked.
struct ActionMask {
  std::array<bool, 3> allowed{true, true, true};

  bool operator[](Action a) const { return allowed[index_of(a)]; }
  static ActionMask at_step(int t, int t_max);
};

struct Transition {
  State state{};
  Action action = Action::Continue;
  double reward = 0.0;
  State next_state{};
  bool terminal = false;
  int t = 0;       // step index before the action
  int next_t = 0;  // step index after the action
};

// One running episode. Owned by exactly one worker.
class Episode {
 public:
  virtual ~Episode() = default;

  virtual State state() const = 0;
  // Learner-facing encoding of the state (bounded or standardized inputs).
  virtual std::array<double, 2> features() const = 0;
  virtual int t() const = 0;
  virtual int t_max() const = 0;
  virtual bool terminal() const = 0;
  // The parameter draw for this episode (Example 1: theta and hypothesis
  // index; Example 2: (b, q)).
  virtual std::array<double, 2> theta() const = 0;
  // Sum of rewards collected so far.
  virtual double return_so_far() const = 0;
  // Outcome observed by the most recent Continue (NaN before any data).
  virtual double last_outcome() const = 0;
  // Dose at which that outcome was observed; empty for dose-free designs.
  virtual std::optional<double> last_dose() const { return std::nullopt; }

  // Throws UsageError after termination or for a masked action.
  virtual Transition step(Action a) = 0;

  ActionMask mask() const { return ActionMask::at_step(t(), t_max()); }
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string_view id() const = 0;
  virtual int t_max() const = 0;
  virtual std::unique_ptr<Episode> reset(SeedSpec seed) const = 0;
  // Best terminal action for the given state at step t, judged by posterior
  // expected terminal utility. Used for forced stops at the horizon.
  virtual Action terminal_argmax(const State& s, int t) const = 0;
};

}  // namespace seqdesign
