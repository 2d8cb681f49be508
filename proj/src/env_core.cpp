#include "seqdesign/env_core.hpp"

#include "seqdesign/errors.hpp"

namespace seqdesign {

Action action_from_index(int i) {
  if (i < 0 || i >= kNumActions) throw UsageError("action index out of range: " + std::to_string(i));
  return static_cast<Action>(i);
}

std::string_view action_name(Action a) {
  switch (a) {
    case Action::Continue:
      return "continue";
    case Action::Stop1:
      return "stop1";
    case Action::Stop2:
      return "stop2";
  }
  return "?";
}

ActionMask ActionMask::at_step(int t, int t_max) {
  ActionMask m;
  if (t <= 0) {
    m.allowed = {true, false, false};
  } else if (t >= t_max) {
    m.allowed = {false, true, true};
  }
  return m;
}

}  // namespace seqdesign
