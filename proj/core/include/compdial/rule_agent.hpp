#pragma once

#include <vector>

#include "compdial/env.hpp"

namespace compdial {

/// Per-subtask bookkeeping of the rule agent.
struct RuleState {
  std::vector<std::vector<int>> times_requested;  // [subtask][informable ordinal]
};

inline constexpr double kRuleResolvedMass = 0.6;
inline constexpr int kRuleMaxRequests = 2;

/// Lowest-index unfinished subtask, read from the true session state.
int rule_top(const Session& session);

/// Priority: request an unresolved slot (mass < 0.6, asked fewer than twice);
/// inform an entity if none is on offer; answer pending requests; bye once
/// the user signals completion; otherwise reqmore. Updates `state`.
PrimitiveAction rule_low(const Session& session, int subtask, RuleState& state);

/// Hand-written controller; only drives Session episodes.
class RuleAgent : public Controller {
 public:
  void begin_episode(const Episode& episode) override;
  int choose_subtask(const Episode& episode) override;
  int choose_action(const Episode& episode, int subtask) override;

  const RuleState& state() const { return state_; }

 private:
  static const Session& session_of(const Episode& episode);
  RuleState state_;
};

}  // namespace compdial
