#include "compdial/rule_agent.hpp"

#include <stdexcept>

namespace compdial {

int rule_top(const Session& session) {
  for (int k = 0; k < session.domain().ontology.num_subtasks(); ++k) {
    if (!session.subtask_succeeded(k)) return k;
  }
  throw std::runtime_error("no subtask available");
}

PrimitiveAction rule_low(const Session& session, int subtask, RuleState& state) {
  const auto k = static_cast<std::size_t>(subtask);
  const SubtaskBelief& belief = session.belief().subtasks[k];
  if (state.times_requested.size() != session.belief().subtasks.size()) {
    state.times_requested.clear();
    for (const auto& b : session.belief().subtasks) state.times_requested.emplace_back(b.slots.size(), 0);
  }
  auto& requested = state.times_requested[k];

  for (std::size_t j = 0; j < belief.slots.size(); ++j) {
    if (belief.slots[j].top_mass() < kRuleResolvedMass && requested[j] < kRuleMaxRequests) {
      ++requested[j];
      return {subtask, SystemActionKind::Request, static_cast<int>(j)};
    }
  }
  if (!belief.entity_offered) return {subtask, SystemActionKind::InformEntity, -1};
  if (!belief.pending.empty()) return {subtask, SystemActionKind::InformRequested, -1};
  if (belief.last_user_intent == Intent::Thankyou || belief.last_user_intent == Intent::Bye) {
    return {subtask, SystemActionKind::Bye, -1};
  }
  return {subtask, SystemActionKind::ReqMore, -1};
}

const Session& RuleAgent::session_of(const Episode& episode) {
  const auto* session = dynamic_cast<const Session*>(&episode);
  if (!session) throw std::invalid_argument("RuleAgent drives dialogue sessions only");
  return *session;
}

void RuleAgent::begin_episode(const Episode& /*episode*/) { state_ = RuleState{}; }

int RuleAgent::choose_subtask(const Episode& episode) { return rule_top(session_of(episode)); }

int RuleAgent::choose_action(const Episode& episode, int subtask) {
  const Session& session = session_of(episode);
  return session.domain().actions.encode(rule_low(session, subtask, state_));
}

}  // namespace compdial
