#include "compdial/env.hpp"

#include <algorithm>
#include <array>
#include <sstream>
#include <stdexcept>

#include "compdial/errors.hpp"
#include "json.hpp"

namespace compdial {

namespace {

constexpr std::array<std::string_view, 8> kSystemActionNames = {
    "request", "confirm", "select", "inform_entity", "inform_requested", "repeat", "reqmore", "bye"};

constexpr int kGoalAttempts = 100;

}  // namespace

std::string_view system_action_name(SystemActionKind kind) {
  return kSystemActionNames[static_cast<std::size_t>(kind)];
}

ActionSpace::ActionSpace(const Ontology& ontology) {
  int begin = 0;
  for (const auto& sub : ontology.subtasks) {
    const int n = sub.num_informable() * kSlotActions + kIndependentActions;
    ranges_.push_back({begin, begin + n});
    begin += n;
  }
}

PrimitiveAction ActionSpace::decode(int action) const {
  for (std::size_t k = 0; k < ranges_.size(); ++k) {
    if (!ranges_[k].contains(action)) continue;
    const int offset = action - ranges_[k].begin;
    const int slot_actions = ranges_[k].size() - kIndependentActions;
    PrimitiveAction out;
    out.subtask = static_cast<int>(k);
    if (offset < slot_actions) {
      out.slot = offset / kSlotActions;
      out.kind = static_cast<SystemActionKind>(offset % kSlotActions);
    } else {
      out.kind = static_cast<SystemActionKind>(
          static_cast<int>(SystemActionKind::InformEntity) + offset - slot_actions);
    }
    return out;
  }
  throw std::out_of_range("action index " + std::to_string(action) + " outside action space of size " +
                          std::to_string(size()));
}

int ActionSpace::encode(const PrimitiveAction& action) const {
  const ActionRange r = range(action.subtask);
  const int slot_actions = r.size() - kIndependentActions;
  const int kind = static_cast<int>(action.kind);
  if (kind < kSlotActions) {
    if (action.slot < 0 || action.slot * kSlotActions >= slot_actions) {
      throw std::out_of_range("slot action with invalid slot ordinal");
    }
    return r.begin + action.slot * kSlotActions + kind;
  }
  return r.begin + slot_actions + kind - static_cast<int>(SystemActionKind::InformEntity);
}

std::shared_ptr<const DialogueDomain> DialogueDomain::create(Ontology ontology, std::uint64_t db_seed) {
  const ValidationReport report = validate_ontology(ontology);
  if (!report.ok()) {
    std::string msg = "invalid ontology:";
    for (const auto& v : report.violations) msg += " [" + v.path + ": " + v.message + "]";
    throw ConfigError(msg);
  }
  auto domain = std::make_shared<DialogueDomain>();
  domain->db = std::make_shared<const EntityDatabase>(generate_database(ontology, db_seed));
  domain->actions = ActionSpace(ontology);
  domain->ontology = std::move(ontology);
  return domain;
}

TaskShape DialogueDomain::shape(int top_m) const {
  TaskShape s;
  s.observation_dim = BeliefLayout(ontology, top_m).size();
  s.num_subtasks = ontology.num_subtasks();
  s.subtask_actions = actions.ranges();
  return s;
}

UserGoal sample_goal(const DialogueDomain& domain, Rng& rng) {
  UserGoal goal;
  for (std::size_t k = 0; k < domain.ontology.subtasks.size(); ++k) {
    const SubtaskSpec& spec = domain.ontology.subtasks[k];
    const SubtaskDatabase& db = domain.db->subtasks[k];
    const std::vector<int> informable = spec.informable_slots();
    SubtaskGoal sg;
    sg.constraints.assign(spec.slots.size(), kUnconstrained);

    bool satisfied = false;
    for (int attempt = 0; attempt < kGoalAttempts && !satisfied; ++attempt) {
      for (int j : informable) {
        const double u = rng.uniform();
        int c = kUnconstrained;
        if (u < 0.7) {
          c = static_cast<int>(rng.index(spec.slots[static_cast<std::size_t>(j)].values.size()));
        } else if (u < 0.85) {
          c = kDontCareValue;
        }
        sg.constraints[static_cast<std::size_t>(j)] = c;
      }
      satisfied = count_matches(db, sg.constraints) > 0;
    }
    if (!satisfied) {
      const Entity& e = db.entities[rng.index(db.entities.size())];
      for (int j : informable) sg.constraints[static_cast<std::size_t>(j)] = e[static_cast<std::size_t>(j)];
      goal.used_fallback = true;
    }

    std::vector<int> requestable = spec.requestable_slots();
    const std::size_t n = std::min<std::size_t>(1 + rng.index(3), requestable.size());
    for (std::size_t i = 0; i < n; ++i) {
      std::swap(requestable[i], requestable[i + rng.index(requestable.size() - i)]);
      sg.requests.push_back(requestable[i]);
    }
    goal.subtasks.push_back(std::move(sg));
  }
  return goal;
}

DialogueAct corrupt(const DialogueAct& act, double ser, const Ontology& ontology, Rng& rng) {
  DialogueAct out = act;
  if (rng.uniform() < ser) {
    const bool want_replace = rng.bernoulli(0.5);
    const SlotSpec* slot = nullptr;
    if (act.subtask >= 0 && act.subtask < ontology.num_subtasks() && !act.value.empty()) {
      const SubtaskSpec& spec = ontology.subtasks[static_cast<std::size_t>(act.subtask)];
      const int j = spec.slot_index(act.slot);
      if (j >= 0 && spec.slots[static_cast<std::size_t>(j)].informable) {
        slot = &spec.slots[static_cast<std::size_t>(j)];
      }
    }
    const bool is_dontcare = act.value == kDontCare;
    const bool can_replace = slot != nullptr && slot->values.size() >= (is_dontcare ? 1u : 2u);
    if (want_replace && can_replace) {
      const std::size_t n = slot->values.size();
      if (is_dontcare) {
        out.value = slot->values[rng.index(n)];
      } else {
        const auto current = static_cast<std::size_t>(slot->value_index(act.value));
        std::size_t pick = rng.index(n - 1);
        if (pick >= current) ++pick;
        out.value = slot->values[pick];
      }
    } else {
      out.intent = Intent::Null;
      out.slot.clear();
      out.value.clear();
    }
    out.confidence = rng.uniform(0.2, 0.6);
  } else {
    out.confidence = rng.uniform(0.7, 1.0);
  }
  return out;
}

std::string transcript_line(const TranscriptEntry& entry) {
  nlohmann::json j;
  j["turn"] = entry.turn;
  j["speaker"] = entry.speaker;
  j["intent"] = entry.intent;
  j["subtask"] = entry.subtask;
  j["slot"] = entry.slot.empty() ? nlohmann::json(nullptr) : nlohmann::json(entry.slot);
  j["value"] = entry.value.empty() ? nlohmann::json(nullptr) : nlohmann::json(entry.value);
  j["confidence"] = entry.confidence;
  j["r_i"] = entry.r_i;
  j["r_e"] = entry.r_e;
  return j.dump();
}

Session::Session(std::shared_ptr<const DialogueDomain> domain, EnvConfig config, std::uint64_t seed)
    : domain_(std::move(domain)),
      config_(config),
      tracker_(domain_->db, config.top_m, config.max_dialogue_turns),
      rng_(seed) {
  goal_ = sample_goal(*domain_, rng_);
  init();
}

Session::Session(std::shared_ptr<const DialogueDomain> domain, EnvConfig config, std::uint64_t seed,
                 UserGoal goal)
    : domain_(std::move(domain)),
      config_(config),
      tracker_(domain_->db, config.top_m, config.max_dialogue_turns),
      rng_(seed),
      goal_(std::move(goal)) {
  if (goal_.subtasks.size() != domain_->ontology.subtasks.size()) {
    throw std::invalid_argument("Session: goal does not match the ontology");
  }
  init();
}

void Session::init() {
  const auto k = domain_->ontology.subtasks.size();
  belief_ = tracker_.initial();
  subtask_turns_.assign(k, 0);
  done_.assign(k, false);
  offered_entity_.assign(k, -1);
  offer_consistent_.assign(k, false);
  answered_.assign(k, {});
  offer_constraints_.assign(k, std::nullopt);
  features_ = tracker_.features(belief_);
}

std::vector<bool> Session::legal_subtasks() const {
  std::vector<bool> mask(done_.size());
  for (std::size_t k = 0; k < done_.size(); ++k) mask[k] = !done_[k];
  return mask;
}

int Session::goal_value(int subtask, int slot) const {
  const int c = goal_.subtasks[static_cast<std::size_t>(subtask)].constraints[static_cast<std::size_t>(slot)];
  return c >= 0 ? c : kDontCareValue;
}

DialogueAct Session::make_act(Intent intent, int subtask, int slot, int value) const {
  DialogueAct act;
  act.intent = intent;
  act.subtask = subtask;
  if (slot >= 0) {
    const SlotSpec& spec =
        domain_->ontology.subtasks[static_cast<std::size_t>(subtask)].slots[static_cast<std::size_t>(slot)];
    act.slot = spec.name;
    if (value >= 0) {
      act.value = spec.values[static_cast<std::size_t>(value)];
    } else if (value == kDontCareValue) {
      act.value = std::string(kDontCare);
    }
  }
  return act;
}

std::vector<int> Session::remaining_requests(int subtask) const {
  std::vector<int> out;
  for (int r : goal_.subtasks[static_cast<std::size_t>(subtask)].requests) {
    if (!answered_[static_cast<std::size_t>(subtask)].contains(r)) out.push_back(r);
  }
  return out;
}

std::vector<DialogueAct> Session::correction(int subtask, const std::vector<int>& shown) const {
  const auto& constraints = goal_.subtasks[static_cast<std::size_t>(subtask)].constraints;
  const SubtaskSpec& spec = domain_->ontology.subtasks[static_cast<std::size_t>(subtask)];
  const std::vector<int> informable = spec.informable_slots();
  for (int j : informable) {
    const int want = constraints[static_cast<std::size_t>(j)];
    if (want >= 0 && shown[static_cast<std::size_t>(j)] != want) {
      return {make_act(Intent::Inform, subtask, j, want)};
    }
  }
  for (int j : informable) {
    if (constraints[static_cast<std::size_t>(j)] < 0 && shown[static_cast<std::size_t>(j)] >= 0) {
      return {make_act(Intent::Inform, subtask, j, kDontCareValue)};
    }
  }
  return {make_act(Intent::Null, subtask, -1, kUnconstrained)};
}

std::vector<DialogueAct> Session::user_agenda_reply(int subtask) const {
  const auto k = static_cast<std::size_t>(subtask);
  if (offered_entity_[k] >= 0) {
    if (offer_consistent_[k]) {
      std::vector<DialogueAct> acts;
      for (int r : remaining_requests(subtask)) acts.push_back(make_act(Intent::Request, subtask, r, kUnconstrained));
      if (!acts.empty()) return acts;
    } else {
      const Entity& e = domain_->db->subtasks[k].entities[static_cast<std::size_t>(offered_entity_[k])];
      return correction(subtask, e);
    }
  }
  return {make_act(Intent::Null, subtask, -1, kUnconstrained)};
}

SystemTurn Session::system_turn(int action) {
  if (finished_) throw std::logic_error("episode finished");
  if (in_turn_) throw std::logic_error("system_turn: previous turn not observed");
  SystemTurn out;
  out.action = domain_->actions.decode(action);
  const int k = out.action.subtask;
  const auto ks = static_cast<std::size_t>(k);
  const SubtaskSpec& spec = domain_->ontology.subtasks[ks];
  const SubtaskDatabase& db = domain_->db->subtasks[ks];
  const std::vector<int> informable = spec.informable_slots();

  active_ = k;
  ++turn_;
  ++subtask_turns_[ks];
  repeats_ = action == last_action_ ? repeats_ + 1 : 0;
  last_action_ = action;

  const std::string_view name = system_action_name(out.action.kind);
  std::vector<DialogueAct>& reply = out.user_reply;
  const auto null_reply = [&] { reply = {make_act(Intent::Null, k, -1, kUnconstrained)}; };
  const auto describe_entity = [&](const Entity& e, const std::vector<int>& slots) {
    std::string text = "inform(";
    bool first = true;
    for (int j : slots) {
      if (!first) text += ',';
      first = false;
      text += spec.slots[static_cast<std::size_t>(j)].name + "=" + db.value_of(e, j);
    }
    return text + ")";
  };

  const int slot_pos = out.action.slot >= 0 ? informable[static_cast<std::size_t>(out.action.slot)] : -1;
  bool keep_last_reply = false;

  if (done_[ks]) {
    out.text = std::string(name) + "()";
    null_reply();
  } else {
    switch (out.action.kind) {
      case SystemActionKind::Request:
        out.text = "request(" + spec.slots[static_cast<std::size_t>(slot_pos)].name + ")";
        reply = {make_act(Intent::Inform, k, slot_pos, goal_value(k, slot_pos))};
        break;
      case SystemActionKind::Confirm:
        out.text = "confirm(" + spec.slots[static_cast<std::size_t>(slot_pos)].name + ")";
        if (belief_.subtasks[ks].slots[static_cast<std::size_t>(out.action.slot)].mentioned() == 0) {
          null_reply();
        } else {
          reply = {make_act(Intent::ConfirmAnswer, k, slot_pos, goal_value(k, slot_pos))};
        }
        break;
      case SystemActionKind::Select:
        out.text = "select(" + spec.slots[static_cast<std::size_t>(slot_pos)].name + ")";
        if (belief_.subtasks[ks].slots[static_cast<std::size_t>(out.action.slot)].mentioned() < 2) {
          null_reply();
        } else {
          reply = {make_act(Intent::SelectAnswer, k, slot_pos, goal_value(k, slot_pos))};
        }
        break;
      case SystemActionKind::InformEntity: {
        const std::vector<int> shown = top1_constraints(belief_.subtasks[ks], spec);
        const long e = first_match(db, shown);
        if (e < 0) {
          out.text = "inform(name=none)";
          offer_constraints_[ks].reset();
          offered_entity_[ks] = -1;
          offer_consistent_[ks] = false;
          answered_[ks].clear();
          reply = correction(k, shown);
          break;
        }
        const Entity& entity = db.entities[static_cast<std::size_t>(e)];
        std::vector<int> slots = informable;
        const int name_slot = spec.slot_index("name");
        if (name_slot >= 0 && !spec.slots[static_cast<std::size_t>(name_slot)].informable) {
          slots.insert(slots.begin(), name_slot);
        }
        out.text = describe_entity(entity, slots);
        if (e != offered_entity_[ks]) answered_[ks].clear();
        offer_constraints_[ks] = shown;
        offered_entity_[ks] = e;
        offer_consistent_[ks] = entity_matches(entity, goal_.subtasks[ks].constraints);
        if (offer_consistent_[ks]) {
          reply = user_agenda_reply(k);
          if (reply.front().intent == Intent::Null) reply = {make_act(Intent::Thankyou, k, -1, kUnconstrained)};
        } else {
          reply = correction(k, entity);
        }
        break;
      }
      case SystemActionKind::InformRequested: {
        if (offered_entity_[ks] < 0) {
          out.text = "inform()";
          null_reply();
          break;
        }
        const Entity& entity = db.entities[static_cast<std::size_t>(offered_entity_[ks])];
        std::vector<int> slots(belief_.subtasks[ks].pending.begin(), belief_.subtasks[ks].pending.end());
        out.text = describe_entity(entity, slots);
        if (offer_consistent_[ks]) answered_[ks].insert(slots.begin(), slots.end());
        belief_.subtasks[ks].pending.clear();
        if (offer_consistent_[ks] && remaining_requests(k).empty()) {
          reply = {make_act(Intent::Thankyou, k, -1, kUnconstrained)};
        } else {
          reply = user_agenda_reply(k);
        }
        break;
      }
      case SystemActionKind::Repeat:
        out.text = "repeat()";
        if (last_reply_.empty()) {
          null_reply();
        } else {
          reply = last_reply_;
          keep_last_reply = true;
        }
        break;
      case SystemActionKind::ReqMore:
        out.text = "reqmore()";
        reply = user_agenda_reply(k);
        break;
      case SystemActionKind::Bye:
        out.text = "bye()";
        system_bye_ = true;
        reply = {make_act(Intent::Bye, k, -1, kUnconstrained)};
        break;
    }
  }

  if (repeats_ >= config_.patience) reply = {make_act(Intent::Bye, k, -1, kUnconstrained)};
  if (!keep_last_reply) last_reply_ = reply;
  in_turn_ = true;

  if (record_transcript_) {
    TranscriptEntry entry;
    entry.turn = turn_;
    entry.speaker = "system";
    entry.intent = std::string(name);
    entry.subtask = k;
    if (slot_pos >= 0) entry.slot = spec.slots[static_cast<std::size_t>(slot_pos)].name;
    entry.value = out.text;
    transcript_.push_back(std::move(entry));
  }
  return out;
}

void Session::refresh_flags() {
  for (std::size_t k = 0; k < belief_.subtasks.size(); ++k) {
    const auto& shown = offer_constraints_[k];
    belief_.subtasks[k].entity_offered =
        shown.has_value() &&
        *shown == top1_constraints(belief_.subtasks[k], domain_->ontology.subtasks[k]);
  }
  tracker_.write_features(belief_, features_);
}

StepResult Session::observe_user(const std::vector<DialogueAct>& observed, bool user_left) {
  if (!in_turn_) throw std::logic_error("observe_user: no system turn in progress");
  in_turn_ = false;
  const int k = active_;
  const auto ks = static_cast<std::size_t>(k);

  belief_ = tracker_.track(belief_, observed);
  refresh_flags();

  const bool was_done = done_[ks];
  const bool success_now =
      !was_done && offered_entity_[ks] >= 0 && offer_consistent_[ks] && remaining_requests(k).empty();
  if (success_now) done_[ks] = true;
  const bool all_done = std::all_of(done_.begin(), done_.end(), [](bool d) { return d; });

  bool failed = false;
  if (!all_done) {
    failed = user_left || system_bye_ || turn_ >= config_.max_dialogue_turns ||
             (!success_now && !was_done && subtask_turns_[ks] >= config_.max_subtask_turns);
  }

  StepResult result;
  result.dialogue_terminated = all_done || failed;
  result.dialogue_success = all_done;
  result.subtask_success = success_now;
  result.subtask_terminated = success_now || was_done || result.dialogue_terminated;
  result.intrinsic_reward = config_.turn_penalty + (success_now ? config_.intrinsic_success_bonus : 0.0);
  result.extrinsic_reward =
      config_.turn_penalty + (success_now && all_done ? static_cast<double>(done_.size()) : 0.0);
  result.observation = features_;

  finished_ = result.dialogue_terminated;
  success_ = all_done;

  if (record_transcript_) {
    if (!transcript_.empty() && transcript_.back().speaker == "system") {
      transcript_.back().r_i = result.intrinsic_reward;
      transcript_.back().r_e = result.extrinsic_reward;
    }
    for (const DialogueAct& act : observed) {
      TranscriptEntry entry;
      entry.turn = turn_;
      entry.speaker = "user";
      entry.intent = std::string(intent_name(act.intent));
      entry.subtask = act.subtask;
      entry.slot = act.slot;
      entry.value = act.value;
      entry.confidence = act.confidence;
      transcript_.push_back(std::move(entry));
    }
  }
  return result;
}

StepResult Session::step(int action) {
  SystemTurn turn = system_turn(action);
  const bool user_left = std::any_of(turn.user_reply.begin(), turn.user_reply.end(),
                                     [](const DialogueAct& a) { return a.intent == Intent::Bye; });
  std::vector<DialogueAct> observed;
  observed.reserve(turn.user_reply.size());
  for (const DialogueAct& act : turn.user_reply) {
    observed.push_back(corrupt(act, config_.ser, domain_->ontology, rng_));
  }
  return observe_user(observed, user_left);
}

}  // namespace compdial
