#include "compdial/chat.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

namespace compdial {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t at = s.find(sep, start);
    parts.push_back(trim(s.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start)));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return parts;
}

[[noreturn]] void fail(const std::string& what) { throw ActParseError(what + " (" + std::string(kActGrammar) + ")"); }

std::vector<DialogueAct> parse_one(std::string_view text, const SubtaskSpec& spec, int subtask) {
  const std::size_t open = text.find('(');
  if (open == std::string_view::npos || text.back() != ')') fail("expected intent(...)");
  const std::string_view name = trim(text.substr(0, open));
  const auto intent = parse_intent(name);
  if (!intent) fail("unknown intent \"" + std::string(name) + "\"");
  const std::string_view body = trim(text.substr(open + 1, text.size() - open - 2));

  std::vector<DialogueAct> acts;
  if (body.empty()) {
    acts.push_back({*intent, subtask, "", "", 1.0});
    return acts;
  }
  for (std::string_view arg : split(body, ',')) {
    if (arg.empty()) fail("empty argument");
    const std::size_t eq = arg.find('=');
    const std::string slot(trim(arg.substr(0, eq)));
    const std::string value = eq == std::string_view::npos ? "" : std::string(trim(arg.substr(eq + 1)));
    const int pos = spec.slot_index(slot);
    if (pos < 0) fail("slot \"" + slot + "\" does not belong to " + spec.name);
    if (eq != std::string_view::npos) {
      if (value.empty()) fail("missing value for " + slot);
      if (value != kDontCare && spec.slots[static_cast<std::size_t>(pos)].value_index(value) < 0) {
        fail("\"" + value + "\" is not a value of " + slot);
      }
    }
    acts.push_back({*intent, subtask, slot, value, 1.0});
  }
  return acts;
}

}  // namespace

std::vector<DialogueAct> parse_user_acts(std::string_view line, const Ontology& ontology, int subtask) {
  if (subtask < 0 || static_cast<std::size_t>(subtask) >= ontology.subtasks.size()) {
    throw std::out_of_range("parse_user_acts: subtask out of range");
  }
  line = trim(line);
  if (line.empty()) fail("empty input");
  std::vector<DialogueAct> acts;
  for (std::string_view part : split(line, ';')) {
    if (part.empty()) continue;
    auto parsed = parse_one(part, ontology.subtasks[static_cast<std::size_t>(subtask)], subtask);
    acts.insert(acts.end(), parsed.begin(), parsed.end());
  }
  if (acts.empty()) fail("no acts");
  return acts;
}

std::string describe_goal(const Session& session) {
  const Ontology& onto = session.domain().ontology;
  std::string out;
  for (std::size_t k = 0; k < onto.subtasks.size(); ++k) {
    const SubtaskSpec& spec = onto.subtasks[k];
    const SubtaskGoal& g = session.goal().subtasks[k];
    out += spec.name + ": constraints";
    for (std::size_t j = 0; j < g.constraints.size(); ++j) {
      const int v = g.constraints[j];
      if (v == kUnconstrained) continue;
      out += " " + spec.slots[j].name + "=" +
             (v == kDontCareValue ? std::string(kDontCare) : spec.slots[j].values[static_cast<std::size_t>(v)]);
    }
    out += "; requests";
    for (int r : g.requests) out += " " + spec.slots[static_cast<std::size_t>(r)].name;
    out += "\n";
  }
  return out;
}

ChatOutcome run_chat(Session& session, Controller& controller, std::istream& in, std::ostream& out) {
  ChatOutcome outcome;
  const Ontology& onto = session.domain().ontology;
  out << "your goal:\n" << describe_goal(session) << kActGrammar << "\n";
  controller.begin_episode(session);
  while (!session.finished()) {
    const int g = controller.choose_subtask(session);
    StepResult res;
    do {
      const SystemTurn turn = session.system_turn(controller.choose_action(session, g));
      out << "system [" << onto.subtasks[static_cast<std::size_t>(g)].name << "]: " << turn.text << "\n";
      std::vector<DialogueAct> acts;
      bool left = false;
      while (true) {
        out << "user> " << std::flush;
        std::string line;
        if (!std::getline(in, line)) {
          acts = {DialogueAct{Intent::Bye, g, "", "", 1.0}};
          left = true;
          break;
        }
        try {
          acts = parse_user_acts(line, onto, g);
          break;
        } catch (const ActParseError& e) {
          out << "could not parse: " << e.what() << "\n";
        }
      }
      left = left || std::any_of(acts.begin(), acts.end(), [](const DialogueAct& a) { return a.intent == Intent::Bye; });
      outcome.user_ended = outcome.user_ended || left;
      res = session.observe_user(acts, left);
      ++outcome.turns;
    } while (!res.subtask_terminated);
  }
  outcome.success = session.succeeded();
  out << (outcome.success ? "dialogue succeeded" : "dialogue failed") << " after " << outcome.turns << " turns\n";
  return outcome;
}

}  // namespace compdial
