#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "compdial/env.hpp"

namespace compdial {

inline constexpr std::string_view kActGrammar =
    "acts look like intent(slot=value,...), e.g. inform(area=v1), request(phone), bye(); "
    "separate several acts with ';'";

class ActParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses one line of typed user acts for `subtask`. "inform(a=x,b=y)" yields
/// one act per argument; slots must exist in the subtask and inform values
/// must be known values or "dontcare".
std::vector<DialogueAct> parse_user_acts(std::string_view line, const Ontology& ontology, int subtask);

/// Readable form of the hidden goal, one line per subtask.
std::string describe_goal(const Session& session);

struct ChatOutcome {
  bool success = false;
  int turns = 0;
  bool user_ended = false;  // bye() or end of input
};

/// Human-in-the-loop dialogue: the controller picks system acts, the human
/// types the user side. Bad input reprompts without touching the session.
ChatOutcome run_chat(Session& session, Controller& controller, std::istream& in, std::ostream& out);

}  // namespace compdial
