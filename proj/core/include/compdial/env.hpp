#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "compdial/belief.hpp"
#include "compdial/episode.hpp"
#include "compdial/ontology.hpp"
#include "compdial/rng.hpp"

namespace compdial {

enum class SystemActionKind {
  Request,
  Confirm,
  Select,
  InformEntity,
  InformRequested,
  Repeat,
  ReqMore,
  Bye,
};

/// Per informable slot: request, confirm, select.
inline constexpr int kSlotActions = 3;
/// Per subtask: inform-entity, inform-requested, repeat, reqmore, bye.
inline constexpr int kIndependentActions = 5;

std::string_view system_action_name(SystemActionKind kind);

struct PrimitiveAction {
  int subtask = 0;
  SystemActionKind kind = SystemActionKind::ReqMore;
  int slot = -1;  // informable ordinal for slot actions, -1 otherwise

  friend bool operator==(const PrimitiveAction&, const PrimitiveAction&) = default;
};

/// Flat primitive action indexing. Subtask k owns a contiguous range laid out
/// as [slot 1 actions, ..., slot n_k actions, independent actions], the same
/// order as the S-nodes and I-node of subtask k in the policy graphs.
class ActionSpace {
 public:
  ActionSpace() = default;
  explicit ActionSpace(const Ontology& ontology);

  int size() const { return ranges_.empty() ? 0 : ranges_.back().end; }
  const std::vector<ActionRange>& ranges() const { return ranges_; }
  ActionRange range(int subtask) const { return ranges_.at(static_cast<std::size_t>(subtask)); }

  PrimitiveAction decode(int action) const;
  int encode(const PrimitiveAction& action) const;

 private:
  std::vector<ActionRange> ranges_;
};

struct EnvConfig {
  double ser = 0.0;
  int max_dialogue_turns = 30;
  int max_subtask_turns = 15;
  int top_m = 3;
  double gamma = 0.99;
  double turn_penalty = -0.05;
  double intrinsic_success_bonus = 1.0;
  /// Consecutive repetitions of one system act before the user hangs up.
  int patience = 4;
  std::uint64_t seed = 0;
};

/// Immutable ontology + database + derived layouts, shared by all sessions.
struct DialogueDomain {
  Ontology ontology;
  std::shared_ptr<const EntityDatabase> db;
  ActionSpace actions;

  static std::shared_ptr<const DialogueDomain> create(Ontology ontology, std::uint64_t db_seed);
  TaskShape shape(int top_m) const;
};

/// Hidden user goal. Constraints are indexed by slot position and hold a value
/// index, kDontCareValue or kUnconstrained; requests are slot positions.
struct SubtaskGoal {
  std::vector<int> constraints;
  std::vector<int> requests;
};

struct UserGoal {
  std::vector<SubtaskGoal> subtasks;
  bool used_fallback = false;
};

/// Each informable slot is constrained w.p. 0.7, dontcare w.p. 0.15 and left
/// open otherwise; 1-3 requests per subtask. Resamples until every subtask has
/// a matching entity; after 100 attempts copies a random entity's values.
UserGoal sample_goal(const DialogueDomain& domain, Rng& rng);

/// Semantic-error channel. With probability `ser` the act either gets a
/// different value of the same slot or is deleted (intent null); the branch is
/// picked uniformly and deletion is used when there is no value to replace.
DialogueAct corrupt(const DialogueAct& act, double ser, const Ontology& ontology, Rng& rng);

struct TranscriptEntry {
  int turn = 0;
  std::string speaker;
  std::string intent;
  int subtask = -1;
  std::string slot;
  std::string value;
  double confidence = 1.0;
  double r_i = 0.0;
  double r_e = 0.0;
};

/// JSON-lines form: {turn, speaker, intent, subtask, slot, value, confidence, r_i, r_e}.
std::string transcript_line(const TranscriptEntry& entry);

/// What the system did on one turn and how a truthful simulated user answers.
struct SystemTurn {
  PrimitiveAction action;
  std::string text;  // e.g. "request(area)" or "inform(name=v3,food=v1)"
  std::vector<DialogueAct> user_reply;
};

/// One composite-task dialogue against the agenda-based user simulator.
class Session : public Episode {
 public:
  Session(std::shared_ptr<const DialogueDomain> domain, EnvConfig config, std::uint64_t seed);
  /// Uses an explicit goal instead of sampling one.
  Session(std::shared_ptr<const DialogueDomain> domain, EnvConfig config, std::uint64_t seed,
          UserGoal goal);

  const Eigen::VectorXd& observation() const override { return features_; }
  std::vector<bool> legal_subtasks() const override;
  StepResult step(int action) override;
  bool finished() const override { return finished_; }

  /// First half of step(): executes the system act, updates simulator state,
  /// and returns the truthful user reply. Throws once the dialogue is over.
  SystemTurn system_turn(int action);
  /// Second half of step(): feeds observed user acts to the tracker and
  /// scores the turn. `user_left` ends the dialogue.
  StepResult observe_user(const std::vector<DialogueAct>& observed, bool user_left);

  const DialogueDomain& domain() const { return *domain_; }
  const EnvConfig& config() const { return config_; }
  const UserGoal& goal() const { return goal_; }
  const BeliefState& belief() const { return belief_; }
  const BeliefTracker& tracker() const { return tracker_; }
  int turn() const { return turn_; }
  int subtask_turns(int subtask) const { return subtask_turns_[static_cast<std::size_t>(subtask)]; }
  bool subtask_succeeded(int subtask) const { return done_[static_cast<std::size_t>(subtask)]; }
  bool succeeded() const { return success_; }
  /// Subtask of the most recent system act, or -1 before the first turn.
  int active_subtask() const { return active_; }

  void enable_transcript(bool on) { record_transcript_ = on; }
  const std::vector<TranscriptEntry>& transcript() const { return transcript_; }

 private:
  void init();
  std::vector<DialogueAct> user_agenda_reply(int subtask) const;
  std::vector<DialogueAct> correction(int subtask, const std::vector<int>& shown) const;
  std::vector<int> remaining_requests(int subtask) const;
  int goal_value(int subtask, int slot) const;  // value index or kDontCareValue
  DialogueAct make_act(Intent intent, int subtask, int slot, int value) const;
  void refresh_flags();

  std::shared_ptr<const DialogueDomain> domain_;
  EnvConfig config_;
  BeliefTracker tracker_;
  Rng rng_;
  UserGoal goal_;
  BeliefState belief_;
  Eigen::VectorXd features_;

  int turn_ = 0;
  std::vector<int> subtask_turns_;
  std::vector<bool> done_;
  bool finished_ = false;
  bool success_ = false;

  // Simulated-user view.
  std::vector<long> offered_entity_;
  std::vector<bool> offer_consistent_;
  std::vector<std::set<int>> answered_;
  std::vector<DialogueAct> last_reply_;

  // System view: constraints used for the current offer, per subtask.
  std::vector<std::optional<std::vector<int>>> offer_constraints_;

  int last_action_ = -1;
  int repeats_ = 0;
  int active_ = -1;
  bool system_bye_ = false;
  bool in_turn_ = false;

  bool record_transcript_ = false;
  std::vector<TranscriptEntry> transcript_;
};

}  // namespace compdial
