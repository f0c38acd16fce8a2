#pragma once

#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "compdial/ontology.hpp"

namespace compdial {

enum class Intent { Inform, Request, ConfirmAnswer, SelectAnswer, Bye, Hello, Thankyou, Null };
inline constexpr int kNumIntents = 8;

std::string_view intent_name(Intent intent);
std::optional<Intent> parse_intent(std::string_view name);

/// One user act. Slot and value are empty when absent; value may be kDontCare.
struct DialogueAct {
  Intent intent = Intent::Null;
  int subtask = -1;
  std::string slot;
  std::string value;
  double confidence = 1.0;

  friend bool operator==(const DialogueAct&, const DialogueAct&) = default;
};

/// Offsets of every atomic state inside the flat belief vector
/// b = b^1 (+) ... (+) b^K with b^k = b^{k,1} (+) ... (+) b^{k,n_k} (+) b^{k,0}.
class BeliefLayout {
 public:
  /// Slot-independent block: match bucket one-hot (4), entity-offered,
  /// all-requests-answered, last user intent one-hot (8), turn counter.
  static constexpr int kIndependentSize = 4 + 2 + kNumIntents + 1;
  static constexpr int kBucketOffset = 0;
  static constexpr int kOfferedOffset = 4;
  static constexpr int kAnsweredOffset = 5;
  static constexpr int kIntentOffset = 6;
  static constexpr int kTurnOffset = 6 + kNumIntents;

  BeliefLayout() = default;
  BeliefLayout(const Ontology& ontology, int top_m);

  int top_m() const { return top_m_; }
  int slot_block_size() const { return top_m_ + 2; }
  int num_subtasks() const { return static_cast<int>(informable_.size()); }
  int num_informable(int subtask) const { return informable_[static_cast<std::size_t>(subtask)]; }
  int slot_offset(int subtask, int slot) const;
  int independent_offset(int subtask) const;
  int subtask_offset(int subtask) const { return subtask_offset_[static_cast<std::size_t>(subtask)]; }
  int subtask_size(int subtask) const;
  int size() const { return size_; }

 private:
  int top_m_ = 0;
  int size_ = 0;
  std::vector<int> informable_;
  std::vector<int> subtask_offset_;
};

struct SlotBelief {
  std::vector<double> mass;  // per value of the slot
  double dontcare = 0.0;
  double not_mentioned = 1.0;

  double top_mass() const;  // largest of the value masses and dontcare
  int mentioned() const;    // candidates (values or dontcare) with positive mass
};

struct SubtaskBelief {
  std::vector<SlotBelief> slots;  // informable slots in declaration order
  std::size_t match_count = 0;
  bool entity_offered = false;
  std::set<int> requested;  // slot positions the user has asked for
  std::set<int> pending;    // asked for and not yet answered
  std::optional<Intent> last_user_intent;

  bool all_requests_answered() const { return !requested.empty() && pending.empty(); }
};

struct BeliefState {
  std::vector<SubtaskBelief> subtasks;
  int turn = 0;
};

/// Most likely value per slot position of subtask `spec`; kUnconstrained
/// where nothing is mentioned, where dontcare wins, and for non-informable slots.
std::vector<int> top1_constraints(const SubtaskBelief& belief, const SubtaskSpec& spec);

/// Accumulate-and-renormalize state tracker over noisy user acts.
class BeliefTracker {
 public:
  BeliefTracker(std::shared_ptr<const EntityDatabase> db, int top_m, int max_turns);

  BeliefState initial() const;

  /// For each inform-like act the named candidate gains its confidence as
  /// mass and the slot block is renormalized; requests join the pending set.
  /// The turn counter advances once per call.
  BeliefState track(const BeliefState& belief, std::span<const DialogueAct> observed) const;

  /// Recomputes the database match count of every subtask.
  void refresh_matches(BeliefState& belief) const;

  Eigen::VectorXd features(const BeliefState& belief) const;
  void write_features(const BeliefState& belief, Eigen::Ref<Eigen::VectorXd> out) const;

  const BeliefLayout& layout() const { return layout_; }

 private:
  std::shared_ptr<const EntityDatabase> db_;
  BeliefLayout layout_;
  int max_turns_;
};

}  // namespace compdial
