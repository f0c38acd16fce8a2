#include "compdial/belief.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <stdexcept>

namespace compdial {

namespace {

constexpr std::array<std::string_view, kNumIntents> kIntentNames = {
    "inform", "request", "confirm_answer", "select_answer", "bye", "hello", "thankyou", "null"};

int bucket_of(std::size_t matches) {
  if (matches == 0) return 0;
  if (matches == 1) return 1;
  if (matches <= 4) return 2;
  return 3;
}

}  // namespace

std::string_view intent_name(Intent intent) { return kIntentNames[static_cast<std::size_t>(intent)]; }

std::optional<Intent> parse_intent(std::string_view name) {
  for (std::size_t i = 0; i < kIntentNames.size(); ++i) {
    if (kIntentNames[i] == name) return static_cast<Intent>(i);
  }
  return std::nullopt;
}

BeliefLayout::BeliefLayout(const Ontology& ontology, int top_m) : top_m_(top_m) {
  if (top_m < 1) throw std::invalid_argument("BeliefLayout: top_m must be positive");
  int offset = 0;
  for (const auto& sub : ontology.subtasks) {
    informable_.push_back(sub.num_informable());
    subtask_offset_.push_back(offset);
    offset += informable_.back() * slot_block_size() + kIndependentSize;
  }
  size_ = offset;
}

int BeliefLayout::slot_offset(int subtask, int slot) const {
  return subtask_offset(subtask) + slot * slot_block_size();
}

int BeliefLayout::independent_offset(int subtask) const {
  return subtask_offset(subtask) + num_informable(subtask) * slot_block_size();
}

int BeliefLayout::subtask_size(int subtask) const {
  return num_informable(subtask) * slot_block_size() + kIndependentSize;
}

double SlotBelief::top_mass() const {
  double best = dontcare;
  for (double m : mass) best = std::max(best, m);
  return best;
}

int SlotBelief::mentioned() const {
  int n = dontcare > 0.0 ? 1 : 0;
  for (double m : mass) n += m > 0.0 ? 1 : 0;
  return n;
}

std::vector<int> top1_constraints(const SubtaskBelief& belief, const SubtaskSpec& spec) {
  std::vector<int> out(spec.slots.size(), kUnconstrained);
  const std::vector<int> informable = spec.informable_slots();
  for (std::size_t j = 0; j < informable.size(); ++j) {
    const SlotBelief& slot = belief.slots[j];
    int best = -1;
    double best_mass = 0.0;
    for (std::size_t v = 0; v < slot.mass.size(); ++v) {
      if (slot.mass[v] > best_mass) {
        best_mass = slot.mass[v];
        best = static_cast<int>(v);
      }
    }
    if (best >= 0 && best_mass >= slot.dontcare) out[static_cast<std::size_t>(informable[j])] = best;
  }
  return out;
}

BeliefTracker::BeliefTracker(std::shared_ptr<const EntityDatabase> db, int top_m, int max_turns)
    : db_(std::move(db)), max_turns_(max_turns) {
  Ontology ontology;
  for (const auto& sub : db_->subtasks) ontology.subtasks.push_back(sub.spec);
  layout_ = BeliefLayout(ontology, top_m);
}

BeliefState BeliefTracker::initial() const {
  BeliefState belief;
  for (const auto& sub : db_->subtasks) {
    SubtaskBelief sb;
    for (int j : sub.spec.informable_slots()) {
      SlotBelief slot;
      slot.mass.assign(sub.spec.slots[static_cast<std::size_t>(j)].values.size(), 0.0);
      sb.slots.push_back(std::move(slot));
    }
    belief.subtasks.push_back(std::move(sb));
  }
  refresh_matches(belief);
  return belief;
}

BeliefState BeliefTracker::track(const BeliefState& belief,
                                 std::span<const DialogueAct> observed) const {
  BeliefState next = belief;
  std::vector<SlotBelief*> touched;
  for (const DialogueAct& act : observed) {
    if (act.subtask < 0 || act.subtask >= static_cast<int>(next.subtasks.size())) continue;
    const SubtaskSpec& spec = db_->subtasks[static_cast<std::size_t>(act.subtask)].spec;
    SubtaskBelief& sb = next.subtasks[static_cast<std::size_t>(act.subtask)];
    sb.last_user_intent = act.intent;

    const int slot = act.slot.empty() ? -1 : spec.slot_index(act.slot);
    switch (act.intent) {
      case Intent::Inform:
      case Intent::ConfirmAnswer:
      case Intent::SelectAnswer: {
        if (slot < 0 || !spec.slots[static_cast<std::size_t>(slot)].informable) break;
        const std::vector<int> informable = spec.informable_slots();
        const auto ordinal = static_cast<std::size_t>(
            std::find(informable.begin(), informable.end(), slot) - informable.begin());
        SlotBelief& block = sb.slots[ordinal];
        if (act.value == kDontCare) {
          block.dontcare += act.confidence;
        } else {
          const int v = spec.slots[static_cast<std::size_t>(slot)].value_index(act.value);
          if (v < 0) break;
          block.mass[static_cast<std::size_t>(v)] += act.confidence;
        }
        if (std::find(touched.begin(), touched.end(), &block) == touched.end()) touched.push_back(&block);
        break;
      }
      case Intent::Request:
        if (slot >= 0 && spec.slots[static_cast<std::size_t>(slot)].requestable) {
          sb.requested.insert(slot);
          sb.pending.insert(slot);
        }
        break;
      default:
        break;
    }
  }
  // Informs of one turn are accumulated first so their order does not matter.
  for (SlotBelief* block : touched) {
    double total = block->dontcare + block->not_mentioned;
    for (double m : block->mass) total += m;
    for (double& m : block->mass) m /= total;
    block->dontcare /= total;
    block->not_mentioned /= total;
  }
  next.turn = belief.turn + 1;
  refresh_matches(next);
  return next;
}

void BeliefTracker::refresh_matches(BeliefState& belief) const {
  for (std::size_t k = 0; k < belief.subtasks.size(); ++k) {
    const SubtaskDatabase& sub = db_->subtasks[k];
    belief.subtasks[k].match_count =
        count_matches(sub, top1_constraints(belief.subtasks[k], sub.spec));
  }
}

Eigen::VectorXd BeliefTracker::features(const BeliefState& belief) const {
  Eigen::VectorXd out(layout_.size());
  write_features(belief, out);
  return out;
}

void BeliefTracker::write_features(const BeliefState& belief, Eigen::Ref<Eigen::VectorXd> out) const {
  if (out.size() != layout_.size()) throw std::invalid_argument("write_features: size mismatch");
  out.setZero();
  const int m = layout_.top_m();
  std::vector<double> sorted;
  for (int k = 0; k < layout_.num_subtasks(); ++k) {
    const SubtaskBelief& sb = belief.subtasks[static_cast<std::size_t>(k)];
    for (int j = 0; j < layout_.num_informable(k); ++j) {
      const SlotBelief& slot = sb.slots[static_cast<std::size_t>(j)];
      sorted = slot.mass;
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
      const int base = layout_.slot_offset(k, j);
      for (int i = 0; i < m && i < static_cast<int>(sorted.size()); ++i) {
        out[base + i] = sorted[static_cast<std::size_t>(i)];
      }
      out[base + m] = slot.dontcare;
      out[base + m + 1] = slot.not_mentioned;
    }
    const int base = layout_.independent_offset(k);
    out[base + BeliefLayout::kBucketOffset + bucket_of(sb.match_count)] = 1.0;
    out[base + BeliefLayout::kOfferedOffset] = sb.entity_offered ? 1.0 : 0.0;
    out[base + BeliefLayout::kAnsweredOffset] = sb.all_requests_answered() ? 1.0 : 0.0;
    if (sb.last_user_intent) {
      out[base + BeliefLayout::kIntentOffset + static_cast<int>(*sb.last_user_intent)] = 1.0;
    }
    out[base + BeliefLayout::kTurnOffset] =
        std::min(1.0, static_cast<double>(belief.turn) / std::max(1, max_turns_));
  }
}

}  // namespace compdial
