#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace compdial {

inline constexpr std::string_view kDontCare = "dontcare";

struct SlotSpec {
  std::string name;
  bool informable = false;
  bool requestable = false;
  std::vector<std::string> values;

  int value_index(std::string_view value) const;  // -1 when absent
};

struct SubtaskSpec {
  std::string name;
  std::vector<SlotSpec> slots;
  int entity_count = 0;

  int slot_index(std::string_view slot) const;  // -1 when absent

  /// Positions in `slots` of the informable slots, in declaration order.
  std::vector<int> informable_slots() const;
  std::vector<int> requestable_slots() const;
  int num_informable() const;
};

/// Schema of a composite task: K subtasks, each with its own slot inventory.
struct Ontology {
  std::vector<SubtaskSpec> subtasks;

  int num_subtasks() const { return static_cast<int>(subtasks.size()); }
  int subtask_index(std::string_view name) const;  // -1 when absent
  /// Joined subtask names, e.g. "toyCR+toySFR".
  std::string name() const;
};

struct Violation {
  std::string path;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate_ontology(const Ontology& ontology);

/// An entity holds one value index per slot of its subtask (slot order).
/// Slots with an empty value inventory hold -1.
using Entity = std::vector<int>;

struct SubtaskDatabase {
  SubtaskSpec spec;
  std::vector<Entity> entities;

  /// Value identifier held by `entity` for slot position `slot`.
  std::string value_of(const Entity& entity, int slot) const;

  friend bool operator==(const SubtaskDatabase&, const SubtaskDatabase&) = default;
};

struct EntityDatabase {
  std::vector<SubtaskDatabase> subtasks;

  const SubtaskDatabase& subtask(std::string_view name) const;

  friend bool operator==(const EntityDatabase&, const EntityDatabase&) = default;
};

/// Deterministic synthetic database for one subtask. Every value of every
/// informable slot is held by at least one entity.
SubtaskDatabase generate_database(const SubtaskSpec& spec, std::uint64_t seed);
/// Per-subtask databases, each seeded from (seed, subtask position).
EntityDatabase generate_database(const Ontology& ontology, std::uint64_t seed);

/// slot name -> value identifier or kDontCare.
using ConstraintSet = std::map<std::string, std::string, std::less<>>;

/// Entity positions (database order) matching every non-dontcare constraint.
std::vector<std::size_t> query(const EntityDatabase& db, std::string_view subtask,
                               const ConstraintSet& constraints);

/// Index-level constraint per slot position; see kUnconstrained / kDontCareValue.
inline constexpr int kUnconstrained = -1;
inline constexpr int kDontCareValue = -2;

bool entity_matches(const Entity& entity, const std::vector<int>& slot_constraints);
std::size_t count_matches(const SubtaskDatabase& db, const std::vector<int>& slot_constraints);
/// Position of the first matching entity, or -1.
long first_match(const SubtaskDatabase& db, const std::vector<int>& slot_constraints);

struct CompositeStats {
  int constraints = 0;
  int requests = 0;
  int values = 0;

  friend bool operator==(const CompositeStats&, const CompositeStats&) = default;
};

/// Informable-slot count, requestable-slot count and value-inventory size,
/// summed over subtasks.
CompositeStats composite_stats(const Ontology& ontology);

/// Built-in subtask presets: CR, SFR, LAP (full-scale) and toyCR, toySFR,
/// toyLAP (desk-scale).
SubtaskSpec preset_subtask(std::string_view name);
/// Composite preset from '+'-joined subtask preset names, e.g. "CR+SFR".
Ontology preset_ontology(std::string_view name);
std::vector<std::string> preset_subtask_names();

/// Versioned JSON document, sorted keys, LF line endings, trailing newline.
std::string ontology_to_json(const Ontology& ontology);
Ontology ontology_from_json(std::string_view text);
Ontology load_ontology_file(const std::string& path);
void save_ontology_file(const Ontology& ontology, const std::string& path);

/// Hex FNV-1a digest of the canonical JSON form.
std::string ontology_fingerprint(const Ontology& ontology);

}  // namespace compdial
