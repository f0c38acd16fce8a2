#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "compdial/errors.hpp"
#include "compdial/ontology.hpp"
#include "compdial/rng.hpp"
#include "oracles.hpp"

using namespace compdial;

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next(), b.next());
}

TEST(Rng, StateRoundTrip) {
  Rng a(7);
  for (int i = 0; i < 10; ++i) a.next();
  Rng b;
  b.set_state(a.state());
  EXPECT_TRUE(a == b);
  EXPECT_EQ(a.uniform(), b.uniform());
}

TEST(Rng, UniformAndIndexRanges) {
  Rng r(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.index(7), 7u);
  }
  EXPECT_THROW(r.index(0), std::invalid_argument);
}

TEST(Rng, DerivedStreamsDiffer) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t stream = 1; stream <= 4; ++stream) {
    for (std::uint64_t i = 0; i < 100; ++i) seen.insert(derive_seed(1, stream, i));
  }
  EXPECT_EQ(seen.size(), 400u);
  EXPECT_EQ(derive_seed(5, 3, 9), derive_seed(5, 3, 9));
}

TEST(Rng, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Ontology, FullScaleStatsMatchPublishedTable) {
  EXPECT_EQ(composite_stats(preset_ontology("CR+SFR")), (CompositeStats{9, 20, 904}));
  EXPECT_EQ(composite_stats(preset_ontology("CR+LAP")), (CompositeStats{14, 30, 525}));
  EXPECT_EQ(composite_stats(preset_ontology("SFR+LAP")), (CompositeStats{17, 32, 893}));
}

TEST(Ontology, StatsAreAdditive) {
  const auto names = preset_subtask_names();
  for (const auto& a : names) {
    for (const auto& b : names) {
      if (a == b) continue;
      const auto sa = composite_stats(preset_ontology(a));
      const auto sb = composite_stats(preset_ontology(b));
      const auto sab = composite_stats(preset_ontology(a + "+" + b));
      EXPECT_EQ(sab.constraints, sa.constraints + sb.constraints);
      EXPECT_EQ(sab.requests, sa.requests + sb.requests);
      EXPECT_EQ(sab.values, sa.values + sb.values);
    }
  }
}

TEST(Ontology, PresetsAreValid) {
  for (const auto& name : preset_subtask_names()) EXPECT_TRUE(validate_ontology(preset_ontology(name)).ok()) << name;
  EXPECT_TRUE(validate_ontology(preset_ontology("toyCR+toySFR")).ok());
}

TEST(Ontology, UnknownPresetIsConfigError) { EXPECT_THROW(preset_ontology("toyXYZ"), ConfigError); }

namespace {

bool has_violation(const ValidationReport& r, const std::string& message) {
  return std::any_of(r.violations.begin(), r.violations.end(),
                     [&](const Violation& v) { return v.message.find(message) != std::string::npos; });
}

}  // namespace

TEST(Ontology, NoInformableSlotIsReported) {
  Ontology o = preset_ontology("toyCR");
  for (auto& s : o.subtasks[0].slots) s.informable = false;
  const auto r = validate_ontology(o);
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(has_violation(r, "no informable slot"));
}

TEST(Ontology, DuplicateSlotIsReportedWithPath) {
  Ontology o = preset_ontology("toyCR");
  SlotSpec dup = o.subtasks[0].slots[0];
  o.subtasks[0].slots.push_back(dup);
  const auto r = validate_ontology(o);
  ASSERT_TRUE(has_violation(r, "duplicate slot"));
  for (const auto& v : r.violations) EXPECT_FALSE(v.path.empty());
}

TEST(Ontology, JsonRoundTripIsCanonical) {
  const Ontology o = preset_ontology("toyCR+toySFR");
  const std::string text = ontology_to_json(o);
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_EQ(text.back(), '\n');
  EXPECT_NE(text.find("\"version\": 1"), std::string::npos);
  const Ontology back = ontology_from_json(text);
  EXPECT_EQ(ontology_to_json(back), text);
  EXPECT_EQ(ontology_fingerprint(back), ontology_fingerprint(o));
  EXPECT_NE(ontology_fingerprint(o), ontology_fingerprint(preset_ontology("toyCR+toyLAP")));
}

TEST(Ontology, JsonKeysAreSorted) {
  const std::string text = ontology_to_json(preset_ontology("toyCR"));
  EXPECT_LT(text.find("\"entity_count\""), text.find("\"name\""));
  EXPECT_LT(text.find("\"informable\""), text.find("\"requestable\""));
  EXPECT_LT(text.find("\"subtasks\""), text.find("\"version\""));
}

TEST(Ontology, JsonErrors) {
  EXPECT_THROW(ontology_from_json("{"), ConfigError);
  EXPECT_THROW(ontology_from_json(R"({"version": 2, "subtasks": []})"), ConfigError);
  EXPECT_THROW(load_ontology_file("/nonexistent/dir/o.json"), IoError);
}

TEST(Ontology, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "compdial_ontology_test.json";
  const Ontology o = preset_ontology("toyLAP");
  save_ontology_file(o, path.string());
  EXPECT_EQ(ontology_to_json(load_ontology_file(path.string())), ontology_to_json(o));
  std::filesystem::remove(path);
}

TEST(Database, DeterministicPerSeed) {
  const SubtaskSpec spec = preset_subtask("toyCR");
  EXPECT_EQ(generate_database(spec, 7).entities, generate_database(spec, 7).entities);
  EXPECT_NE(generate_database(spec, 7).entities, generate_database(spec, 8).entities);
}

TEST(Database, EveryInformableValueIsCovered) {
  for (const auto& name : preset_subtask_names()) {
    const SubtaskSpec spec = preset_subtask(name);
    const SubtaskDatabase db = generate_database(spec, 11);
    ASSERT_EQ(static_cast<int>(db.entities.size()), spec.entity_count);
    for (int j : spec.informable_slots()) {
      std::set<int> held;
      for (const auto& e : db.entities) held.insert(e[static_cast<std::size_t>(j)]);
      EXPECT_EQ(held.size(), spec.slots[static_cast<std::size_t>(j)].values.size()) << name << " slot " << j;
    }
  }
}

TEST(Database, CoverageWithSmallEntityCount) {
  SubtaskSpec spec = preset_subtask("toyCR");
  int max_card = 0;
  for (int j : spec.informable_slots()) {
    max_card = std::max(max_card, static_cast<int>(spec.slots[static_cast<std::size_t>(j)].values.size()));
  }
  spec.entity_count = max_card;
  const SubtaskDatabase db = generate_database(spec, 3);
  for (int j : spec.informable_slots()) {
    std::set<int> held;
    for (const auto& e : db.entities) held.insert(e[static_cast<std::size_t>(j)]);
    EXPECT_EQ(held.size(), spec.slots[static_cast<std::size_t>(j)].values.size());
  }
  spec.entity_count = max_card - 1;
  try {
    generate_database(spec, 3);
    FAIL() << "expected unsatisfiable coverage";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("unsatisfiable coverage"), std::string::npos);
  }
}

TEST(Database, QueryMatchesLinearScan) {
  const Ontology o = preset_ontology("toyCR");
  const EntityDatabase db = generate_database(o, 7);
  const SubtaskDatabase& sub = db.subtasks[0];
  const SubtaskSpec& spec = sub.spec;
  const auto informable = spec.informable_slots();
  ASSERT_GE(informable.size(), 2u);
  const std::string s0 = spec.slots[static_cast<std::size_t>(informable[0])].name;
  const std::string s1 = spec.slots[static_cast<std::size_t>(informable[1])].name;

  EXPECT_EQ(query(db, spec.name, {}).size(), sub.entities.size());
  EXPECT_EQ(query(db, spec.name, {{s0, std::string(kDontCare)}}).size(), sub.entities.size());

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto& v0 = spec.slots[static_cast<std::size_t>(informable[0])].values;
    const auto& v1 = spec.slots[static_cast<std::size_t>(informable[1])].values;
    const std::string a = v0[rng.index(v0.size())], b = v1[rng.index(v1.size())];
    std::vector<std::size_t> expected;
    for (std::size_t e = 0; e < sub.entities.size(); ++e) {
      if (sub.value_of(sub.entities[e], informable[0]) == a && sub.value_of(sub.entities[e], informable[1]) == b) {
        expected.push_back(e);
      }
    }
    EXPECT_EQ(query(db, spec.name, {{s0, a}, {s1, b}}), expected);
  }
  EXPECT_THROW(query(db, spec.name, {{"no_such_slot", "x"}}), std::invalid_argument);
}

TEST(Database, IndexLevelMatchingAgreesWithQuery) {
  const Ontology o = preset_ontology("toySFR");
  const EntityDatabase db = generate_database(o, 2);
  const SubtaskDatabase& sub = db.subtasks[0];
  std::vector<int> constraints(sub.spec.slots.size(), kUnconstrained);
  const int j = sub.spec.informable_slots()[0];
  constraints[static_cast<std::size_t>(j)] = 1;
  const auto named = query(db, sub.spec.name, {{sub.spec.slots[static_cast<std::size_t>(j)].name,
                                                 sub.spec.slots[static_cast<std::size_t>(j)].values[1]}});
  EXPECT_EQ(count_matches(sub, constraints), named.size());
  ASSERT_FALSE(named.empty());
  EXPECT_EQ(first_match(sub, constraints), static_cast<long>(named.front()));
  constraints[static_cast<std::size_t>(j)] = kDontCareValue;
  EXPECT_EQ(count_matches(sub, constraints), sub.entities.size());
}

TEST(Ontology, RandomOntologiesValidate) {
  Rng rng(9);
  for (int i = 0; i < 20; ++i) EXPECT_TRUE(validate_ontology(oracle::random_ontology(rng, 3)).ok());
}
