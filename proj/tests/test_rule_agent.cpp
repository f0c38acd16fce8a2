#include <gtest/gtest.h>

#include "compdial/experiment.hpp"
#include "compdial/rule_agent.hpp"
#include "oracles.hpp"

using namespace compdial;

namespace {

std::shared_ptr<const DialogueDomain> domain_for(const std::string& preset) {
  return DialogueDomain::create(preset_ontology(preset), 1);
}

}  // namespace

TEST(RuleAgent, StartsWithFirstSubtaskAndFirstSlot) {
  const auto domain = domain_for("toyCR+toySFR");
  Session s(domain, EnvConfig{}, 3);
  EXPECT_EQ(rule_top(s), 0);
  RuleState state;
  EXPECT_EQ(rule_low(s, 0, state), (PrimitiveAction{0, SystemActionKind::Request, 0}));
  EXPECT_EQ(state.times_requested[0][0], 1);
  EXPECT_EQ(rule_low(s, 0, state), (PrimitiveAction{0, SystemActionKind::Request, 0}));
  // Asked twice: move to the next unresolved slot.
  EXPECT_EQ(rule_low(s, 0, state), (PrimitiveAction{0, SystemActionKind::Request, 1}));
}

TEST(RuleAgent, OffersEntityOnceSlotsAreExhausted) {
  const auto domain = domain_for("toyCR");
  Session s(domain, EnvConfig{}, 4);
  RuleState state;
  const int n = static_cast<int>(s.belief().subtasks[0].slots.size());
  for (int j = 0; j < n; ++j) {
    rule_low(s, 0, state);
    rule_low(s, 0, state);
  }
  EXPECT_EQ(rule_low(s, 0, state).kind, SystemActionKind::InformEntity);
}

TEST(RuleAgent, MovesToNextSubtaskAfterSuccess) {
  const auto domain = domain_for("toyCR+toySFR");
  Session s(domain, EnvConfig{}, 5);
  RuleAgent rule;
  rule.begin_episode(s);
  while (!s.subtask_succeeded(0)) {
    ASSERT_FALSE(s.finished());
    s.step(rule.choose_action(s, 0));
  }
  EXPECT_EQ(rule.choose_subtask(s), 1);
  EXPECT_EQ(s.legal_subtasks(), (std::vector<bool>{false, true}));
}

TEST(RuleAgent, SolvesNoiseFreeDialogues) {
  for (const std::string preset : {"toyCR+toySFR", "toyCR+toyLAP", "toySFR+toyLAP"}) {
    RuleAgent rule;
    const EvalSummary e = evaluate_controller(domain_for(preset), EnvConfig{}, rule, 1, 100);
    EXPECT_EQ(e.success_rate, 1.0) << preset;
    EXPECT_GT(e.mean_turns, 0.0);
  }
}

TEST(RuleAgent, NoiseHurtsSuccessOrLength) {
  RuleAgent rule;
  const auto domain = domain_for("toyCR+toySFR");
  const EvalSummary clean = evaluate_controller(domain, EnvConfig{}, rule, 1, 200);
  EnvConfig noisy;
  noisy.ser = 0.3;
  const EvalSummary n = evaluate_controller(domain, noisy, rule, 1, 200);
  EXPECT_LE(n.success_rate, clean.success_rate);
  EXPECT_GT(n.mean_turns, clean.mean_turns);
}

TEST(RuleAgent, RejectsNonDialogueEpisodes) {
  oracle::OrderedToyTask toy;
  RuleAgent rule;
  EXPECT_THROW(rule.choose_subtask(toy), std::invalid_argument);
}

TEST(RuleAgent, EveryChosenActionIsInsideTheSubtaskRange) {
  const auto domain = domain_for("toySFR+toyLAP");
  EnvConfig env;
  env.ser = 0.3;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Session s(domain, env, seed);
    RuleAgent rule;
    rule.begin_episode(s);
    while (!s.finished()) {
      const int k = rule.choose_subtask(s);
      ASSERT_TRUE(s.legal_subtasks()[static_cast<std::size_t>(k)]);
      StepResult r;
      do {
        const int a = rule.choose_action(s, k);
        ASSERT_TRUE(domain->actions.range(k).contains(a));
        r = s.step(a);
      } while (!r.subtask_terminated);
    }
  }
}
