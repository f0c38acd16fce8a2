#include <gtest/gtest.h>

#include <cmath>

#include "compdial/experiment.hpp"
#include "compdial/hrl.hpp"
#include "compdial/mlp_policy.hpp"
#include "compdial/rule_agent.hpp"
#include "oracles.hpp"

using namespace compdial;

namespace {

std::shared_ptr<const DialogueDomain> toy_domain() { return DialogueDomain::create(preset_ontology("toyCR+toySFR"), 1); }

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

double first_step_loss(QFunction& online, const QFunction& target, const TopTransition& t, double gamma) {
  AdamConfig frozen;
  frozen.lr = 0.0;
  return top_update(online, target, {&t}, gamma, frozen);
}

}  // namespace

TEST(Epsilon, LinearThenFlat) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(epsilon_at(c, 0), 0.3);
  EXPECT_DOUBLE_EQ(epsilon_at(c, 2000), 0.15);
  EXPECT_DOUBLE_EQ(epsilon_at(c, 4000), 0.0);
  EXPECT_DOUBLE_EQ(epsilon_at(c, 100000), 0.0);
  for (long d = 1; d < 4000; ++d) ASSERT_LE(epsilon_at(c, d), epsilon_at(c, d - 1));
}

TEST(SelectSubtask, GreedyRespectsMaskAndTies) {
  Rng rng(1);
  EXPECT_EQ(select_subtask(vec({1, 5, 3}), {true, false, true}, 0.0, rng), 2);
  EXPECT_EQ(select_subtask(vec({2, 2, 1}), {true, true, true}, 0.0, rng), 0);
  EXPECT_EQ(select_subtask(vec({9, 2, 2}), {false, true, true}, 0.0, rng), 1);
}

TEST(SelectSubtask, NothingLegalThrows) {
  Rng rng(1);
  try {
    select_subtask(vec({1, 2}), {false, false}, 0.1, rng);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "no subtask available");
  }
}

TEST(SelectSubtask, GreedyDrawsNoRandomNumbers) {
  Rng rng(3), copy(3);
  select_subtask(vec({0.1, 0.2}), {true, true}, 0.0, rng);
  EXPECT_TRUE(rng == copy);
}

TEST(SelectSubtask, ExplorationIsUniformOverLegal) {
  Rng rng(4);
  std::vector<int> counts(3, 0);
  const int n = 20000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(select_subtask(vec({0, 9, 1}), {true, false, true}, 1.0, rng))];
  EXPECT_EQ(counts[1], 0);
  EXPECT_NEAR(counts[0] / static_cast<double>(n), 0.5, 0.02);

  // eps = 0.3: greedy choice gets 0.7 + 0.3/2.
  int greedy = 0;
  for (int i = 0; i < n; ++i) greedy += select_subtask(vec({0, 9, 1}), {true, false, true}, 0.3, rng) == 2;
  EXPECT_NEAR(greedy / static_cast<double>(n), 0.85, 0.02);
}

TEST(SelectAction, StaysInsideRange) {
  Rng rng(5);
  const Vector q = vec({100, 1, 3, 2, 100});
  EXPECT_EQ(select_action(q, {1, 4}, 0.0, rng), 2);
  for (int i = 0; i < 1000; ++i) {
    const int a = select_action(q, {1, 4}, 1.0, rng);
    ASSERT_GE(a, 1);
    ASSERT_LT(a, 4);
  }
  EXPECT_THROW(select_action(q, {2, 2}, 0.0, rng), std::invalid_argument);
}

TEST(DiscountedSum, Examples) {
  const std::vector<double> r{-0.05, -0.05, 1.95};
  EXPECT_NEAR(discounted_sum(r, 0.9), 1.4845, 1e-12);
  const std::vector<double> p{-0.05, -0.05, -0.05};
  EXPECT_NEAR(discounted_sum(p, 1.0), -0.15, 1e-12);
  EXPECT_EQ(discounted_sum({}, 0.9), 0.0);
}

TEST(CloseSubtask, RecordsDurationAndReturn) {
  const std::vector<double> r{-0.05, 0.95};
  const TopTransition t = close_subtask(r, 0.5, vec({1}), 1, vec({2}), false, {true, false});
  EXPECT_EQ(t.duration, 2);
  EXPECT_NEAR(t.discounted_return, -0.05 + 0.5 * 0.95, 1e-15);
  EXPECT_THROW(close_subtask({}, 0.5, vec({1}), 0, vec({2}), false, {true}), std::invalid_argument);
}

TEST(TopUpdate, TerminalTargetIgnoresBootstrap) {
  oracle::TabularQ online(2, 2), target(2, 2);
  target.params().at({"table", "flat", -1, "W"}).value.setConstant(100.0);
  TopTransition t;
  t.observation = Vector::Unit(2, 0);
  t.next_observation = Vector::Unit(2, 1);
  t.subtask = 1;
  t.discounted_return = 1.5;
  t.duration = 3;
  t.dialogue_done = true;
  t.mask_next = {true, true};
  EXPECT_NEAR(first_step_loss(online, target, t, 0.9), 1.5 * 1.5, 1e-12);
}

TEST(TopUpdate, BootstrapUsesDurationAndMask) {
  oracle::TabularQ online(2, 2), target(2, 2);
  Matrix& table = target.params().at({"table", "flat", -1, "W"}).value;
  table(0, 1) = 100.0;  // masked out below
  table(1, 1) = 3.0;
  TopTransition t;
  t.observation = Vector::Unit(2, 0);
  t.next_observation = Vector::Unit(2, 1);
  t.subtask = 0;
  t.discounted_return = 0.5;
  t.duration = 2;
  t.dialogue_done = false;
  t.mask_next = {false, true};
  const double y = 0.5 + 0.81 * 3.0;
  EXPECT_NEAR(first_step_loss(online, target, t, 0.9), y * y, 1e-12);
}

TEST(LowUpdate, TargetsStayInsideSubtaskRange) {
  oracle::TabularQ online(2, 4), target(2, 4);
  Matrix& table = target.params().at({"table", "flat", -1, "W"}).value;
  table.col(1) << 50, 50, 1, 2;
  const std::vector<ActionRange> ranges{{0, 2}, {2, 4}};
  AdamConfig frozen;
  frozen.lr = 0.0;
  LowTransition t{Vector::Unit(2, 0), 3, -0.05, Vector::Unit(2, 1), false, 1};
  const double y = -0.05 + 0.9 * 2.0;
  EXPECT_NEAR(low_update(online, target, {&t}, ranges, 0.9, frozen), y * y, 1e-12);
  t.subtask_done = true;
  EXPECT_NEAR(low_update(online, target, {&t}, ranges, 0.9, frozen), 0.05 * 0.05, 1e-12);
}

TEST(LowUpdate, RepeatedStepsReduceLossOnFixedSample) {
  Rng rng(6);
  const auto domain = toy_domain();
  const TaskShape shape = domain->shape(3);
  ComNetConfig cfg;
  cfg.embed_width = 8;
  cfg.head_hidden = 8;
  ComNetLow net(build_low_graph(domain->ontology, 3), cfg, rng);
  auto target = net.clone();
  Vector x = Vector::Zero(shape.low_input_dim());
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform();
  LowTransition t{x, 2, 0.95, x, true, 0};
  AdamConfig adam;
  const double first = low_update(net, *target, {&t}, shape.subtask_actions, 0.99, adam);
  double last = first;
  for (int i = 0; i < 50; ++i) last = low_update(net, *target, {&t}, shape.subtask_actions, 0.99, adam);
  EXPECT_LT(last, 0.5 * first);
}

TEST(Replay, FifoEvictionAndSampling) {
  ReplayBuffer<int> buf(3);
  for (int i = 0; i < 5; ++i) buf.push(i);
  EXPECT_EQ(buf.size(), 3u);
  EXPECT_EQ(buf.oldest(), 2);
  EXPECT_EQ(buf.newest(), 4);
  Rng rng(7);
  for (const int* p : buf.sample(3, rng)) {
    ASSERT_GE(*p, 2);
    ASSERT_LE(*p, 4);
  }
  ReplayBuffer<int> small(10);
  small.push(1);
  EXPECT_THROW(small.sample(2, rng), std::logic_error);
  EXPECT_THROW(ReplayBuffer<int>(0), std::invalid_argument);
}

TEST(Sync, TargetMatchesOnlineAfterSync) {
  Rng rng(8);
  MlpQFunction online(6, 3, {8}, rng);
  auto target = online.clone();
  online.params().at({"mlp", "flat", -1, "b1"}).value.setConstant(0.7);
  const Matrix x = Matrix::Ones(6, 2);
  EXPECT_NE(target->forward(x), online.forward(x));
  sync_targets(online, *target);
  EXPECT_EQ(target->forward(x), online.forward(x));
}

TEST(LowInput, AppendsOneHot) {
  const Vector x = low_input(vec({0.5, 0.25}), 1, 3);
  EXPECT_EQ(x, vec({0.5, 0.25, 0, 1, 0}));
}

TEST(Oracle, TwoStateMdpConvergesToValueIteration) {
  const Matrix q = oracle::TwoStateMdp::value_iteration(0.5);
  EXPECT_NEAR(q(1, 1), 2.0, 1e-12);
  EXPECT_NEAR(q(0, 0), 0.75, 1e-12);
  EXPECT_NEAR(q(0, 1), 0.5, 1e-12);
  EXPECT_LT(oracle::two_state_low_update_error(2000, 0.5, 0.05), 0.05);
}

TEST(Oracle, OrderedToyTaskLearnsOptimalOrder) {
  const double optimal = oracle::ordered_toy_optimal_return();
  EXPECT_NEAR(optimal, 1.8, 1e-9);
  const auto agent = oracle::train_ordered_toy(3000, 1);
  EXPECT_NEAR(oracle::ordered_toy_greedy_return(*agent), optimal, 1e-9);
}

TEST(Agent, WarmupTakesNoGradientSteps) {
  const auto domain = toy_domain();
  ExperimentConfig cfg;
  cfg.comnet.embed_width = 8;
  cfg.comnet.head_hidden = 8;
  cfg.train.warmup_dialogues = 5;
  cfg.train.low_batch = 8;
  cfg.train.top_batch = 4;
  auto agent = make_agent(cfg, *domain, 1);
  const Checkpoint before = capture_agent(*agent, "x");
  RuleAgent rule;
  for (int d = 0; d < 5; ++d) {
    ASSERT_TRUE(agent->in_warmup());
    Session s(domain, cfg.env, derive_seed(1, 3, static_cast<std::uint64_t>(d)));
    EXPECT_TRUE(agent->train_episode(s, &rule).success);
  }
  EXPECT_EQ(agent->low_updates(), 0);
  EXPECT_EQ(agent->top_updates(), 0);
  EXPECT_GT(agent->low_buffer().size(), 8u);
  EXPECT_GT(agent->top_buffer().size(), 4u);
  const Checkpoint after = capture_agent(*agent, "x");
  for (const auto& [key, value] : before.tensors) {
    if (key.find('#') == std::string::npos) EXPECT_EQ(after.tensors.at(key), value) << key;
  }
  EXPECT_FALSE(agent->in_warmup());
  Session s(domain, cfg.env, 99);
  agent->train_episode(s, &rule);
  EXPECT_GT(agent->low_updates(), 0);
}

TEST(Agent, GreedyRolloutLeavesTrainingRngAlone) {
  const auto domain = toy_domain();
  ExperimentConfig cfg;
  cfg.comnet.embed_width = 8;
  cfg.comnet.head_hidden = 8;
  auto agent = make_agent(cfg, *domain, 2);
  const Rng before = agent->rng();
  Session s(domain, cfg.env, 5);
  const EpisodeStats st = agent->run_greedy(s);
  EXPECT_TRUE(s.finished());
  EXPECT_GT(st.turns, 0);
  EXPECT_TRUE(agent->rng() == before);
}

TEST(Agent, MaskCanBeDisabled) {
  const auto domain = toy_domain();
  ExperimentConfig cfg;
  cfg.policy = "mlp";
  cfg.mlp_hidden = {8};
  cfg.train.mask_completed = false;
  auto agent = make_agent(cfg, *domain, 3);
  Session s(domain, cfg.env, 1);
  EXPECT_EQ(agent->subtask_mask(s), (std::vector<bool>{true, true}));
}

TEST(Agent, RejectsMismatchedNetworks) {
  Rng rng(9);
  const TaskShape shape = toy_domain()->shape(3);
  EXPECT_THROW(HierarchicalAgent(std::make_unique<MlpQFunction>(shape.observation_dim + 1, 2, std::vector<int>{4}, rng),
                                 std::make_unique<MlpQFunction>(shape.low_input_dim(), shape.num_actions(),
                                                                std::vector<int>{4}, rng),
                                 shape, TrainConfig{}, 1),
               std::invalid_argument);
}
