#include <benchmark/benchmark.h>

#include "compdial/comnet.hpp"
#include "compdial/experiment.hpp"
#include "compdial/hrl.hpp"
#include "compdial/mlp_policy.hpp"
#include "compdial/rule_agent.hpp"

using namespace compdial;

namespace {

std::shared_ptr<const DialogueDomain> domain() {
  static const auto d = DialogueDomain::create(preset_ontology("toyCR+toySFR"), 1);
  return d;
}

Matrix random_batch(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
  return m;
}

std::vector<LowTransition> low_batch(const TaskShape& shape, int n, Rng& rng) {
  std::vector<LowTransition> out;
  for (int i = 0; i < n; ++i) {
    const int k = static_cast<int>(rng.index(static_cast<std::size_t>(shape.num_subtasks)));
    const ActionRange r = shape.subtask_actions[static_cast<std::size_t>(k)];
    out.push_back({random_batch(shape.low_input_dim(), 1, rng).col(0), r.begin, -0.05,
                   random_batch(shape.low_input_dim(), 1, rng).col(0), false, k});
  }
  return out;
}

void BM_ComNetLowForward(benchmark::State& state) {
  Rng rng(1);
  ComNetLow net(build_low_graph(domain()->ontology, 3), ComNetConfig{}, rng);
  const Matrix x = random_batch(net.input_dim(), static_cast<int>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_ComNetLowForward)->Arg(1)->Arg(64);

void BM_ComNetTopForward(benchmark::State& state) {
  Rng rng(1);
  ComNetTop net(build_top_graph(domain()->ontology, 3), ComNetConfig{}, rng);
  const Matrix x = random_batch(net.input_dim(), static_cast<int>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_ComNetTopForward)->Arg(1)->Arg(16);

void BM_ComNetLowUpdate(benchmark::State& state) {
  Rng rng(2);
  const TaskShape shape = domain()->shape(3);
  ComNetLow net(build_low_graph(domain()->ontology, 3), ComNetConfig{}, rng);
  auto target = net.clone();
  const auto batch = low_batch(shape, 64, rng);
  std::vector<const LowTransition*> ptrs;
  for (const auto& t : batch) ptrs.push_back(&t);
  for (auto _ : state) benchmark::DoNotOptimize(low_update(net, *target, ptrs, shape.subtask_actions, 0.99, {}));
}
BENCHMARK(BM_ComNetLowUpdate);

void BM_MlpLowUpdate(benchmark::State& state) {
  Rng rng(2);
  const TaskShape shape = domain()->shape(3);
  MlpQFunction net(shape.low_input_dim(), shape.num_actions(), {128, 64}, rng);
  auto target = net.clone();
  const auto batch = low_batch(shape, 64, rng);
  std::vector<const LowTransition*> ptrs;
  for (const auto& t : batch) ptrs.push_back(&t);
  for (auto _ : state) benchmark::DoNotOptimize(low_update(net, *target, ptrs, shape.subtask_actions, 0.99, {}));
}
BENCHMARK(BM_MlpLowUpdate);

void BM_SessionRuleDialogue(benchmark::State& state) {
  EnvConfig env;
  env.ser = 0.3;
  RuleAgent rule;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    Session s(domain(), env, ++seed);
    benchmark::DoNotOptimize(run_controller(s, rule));
  }
}
BENCHMARK(BM_SessionRuleDialogue);

void BM_ComNetTrainDialogue(benchmark::State& state) {
  ExperimentConfig cfg;
  cfg.train.warmup_dialogues = 0;
  cfg.env.ser = 0.3;
  auto agent = make_agent(cfg, *domain(), 1);
  RuleAgent rule;
  std::uint64_t seed = 0;
  for (int d = 0; d < 20; ++d) {
    Session s(domain(), cfg.env, ++seed);
    agent->train_episode(s, &rule);
  }
  for (auto _ : state) {
    Session s(domain(), cfg.env, ++seed);
    benchmark::DoNotOptimize(agent->train_episode(s, &rule));
  }
}
BENCHMARK(BM_ComNetTrainDialogue)->Unit(benchmark::kMillisecond);

}  // namespace
int main(int argc, char** argv) {
  tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
