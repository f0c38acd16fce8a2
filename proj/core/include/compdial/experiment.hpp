#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "compdial/checkpoint.hpp"
#include "compdial/comnet.hpp"
#include "compdial/env.hpp"
#include "compdial/hrl.hpp"

namespace compdial {

/// Seed streams derived from a run seed.
enum SeedStream : std::uint64_t {
  kInitStream = 1,
  kAgentStream = 2,
  kTrainDialogueStream = 3,
  kEvalDialogueStream = 4,
};

struct ExperimentConfig {
  std::string ontology = "toyCR+toySFR";  // preset name; ignored when ontology_file is set
  std::string ontology_file;
  std::uint64_t database_seed = 1;
  EnvConfig env;
  std::string policy = "comnet";  // comnet | mlp | rule
  ComNetConfig comnet;
  std::vector<int> mlp_hidden{128, 64};
  TrainConfig train;
  int milestones = 30;
  int dialogues_per_milestone = 200;
  int eval_dialogues = 100;
  std::vector<std::uint64_t> seeds{1};
  std::string out = "runs";
  bool evaluate = true;
  int progress_every = 50;
  /// Transfer source; empty for random initialization.
  std::string init_checkpoint;

  long total_dialogues() const { return static_cast<long>(milestones) * dialogues_per_milestone; }
};

/// Throws ConfigError on unknown keys, bad types or invariant violations.
ExperimentConfig parse_experiment_config(std::string_view json_text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_to_json(const ExperimentConfig& config);
void validate_experiment_config(const ExperimentConfig& config);

Ontology resolve_ontology(const ExperimentConfig& config);
std::shared_ptr<const DialogueDomain> make_domain(const ExperimentConfig& config);

/// Fresh agent for the configured policy family ("comnet" or "mlp").
std::unique_ptr<HierarchicalAgent> make_agent(const ExperimentConfig& config, const DialogueDomain& domain,
                                              std::uint64_t seed);

/// Drives sessions greedily with a trained agent.
class GreedyController : public Controller {
 public:
  explicit GreedyController(const HierarchicalAgent& agent) : agent_(agent) {}
  int choose_subtask(const Episode& episode) override;
  int choose_action(const Episode& episode, int subtask) override;

 private:
  const HierarchicalAgent& agent_;
};

struct EvalSummary {
  int dialogues = 0;
  double success_rate = 0.0;
  double mean_turns = 0.0;
  double mean_extrinsic_return = 0.0;
  double mean_intrinsic_return = 0.0;
};

/// Runs `count` dialogues seeded from the evaluation stream of `seed`.
EvalSummary evaluate_controller(std::shared_ptr<const DialogueDomain> domain, const EnvConfig& env,
                                Controller& controller, std::uint64_t seed, int count);

/// Runs one dialogue to completion under `controller`.
EpisodeStats run_controller(Session& session, Controller& controller);

struct MilestoneRecord {
  int milestone = 0;
  long dialogues = 0;
  double train_success = 0.0;
  std::optional<double> success_rate;  // absent when evaluation is disabled
  std::optional<double> mean_turns;
  std::optional<double> mean_extrinsic_return;
  std::optional<double> mean_intrinsic_return;
  double wall_seconds = 0.0;  // kept out of the metrics line
};

/// Deterministic metrics line (no wall-clock field).
std::string milestone_json(const MilestoneRecord& record);
MilestoneRecord parse_milestone_json(std::string_view line);
std::vector<MilestoneRecord> read_metrics_file(const std::string& path);

struct RunResult {
  std::vector<MilestoneRecord> records;
  std::string run_dir;
  std::string checkpoint_path;  // empty for the rule policy
  std::optional<TransferReport> transfer;
};

/// Milestone protocol: train `dialogues_per_milestone` dialogues (the first
/// ones driven by the rule agent as warm-up), then evaluate a frozen greedy
/// policy on the evaluation stream. Writes metrics.jsonl, timing.jsonl,
/// progress.jsonl, meta.json and checkpoint.bin into `run_dir`.
RunResult run_training(const ExperimentConfig& config, std::uint64_t seed, const std::string& run_dir,
                       std::ostream* log = nullptr);

/// Directory of one seed's run below config.out.
std::string run_directory(const ExperimentConfig& config, std::uint64_t seed);

/// First milestone whose success rate reaches `threshold`, or nullopt.
std::optional<int> milestones_to_reach(const std::vector<MilestoneRecord>& records, double threshold);

}  // namespace compdial
