#include "compdial/experiment.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "compdial/errors.hpp"
#include "compdial/mlp_policy.hpp"
#include "compdial/rule_agent.hpp"
#include "json.hpp"

namespace compdial {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Reads known keys of one JSON object and rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.contains(key)) throw ConfigError(path_ + ": unknown key \"" + key + "\"");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError("invalid experiment config: " + message);
}

json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  ObjectReader root(doc, "config");
  root.read("ontology", c.ontology);
  root.read("ontology_file", c.ontology_file);
  root.read("database_seed", c.database_seed);
  root.read("policy", c.policy);
  root.read("milestones", c.milestones);
  root.read("dialogues_per_milestone", c.dialogues_per_milestone);
  root.read("eval_dialogues", c.eval_dialogues);
  root.read("seeds", c.seeds);
  root.read("out", c.out);
  root.read("evaluate", c.evaluate);
  root.read("progress_every", c.progress_every);
  root.read("init_checkpoint", c.init_checkpoint);
  if (const json* env = root.child("env")) {
    ObjectReader r(*env, "config.env");
    r.read("ser", c.env.ser);
    r.read("max_dialogue_turns", c.env.max_dialogue_turns);
    r.read("max_subtask_turns", c.env.max_subtask_turns);
    r.read("top_m", c.env.top_m);
    r.read("gamma", c.env.gamma);
    r.read("turn_penalty", c.env.turn_penalty);
    r.read("intrinsic_success_bonus", c.env.intrinsic_success_bonus);
    r.read("patience", c.env.patience);
    r.finish();
  }
  if (const json* cn = root.child("comnet")) {
    ObjectReader r(*cn, "config.comnet");
    r.read("embed_width", c.comnet.embed_width);
    r.read("layers", c.comnet.layers);
    r.read("head_hidden", c.comnet.head_hidden);
    r.read("top_self_loops", c.comnet.top_self_loops);
    r.finish();
  }
  if (const json* mlp = root.child("mlp")) {
    ObjectReader r(*mlp, "config.mlp");
    r.read("hidden", c.mlp_hidden);
    r.finish();
  }
  if (const json* train = root.child("train")) {
    ObjectReader r(*train, "config.train");
    r.read("gamma", c.train.gamma);
    r.read("lr", c.train.adam.lr);
    r.read("beta1", c.train.adam.beta1);
    r.read("beta2", c.train.adam.beta2);
    r.read("adam_eps", c.train.adam.eps);
    r.read("low_batch", c.train.low_batch);
    r.read("top_batch", c.train.top_batch);
    r.read("low_capacity", c.train.low_capacity);
    r.read("top_capacity", c.train.top_capacity);
    r.read("low_sync_period", c.train.low_sync_period);
    r.read("top_sync_period", c.train.top_sync_period);
    r.read("eps_start", c.train.eps_start);
    r.read("eps_end", c.train.eps_end);
    r.read("eps_dialogues", c.train.eps_dialogues);
    r.read("warmup_dialogues", c.train.warmup_dialogues);
    r.read("mask_completed", c.train.mask_completed);
    r.read("low_update_every", c.train.low_update_every);
    r.finish();
  }
  root.finish();
  validate_experiment_config(c);
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json doc;
  doc["ontology"] = c.ontology;
  doc["ontology_file"] = c.ontology_file;
  doc["database_seed"] = c.database_seed;
  doc["policy"] = c.policy;
  doc["milestones"] = c.milestones;
  doc["dialogues_per_milestone"] = c.dialogues_per_milestone;
  doc["eval_dialogues"] = c.eval_dialogues;
  doc["seeds"] = c.seeds;
  doc["out"] = c.out;
  doc["evaluate"] = c.evaluate;
  doc["progress_every"] = c.progress_every;
  doc["init_checkpoint"] = c.init_checkpoint;
  doc["env"] = {{"ser", c.env.ser},
                {"max_dialogue_turns", c.env.max_dialogue_turns},
                {"max_subtask_turns", c.env.max_subtask_turns},
                {"top_m", c.env.top_m},
                {"gamma", c.env.gamma},
                {"turn_penalty", c.env.turn_penalty},
                {"intrinsic_success_bonus", c.env.intrinsic_success_bonus},
                {"patience", c.env.patience}};
  doc["comnet"] = {{"embed_width", c.comnet.embed_width},
                   {"layers", c.comnet.layers},
                   {"head_hidden", c.comnet.head_hidden},
                   {"top_self_loops", c.comnet.top_self_loops}};
  doc["mlp"] = {{"hidden", c.mlp_hidden}};
  doc["train"] = {{"gamma", c.train.gamma},
                  {"lr", c.train.adam.lr},
                  {"beta1", c.train.adam.beta1},
                  {"beta2", c.train.adam.beta2},
                  {"adam_eps", c.train.adam.eps},
                  {"low_batch", c.train.low_batch},
                  {"top_batch", c.train.top_batch},
                  {"low_capacity", c.train.low_capacity},
                  {"top_capacity", c.train.top_capacity},
                  {"low_sync_period", c.train.low_sync_period},
                  {"top_sync_period", c.train.top_sync_period},
                  {"eps_start", c.train.eps_start},
                  {"eps_end", c.train.eps_end},
                  {"eps_dialogues", c.train.eps_dialogues},
                  {"warmup_dialogues", c.train.warmup_dialogues},
                  {"mask_completed", c.train.mask_completed},
                  {"low_update_every", c.train.low_update_every}};
  return doc.dump(2) + "\n";
}

void validate_experiment_config(const ExperimentConfig& c) {
  require(c.policy == "comnet" || c.policy == "mlp" || c.policy == "rule",
          "policy must be comnet, mlp or rule (got \"" + c.policy + "\")");
  require(!c.ontology.empty() || !c.ontology_file.empty(), "ontology or ontology_file is required");
  require(c.milestones >= 1, "milestones must be at least 1");
  require(c.dialogues_per_milestone >= 1, "dialogues_per_milestone must be at least 1");
  require(!c.evaluate || c.eval_dialogues >= 1, "eval_dialogues must be at least 1 when evaluating");
  require(!c.seeds.empty(), "seeds must not be empty");
  require(c.progress_every >= 1, "progress_every must be at least 1");
  require(c.env.ser >= 0.0 && c.env.ser <= 1.0, "env.ser must be in [0, 1]");
  require(c.env.max_dialogue_turns >= 1 && c.env.max_subtask_turns >= 1, "turn limits must be positive");
  require(c.env.top_m >= 1, "env.top_m must be positive");
  require(c.env.gamma > 0.0 && c.env.gamma <= 1.0, "env.gamma must be in (0, 1]");
  require(c.env.patience >= 1, "env.patience must be positive");
  require(c.comnet.embed_width >= 1 && c.comnet.head_hidden >= 1 && c.comnet.layers >= 0,
          "comnet widths must be positive and layers non-negative");
  require(!c.mlp_hidden.empty(), "mlp.hidden must not be empty");
  for (int w : c.mlp_hidden) require(w >= 1, "mlp.hidden widths must be positive");
  const TrainConfig& t = c.train;
  require(t.gamma > 0.0 && t.gamma <= 1.0, "train.gamma must be in (0, 1]");
  require(t.adam.lr > 0.0, "train.lr must be positive");
  require(t.low_batch >= 1 && t.top_batch >= 1, "batch sizes must be positive");
  require(t.low_capacity >= static_cast<std::size_t>(t.low_batch) &&
              t.top_capacity >= static_cast<std::size_t>(t.top_batch),
          "buffer capacities must hold at least one batch");
  require(t.low_sync_period >= 1 && t.top_sync_period >= 1, "sync periods must be positive");
  require(t.eps_start >= 0.0 && t.eps_start <= 1.0 && t.eps_end >= 0.0 && t.eps_end <= 1.0,
          "epsilon must be in [0, 1]");
  require(t.eps_end <= t.eps_start, "epsilon schedule must be non-increasing");
  require(t.warmup_dialogues >= 0 && t.eps_dialogues >= 0, "dialogue counts must be non-negative");
  require(t.low_update_every >= 1, "train.low_update_every must be positive");
}

Ontology resolve_ontology(const ExperimentConfig& config) {
  if (!config.ontology_file.empty()) return load_ontology_file(config.ontology_file);
  return preset_ontology(config.ontology);
}

std::shared_ptr<const DialogueDomain> make_domain(const ExperimentConfig& config) {
  return DialogueDomain::create(resolve_ontology(config), config.database_seed);
}

std::unique_ptr<HierarchicalAgent> make_agent(const ExperimentConfig& config, const DialogueDomain& domain,
                                              std::uint64_t seed) {
  const TaskShape shape = domain.shape(config.env.top_m);
  Rng init(derive_seed(seed, kInitStream));
  std::unique_ptr<QFunction> top, low;
  if (config.policy == "comnet") {
    top = std::make_unique<ComNetTop>(build_top_graph(domain.ontology, config.env.top_m, config.comnet.top_self_loops),
                                      config.comnet, init);
    low = std::make_unique<ComNetLow>(build_low_graph(domain.ontology, config.env.top_m), config.comnet, init);
  } else if (config.policy == "mlp") {
    top = std::make_unique<MlpQFunction>(shape.observation_dim, shape.num_subtasks, config.mlp_hidden, init);
    low = std::make_unique<MlpQFunction>(shape.low_input_dim(), shape.num_actions(), config.mlp_hidden, init);
  } else {
    throw ConfigError("policy \"" + config.policy + "\" has no trainable networks");
  }
  return std::make_unique<HierarchicalAgent>(std::move(top), std::move(low), shape, config.train,
                                             derive_seed(seed, kAgentStream));
}

int GreedyController::choose_subtask(const Episode& episode) {
  return agent_.greedy_subtask(episode.observation(), agent_.subtask_mask(episode));
}

int GreedyController::choose_action(const Episode& episode, int subtask) {
  return agent_.greedy_action(episode.observation(), subtask);
}

EpisodeStats run_controller(Session& session, Controller& controller) {
  EpisodeStats stats;
  controller.begin_episode(session);
  while (!session.finished()) {
    const int g = controller.choose_subtask(session);
    StepResult res;
    do {
      res = session.step(controller.choose_action(session, g));
      ++stats.turns;
      stats.extrinsic_return += res.extrinsic_reward;
      stats.intrinsic_return += res.intrinsic_reward;
    } while (!res.subtask_terminated);
  }
  stats.success = session.succeeded();
  return stats;
}

EvalSummary evaluate_controller(std::shared_ptr<const DialogueDomain> domain, const EnvConfig& env,
                                Controller& controller, std::uint64_t seed, int count) {
  EvalSummary s;
  s.dialogues = count;
  for (int j = 0; j < count; ++j) {
    Session session(domain, env, derive_seed(seed, kEvalDialogueStream, static_cast<std::uint64_t>(j)));
    const EpisodeStats st = run_controller(session, controller);
    s.success_rate += st.success ? 1.0 : 0.0;
    s.mean_turns += st.turns;
    s.mean_extrinsic_return += st.extrinsic_return;
    s.mean_intrinsic_return += st.intrinsic_return;
  }
  if (count > 0) {
    s.success_rate /= count;
    s.mean_turns /= count;
    s.mean_extrinsic_return /= count;
    s.mean_intrinsic_return /= count;
  }
  return s;
}

std::string milestone_json(const MilestoneRecord& r) {
  json j;
  j["milestone"] = r.milestone;
  j["dialogues"] = r.dialogues;
  j["train_success"] = r.train_success;
  j["success_rate"] = nullable(r.success_rate);
  j["mean_turns"] = nullable(r.mean_turns);
  j["mean_extrinsic_return"] = nullable(r.mean_extrinsic_return);
  j["mean_intrinsic_return"] = nullable(r.mean_intrinsic_return);
  return j.dump();
}

MilestoneRecord parse_milestone_json(std::string_view line) {
  const json j = json::parse(line);
  MilestoneRecord r;
  r.milestone = j.at("milestone").get<int>();
  r.dialogues = j.at("dialogues").get<long>();
  r.train_success = j.at("train_success").get<double>();
  const auto opt = [&](const char* key) -> std::optional<double> {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<double>();
  };
  r.success_rate = opt("success_rate");
  r.mean_turns = opt("mean_turns");
  r.mean_extrinsic_return = opt("mean_extrinsic_return");
  r.mean_intrinsic_return = opt("mean_intrinsic_return");
  return r;
}

std::vector<MilestoneRecord> read_metrics_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read metrics file: " + path);
  std::vector<MilestoneRecord> out;
  std::string line;
  int n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(parse_milestone_json(line));
    } catch (const json::exception& e) {
      throw IoError("malformed metrics line " + std::to_string(n) + " in " + path + ": " + e.what());
    }
  }
  return out;
}

std::string run_directory(const ExperimentConfig& config, std::uint64_t seed) {
  return (fs::path(config.out) / ("seed_" + std::to_string(seed))).string();
}

std::optional<int> milestones_to_reach(const std::vector<MilestoneRecord>& records, double threshold) {
  for (const auto& r : records) {
    if (r.success_rate && *r.success_rate >= threshold) return r.milestone;
  }
  return std::nullopt;
}

RunResult run_training(const ExperimentConfig& config, std::uint64_t seed, const std::string& run_dir,
                       std::ostream* log) {
  validate_experiment_config(config);
  const auto domain = make_domain(config);
  const std::string fingerprint = ontology_fingerprint(domain->ontology);

  std::error_code ec;
  fs::create_directories(run_dir, ec);
  if (ec || !fs::is_directory(run_dir)) throw IoError("cannot create output directory " + run_dir);
  const fs::path dir(run_dir);

  RunResult result;
  result.run_dir = run_dir;
  std::unique_ptr<HierarchicalAgent> agent;
  json provenance = nullptr;
  if (config.policy != "rule") {
    agent = make_agent(config, *domain, seed);
    if (!config.init_checkpoint.empty()) {
      const Checkpoint source = load_checkpoint(config.init_checkpoint);
      check_fingerprint(source, fingerprint, log ? *log : std::cerr);
      result.transfer = transfer_load(source, *agent);
      provenance = {{"source_checkpoint", config.init_checkpoint},
                    {"source_fingerprint", source.fingerprint},
                    {"copied_parameters", result.transfer->copied},
                    {"missing_keys", result.transfer->missing},
                    {"unused_keys", result.transfer->unused},
                    {"note", "online parameters copied; optimizer state, replay buffers and counters reset"}};
    }
  }

  {
    json meta;
    meta["config"] = json::parse(experiment_config_to_json(config));
    meta["seed"] = seed;
    meta["ontology"] = domain->ontology.name();
    meta["ontology_fingerprint"] = fingerprint;
    meta["transfer"] = provenance;
    if (config.policy == "rule") meta["note"] = "rule agent reads the true unfinished-subtask state";
    std::ofstream f = open_output(dir / "meta.json");
    f << meta.dump(2) << "\n";
  }
  std::ofstream metrics = open_output(dir / "metrics.jsonl");
  std::ofstream timing = open_output(dir / "timing.jsonl");
  std::ofstream progress = open_output(dir / "progress.jsonl");

  RuleAgent rule;
  long dialogue = 0;
  for (int m = 1; m <= config.milestones; ++m) {
    const auto start = std::chrono::steady_clock::now();
    MilestoneRecord rec;
    rec.milestone = m;
    int successes = 0;
    for (int i = 0; i < config.dialogues_per_milestone; ++i) {
      Session session(domain, config.env, derive_seed(seed, kTrainDialogueStream, static_cast<std::uint64_t>(dialogue)));
      const EpisodeStats st = agent ? agent->train_episode(session, &rule) : run_controller(session, rule);
      successes += st.success ? 1 : 0;
      ++dialogue;
      if (agent && dialogue % config.progress_every == 0) {
        const auto [low_loss, top_loss] = agent->take_losses();
        json p{{"dialogue_idx", dialogue},
               {"eps", agent->epsilon()},
               {"low_loss", finite_or_null(low_loss)},
               {"top_loss", finite_or_null(top_loss)}};
        progress << p.dump() << "\n" << std::flush;
      }
    }
    rec.dialogues = dialogue;
    rec.train_success = static_cast<double>(successes) / config.dialogues_per_milestone;
    if (config.evaluate) {
      std::unique_ptr<Controller> greedy;
      Controller* controller = &rule;
      if (agent) {
        greedy = std::make_unique<GreedyController>(*agent);
        controller = greedy.get();
      }
      const EvalSummary ev = evaluate_controller(domain, config.env, *controller, seed, config.eval_dialogues);
      rec.success_rate = ev.success_rate;
      rec.mean_turns = ev.mean_turns;
      rec.mean_extrinsic_return = ev.mean_extrinsic_return;
      rec.mean_intrinsic_return = ev.mean_intrinsic_return;
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    metrics << milestone_json(rec) << "\n" << std::flush;
    timing << json{{"milestone", m}, {"wall_seconds", rec.wall_seconds}}.dump() << "\n" << std::flush;
    if (!metrics || !timing) throw IoError("cannot append metrics in " + run_dir);
    if (log) {
      *log << "[" << config.policy << " seed " << seed << "] milestone " << m << "/" << config.milestones
           << " dialogues " << dialogue << " train " << rec.train_success;
      if (rec.success_rate) *log << " eval " << *rec.success_rate;
      *log << "\n";
    }
    result.records.push_back(rec);
  }

  if (agent) {
    result.checkpoint_path = (dir / "checkpoint.bin").string();
    Checkpoint ck = capture_agent(*agent, fingerprint);
    ck.meta["ontology"] = domain->ontology.name();
    ck.meta["layers"] = std::to_string(config.comnet.layers);
    save_checkpoint(ck, result.checkpoint_path);
  }
  return result;
}

}  // namespace compdial
