// compdial: train, evaluate and inspect hierarchical dialogue policies.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "compdial/chat.hpp"
#include "compdial/errors.hpp"
#include "compdial/experiment.hpp"
#include "compdial/graph.hpp"
#include "compdial/report.hpp"
#include "compdial/rule_agent.hpp"

namespace fs = std::filesystem;
using namespace compdial;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string policy;
  std::optional<double> ser;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "experiment config (JSON)");
  cmd->add_option("--seed", o.seed, "run a single seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--policy", o.policy, "policy family")->check(CLI::IsMember({"comnet", "mlp", "rule"}));
  cmd->add_option("--ser", o.ser, "semantic error rate")->check(CLI::Range(0.0, 1.0));
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_experiment_config(o.config);
  if (o.seed) c.seeds = {*o.seed};
  if (!o.out.empty()) c.out = o.out;
  if (!o.policy.empty()) c.policy = o.policy;
  if (o.ser) c.env.ser = *o.ser;
  validate_experiment_config(c);
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

int train_all(ExperimentConfig c) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw IoError("cannot create output directory " + c.out);
  write_text(fs::path(c.out) / "config.json", experiment_config_to_json(c));
  for (std::uint64_t seed : c.seeds) {
    const RunResult r = run_training(c, seed, run_directory(c, seed), &std::cout);
    const auto& last = r.records.back();
    std::cout << "seed " << seed << ": final success "
              << (last.success_rate ? std::to_string(*last.success_rate) : std::string("n/a")) << ", metrics in "
              << r.run_dir << "\n";
    if (r.transfer) {
      std::cout << "transfer: copied " << r.transfer->copied << " tensors, missing " << r.transfer->missing.size()
                << ", unused " << r.transfer->unused.size() << "\n";
    }
  }
  return 0;
}

// Agent for eval/chat: trained checkpoint for learned policies, the rule agent otherwise.
struct LoadedController {
  std::unique_ptr<HierarchicalAgent> agent;
  std::unique_ptr<Controller> controller;
};

LoadedController load_controller(const ExperimentConfig& c, const DialogueDomain& domain, std::uint64_t seed,
                                 const std::string& checkpoint) {
  LoadedController out;
  if (c.policy == "rule") {
    out.controller = std::make_unique<RuleAgent>();
    return out;
  }
  if (checkpoint.empty()) throw ConfigError("--checkpoint is required for policy " + c.policy);
  const Checkpoint ck = load_checkpoint(checkpoint);
  check_fingerprint(ck, ontology_fingerprint(domain.ontology), std::cerr);
  out.agent = make_agent(c, domain, seed);
  restore_agent(ck, *out.agent);
  out.controller = std::make_unique<GreedyController>(*out.agent);
  return out;
}

int run_stats(const std::vector<std::string>& presets, const std::string& graphs_dir, const std::string& ontology_out,
              int top_m) {
  for (const std::string& name : presets) {
    const Ontology onto = preset_ontology(name);
    const ValidationReport v = validate_ontology(onto);
    if (!v.ok()) throw ConfigError("preset " + name + " is invalid");
    const CompositeStats s = composite_stats(onto);
    std::cout << name << " constraints=" << s.constraints << " requests=" << s.requests << " values=" << s.values
              << "\n";
    if (!graphs_dir.empty()) {
      std::error_code ec;
      fs::create_directories(graphs_dir, ec);
      if (ec) throw IoError("cannot create " + graphs_dir);
      write_text(fs::path(graphs_dir) / (name + ".top.json"), graph_to_json(build_top_graph(onto, top_m)));
      write_text(fs::path(graphs_dir) / (name + ".low.json"), graph_to_json(build_low_graph(onto, top_m)));
    }
    if (!ontology_out.empty()) {
      std::error_code ec;
      fs::create_directories(ontology_out, ec);
      if (ec) throw IoError("cannot create " + ontology_out);
      save_ontology_file(onto, (fs::path(ontology_out) / (name + ".json")).string());
    }
  }
  std::cout << "values = slot-value inventory size summed over all slots (not database cells)\n";
  return 0;
}

// "label=a.jsonl,b.jsonl" or a bare file list.
std::pair<std::string, std::vector<std::string>> parse_series(const std::string& spec) {
  std::string label = "run";
  std::string files = spec;
  if (auto eq = spec.find('='); eq != std::string::npos) {
    label = spec.substr(0, eq);
    files = spec.substr(eq + 1);
  }
  std::vector<std::string> paths;
  std::size_t start = 0;
  while (start <= files.size()) {
    const std::size_t comma = files.find(',', start);
    const std::string p = files.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!p.empty()) paths.push_back(p);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (paths.empty()) throw ConfigError("report: series \"" + spec + "\" names no metrics files");
  return {label, paths};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Hierarchical dialogue policies for composite tasks"};
  app.require_subcommand(1);

  CommonOptions train_o, eval_o, transfer_o, chat_o;
  std::string eval_ckpt, transfer_ckpt, chat_ckpt, chat_transcript;
  int eval_dialogues = 0;

  auto* train = app.add_subcommand("train", "train over the milestone protocol, one run per seed");
  add_common(train, train_o);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (or the rule agent) greedily");
  add_common(eval, eval_o);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint.bin of a trained run");
  eval->add_option("--dialogues", eval_dialogues, "evaluation dialogues (default: config eval_dialogues)");

  auto* transfer = app.add_subcommand("transfer", "train on the configured task starting from another task's checkpoint");
  add_common(transfer, transfer_o);
  transfer->add_option("--checkpoint", transfer_ckpt, "source checkpoint")->required();

  auto* chat = app.add_subcommand("chat", "play the user against a policy");
  add_common(chat, chat_o);
  chat->add_option("--checkpoint", chat_ckpt, "checkpoint.bin of a trained run");
  chat->add_option("--transcript", chat_transcript, "write the JSON-lines transcript here");

  std::vector<std::string> stats_presets{"CR+SFR", "CR+LAP", "SFR+LAP"};
  std::string stats_graphs, stats_ontologies;
  int stats_top_m = 3;
  auto* stats = app.add_subcommand("stats", "composite-task statistics of ontology presets");
  stats->add_option("presets", stats_presets, "'+'-joined preset names");
  stats->add_option("--graphs", stats_graphs, "also write top/low graph JSON into this directory");
  stats->add_option("--ontologies", stats_ontologies, "also write ontology JSON into this directory");
  stats->add_option("--top-m", stats_top_m, "belief top-M used for the graphs");

  std::vector<std::string> report_series;
  std::string report_out = "report", report_title = "success rate";
  auto* report = app.add_subcommand("report", "aggregate metrics files into CSV and SVG");
  report->add_option("series", report_series, "label=metrics1.jsonl,metrics2.jsonl (or a file list)")->required();
  report->add_option("--out", report_out, "output directory");
  report->add_option("--title", report_title, "plot title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return train_all(resolve(train_o));

    if (*transfer) {
      ExperimentConfig c = resolve(transfer_o);
      c.init_checkpoint = transfer_ckpt;
      return train_all(c);
    }

    if (*eval) {
      const ExperimentConfig c = resolve(eval_o);
      const auto domain = make_domain(c);
      const int n = eval_dialogues > 0 ? eval_dialogues : c.eval_dialogues;
      for (std::uint64_t seed : c.seeds) {
        LoadedController lc = load_controller(c, *domain, seed, eval_ckpt);
        const EvalSummary s = evaluate_controller(domain, c.env, *lc.controller, seed, n);
        std::cout << "seed " << seed << " policy " << c.policy << " ser " << c.env.ser << ": success "
                  << s.success_rate << " turns " << s.mean_turns << " extrinsic " << s.mean_extrinsic_return
                  << " over " << n << " dialogues\n";
      }
      return 0;
    }

    if (*chat) {
      ExperimentConfig c = resolve(chat_o);
      if (!chat_o.ser) c.env.ser = 0.0;
      const auto domain = make_domain(c);
      const std::uint64_t seed = c.seeds.front();
      LoadedController lc = load_controller(c, *domain, seed, chat_ckpt);
      Session session(domain, c.env, derive_seed(seed, kEvalDialogueStream, 1u << 20));
      session.enable_transcript(true);
      run_chat(session, *lc.controller, std::cin, std::cout);
      if (!chat_transcript.empty()) {
        std::string text;
        for (const auto& e : session.transcript()) text += transcript_line(e) + "\n";
        write_text(chat_transcript, text);
      }
      return 0;
    }

    if (*stats) return run_stats(stats_presets, stats_graphs, stats_ontologies, stats_top_m);

    if (*report) {
      std::error_code ec;
      fs::create_directories(report_out, ec);
      if (ec) throw IoError("cannot create " + report_out);
      std::vector<ReportSeries> all;
      for (const std::string& spec : report_series) {
        auto [label, files] = parse_series(spec);
        std::vector<std::vector<MilestoneRecord>> runs;
        for (const auto& f : files) runs.push_back(read_metrics_file(f));
        all.push_back(aggregate_runs(label, runs));
        write_text(fs::path(report_out) / (label + ".csv"), report_csv(all.back()));
      }
      write_text(fs::path(report_out) / "learning_curve.svg", report_svg(all, report_title));
      for (const auto& s : all) {
        const auto& last = s.rows.back();
        std::cout << s.label << ": final " << last.mean_success << " +- " << last.std_success << " at "
                  << last.dialogues << " dialogues\n";
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
