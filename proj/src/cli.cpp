#include "gvc/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <sys/wait.h>

#include "CLI11.hpp"
#include "gvc/errors.hpp"
#include "gvc/evalreport.hpp"
#include "gvc/pipeline.hpp"
#include "gvc/tasks.hpp"

namespace gvc::cli {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitTransport = 2;

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'') out += "'\\''";
    else out += ch;
  }
  return out + "'";
}

void print_summary(const RoundSummary& s) {
  std::cout << "round " << s.round << ": " << s.n_records << " records, " << s.n_parsed
            << " labeled, " << s.n_consistent << " consistent, " << s.n_transport_errors
            << " transport errors; average consistency " << format_percent(s.average_consistency)
            << "\n  output: " << s.dir.string() << '\n';
  for (const auto& e : s.error_samples) std::cout << "  error " << e << '\n';
  if (s.n_transport_errors > s.error_samples.size())
    std::cout << "  ... and " << s.n_transport_errors - s.error_samples.size() << " more\n";
}

struct GenOptions {
  std::string config;
  int round = 0;
  std::string backend_override;
  std::size_t workers = 0;
  std::string output_dir;
};

RunConfig load_with_overrides(const GenOptions& o) {
  auto cfg = load_run_config(o.config);
  if (o.round > 0) cfg.round = o.round;
  if (!o.backend_override.empty()) cfg.backend = parse_backend_spec(o.backend_override, &cfg.backend);
  if (o.workers > 0) cfg.workers = o.workers;
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  cfg.validate();
  return cfg;
}

int cmd_gen(const GenOptions& o) {
  const auto cfg = load_with_overrides(o);
  std::shared_ptr<ResponseCache> cache;
  if (cfg.cache_path) cache = ResponseCache::open(*cfg.cache_path);
  LMClient client(cfg.backend, cache);
  std::unique_ptr<LMClient> judge;
  if (cfg.judge_backend) judge = std::make_unique<LMClient>(*cfg.judge_backend, cache);
  const auto summary = run_round(cfg, client, judge.get());
  print_summary(summary);
  return summary.n_transport_errors > 0 ? kExitTransport : kExitOk;
}

struct EvalOptions {
  std::string records;
  std::string judge;
  std::string out;
  std::string label;
  std::string format = "md";
};

int cmd_eval(const EvalOptions& o) {
  const auto records = read_records_jsonl(o.records);
  if (records.empty()) throw ConfigError("records file " + o.records + " is empty");
  std::unique_ptr<LMClient> judge;
  if (!o.judge.empty()) judge = std::make_unique<LMClient>(parse_backend_spec(o.judge));

  ScoreOptions options;
  options.judge = judge.get();
  const auto report = score_run(records, options);
  const auto label = o.label.empty() ? records.front().backend_id : o.label;

  if (o.out.empty()) {
    std::cout << render_report(report, report_format_from_string(o.format), label);
    return kExitOk;
  }
  std::filesystem::create_directories(o.out);
  for (auto format : {ReportFormat::md, ReportFormat::csv, ReportFormat::json}) {
    const auto path = std::filesystem::path(o.out) / ("report." + std::string(extension(format)));
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + path.string());
    f << render_report(report, format, label);
  }
  std::cout << benchmark_row(report, label) << '\n';
  return kExitOk;
}

// Runs `trainer <dataset>` and reads the next backend from the last
// non-empty line of its stdout.
std::optional<BackendSpec> run_trainer(const std::string& trainer, const RoundSummary& last,
                                       const BackendSpec& current) {
  const auto dataset = last.dir / "finetune_consistency.jsonl";
  ::setenv("GVC_NEXT_ROUND", std::to_string(last.round + 1).c_str(), 1);
  ::setenv("GVC_DATASET", dataset.c_str(), 1);
  const auto command = trainer + " " + shell_quote(dataset.string());
  std::cerr << "running trainer: " << command << '\n';

  FILE* pipe = ::popen(command.c_str(), "r");
  if (!pipe) throw Error("cannot start trainer command");
  std::string output;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) output += buf;
  const int status = ::pclose(pipe);
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw Error("trainer command failed with status " + std::to_string(status));

  std::string line;
  std::string last_line;
  std::istringstream lines(output);
  while (std::getline(lines, line))
    if (!trim(line).empty()) last_line = std::string(trim(line));
  if (last_line.empty()) throw Error("trainer printed no backend for the next round");
  return parse_backend_spec(last_line, &current);
}

struct IterateOptions {
  GenOptions gen;
  int rounds = 1;
  std::string trainer;
};

int cmd_iterate(const IterateOptions& o) {
  const auto cfg = load_with_overrides(o.gen);
  NextBackend next;
  if (!o.trainer.empty()) {
    // The trainer inherits spec fields (retry, limits, wire) from the round just run.
    auto current = std::make_shared<BackendSpec>(cfg.backend);
    next = [&o, current](const RoundSummary& last) {
      auto spec = run_trainer(o.trainer, last, *current);
      if (spec) *current = *spec;
      return spec;
    };
  }
  std::string notice;
  const auto summaries = run_iteration(cfg, o.rounds, next, &notice);
  bool transport = false;
  for (const auto& s : summaries) {
    print_summary(s);
    transport = transport || s.n_transport_errors > 0;
  }
  if (!notice.empty()) std::cout << notice << '\n';
  return transport ? kExitTransport : kExitOk;
}

struct SplitOptions {
  std::string task;
  std::string corpus;
  std::string eval_corpus;
  std::string out;
};

int cmd_split(const SplitOptions& o) {
  const auto task = task_from_string(o.task);
  SplitConfig sc;
  sc.corpus = o.corpus;
  if (!o.eval_corpus.empty()) sc.eval_corpus = o.eval_corpus;
  const auto split = extrapolation_split(task, sc);
  std::filesystem::create_directories(o.out);
  const auto write = [&](const char* name, const std::vector<TaskInstance>& items) {
    std::ofstream f(std::filesystem::path(o.out) / name, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(std::string("cannot write ") + name);
    for (const auto& inst : items) {
      nlohmann::ordered_json j;
      j["id"] = inst.instance_id;
      const auto payload = payload_to_json(inst.payload);
      for (const auto& [k, v] : payload.items()) j[k] = v;
      f << j.dump() << '\n';
    }
  };
  write("train.jsonl", split.train);
  write("eval.jsonl", split.eval);
  std::cout << "train " << split.train.size() << ", eval " << split.eval.size() << '\n';
  return kExitOk;
}

void add_gen_options(CLI::App& app, GenOptions& o) {
  app.add_option("--config", o.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--round", o.round, "Round number (overrides the config)");
  app.add_option("--backend-override", o.backend_override, "Backend URL or mock:<behavior>");
  app.add_option("--workers", o.workers, "Concurrent exchanges");
  app.add_option("--output-dir", o.output_dir, "Output directory (overrides the config)");
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Generator-validator consistency harness"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Run one round of generation, labeling and emission");
  add_gen_options(*gen_cmd, gen);

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a records file");
  eval_cmd->add_option("--records", eval.records, "records.jsonl")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--judge", eval.judge, "Judge backend URL or mock:<behavior>");
  eval_cmd->add_option("--out", eval.out, "Write report.{md,csv,json} here");
  eval_cmd->add_option("--label", eval.label, "Row label (default: backend id)");
  eval_cmd->add_option("--format", eval.format, "stdout format when --out is absent")
      ->check(CLI::IsMember({"md", "csv", "json"}));

  IterateOptions iter;
  auto* iter_cmd = app.add_subcommand("iterate", "Run several rounds with an external trainer");
  add_gen_options(*iter_cmd, iter.gen);
  iter_cmd->add_option("--rounds", iter.rounds, "Number of rounds")->check(CLI::PositiveNumber);
  iter_cmd->add_option("--trainer-cmd", iter.trainer,
                       "Command run with the emitted dataset path; its last stdout line names the "
                       "next backend");

  SplitOptions split;
  auto* split_cmd = app.add_subcommand("split", "Write held-out train/eval corpora");
  split_cmd->add_option("--task", split.task, "style_transfer, harmful_q or qa")->required();
  split_cmd->add_option("--corpus", split.corpus, "Corpus (JSONL)")->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--eval-corpus", split.eval_corpus, "Second corpus for qa")
      ->check(CLI::ExistingFile);
  split_cmd->add_option("--out", split.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen);
    if (*eval_cmd) return cmd_eval(eval);
    if (*iter_cmd) return cmd_iterate(iter);
    if (*split_cmd) return cmd_split(split);
  } catch (const std::exception& e) {
    std::cerr << "gvc: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace gvc::cli
