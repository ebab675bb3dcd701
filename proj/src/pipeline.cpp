#include "gvc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include "gvc/errors.hpp"
#include "gvc/evalreport.hpp"
#include "gvc/tasks.hpp"

namespace gvc {

namespace {

std::size_t task_rank(TaskId task) {
  const auto it = std::find(kReportTaskOrder.begin(), kReportTaskOrder.end(), task);
  return static_cast<std::size_t>(it - kReportTaskOrder.begin());
}

bool generator_uses_cot(TaskId task, bool cot) { return cot && task == TaskId::plan_arith; }

bool validator_uses_cot(TaskId task, bool cot) {
  return cot && (task == TaskId::plan_arith || task == TaskId::arithmetic);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

template <class F>
auto field(const char* name, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + name + "': " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config field '") + name + "': " + e.what());
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string completion(std::string_view text) { return " " + std::string(text); }

}  // namespace

std::string_view to_string(EmitMode mode) {
  switch (mode) {
    case EmitMode::consistency: return "consistency";
    case EmitMode::self_train: return "self_train";
    case EmitMode::ctrl: return "ctrl";
  }
  return "consistency";
}

EmitMode emit_mode_from_string(std::string_view name) {
  if (name == "consistency") return EmitMode::consistency;
  if (name == "self_train") return EmitMode::self_train;
  if (name == "ctrl") return EmitMode::ctrl;
  throw ConfigError("unknown emission mode '" + std::string(name) + "'");
}

void RunConfig::validate() const {
  if (tasks.empty()) throw ConfigError("config field 'tasks' must list at least one task");
  for (const auto& t : tasks) {
    if (!t.corpus && t.count == 0)
      throw ConfigError("config field 'tasks': " + std::string(to_string(t.task)) +
                        " needs a count or a corpus");
    if (!t.corpus && t.task != TaskId::arithmetic && t.task != TaskId::plan_arith)
      throw ConfigError("config field 'tasks': " + std::string(to_string(t.task)) +
                        " cannot be synthesized, give a corpus");
  }
  if (round < 1) throw ConfigError("config field 'round' must be >= 1");
  if (workers < 1) throw ConfigError("config field 'workers' must be >= 1");
  if (output_dir.empty()) throw ConfigError("config field 'output_dir' is empty");
  backend.validate();
  if (judge_backend) judge_backend->validate();
}

RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig cfg;
  cfg.seed = field("seed", [&] { return j.value("seed", std::uint64_t{0}); });
  cfg.round = field("round", [&] { return j.value("round", 1); });
  cfg.workers = field("workers", [&] { return j.value("workers", std::size_t{4}); });
  cfg.output_dir = field("output_dir", [&] {
    return resolve(base_dir, j.value("output_dir", std::string("gvc_out")));
  });
  if (j.contains("cache") && !j["cache"].is_null())
    cfg.cache_path = field("cache", [&] { return resolve(base_dir, j["cache"].get<std::string>()); });
  cfg.union_rounds = field("union_rounds", [&] { return j.value("union_rounds", false); });
  if (j.contains("emit")) {
    cfg.emit = field("emit", [&] {
      std::vector<EmitMode> modes;
      for (const auto& m : j["emit"]) modes.push_back(emit_mode_from_string(m.get<std::string>()));
      return modes;
    });
  }
  if (!j.contains("backend")) throw ConfigError("config field 'backend' is required");
  cfg.backend = field("backend", [&] { return backend_from_json(j["backend"]); });
  if (j.contains("judge_backend") && !j["judge_backend"].is_null())
    cfg.judge_backend = field("judge_backend", [&] { return backend_from_json(j["judge_backend"]); });
  if (j.contains("sampling")) {
    const auto& s = j["sampling"];
    if (s.contains("generator"))
      cfg.generator_sampling = field("sampling.generator", [&] {
        return sampling_from_json(s["generator"], cfg.generator_sampling);
      });
    if (s.contains("validator"))
      cfg.validator_sampling = field("sampling.validator", [&] {
        return sampling_from_json(s["validator"], cfg.validator_sampling);
      });
    cfg.cot_max_tokens = field("sampling.cot_max_tokens", [&] { return s.value("cot_max_tokens", 512); });
  }
  if (!j.contains("tasks") || !j["tasks"].is_array())
    throw ConfigError("config field 'tasks' must be an array");
  for (const auto& t : j["tasks"]) {
    TaskConfig tc;
    tc.task = field("tasks[].task", [&] { return task_from_string(t.at("task").get<std::string>()); });
    tc.count = field("tasks[].count", [&] { return t.value("count", std::size_t{0}); });
    tc.cot = field("tasks[].cot", [&] { return t.value("cot", false); });
    if (t.contains("corpus"))
      tc.corpus = field("tasks[].corpus", [&] { return resolve(base_dir, t["corpus"].get<std::string>()); });
    cfg.tasks.push_back(std::move(tc));
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

nlohmann::ordered_json run_config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["round"] = cfg.round;
  j["output_dir"] = cfg.output_dir.string();
  j["workers"] = cfg.workers;
  j["cache"] = cfg.cache_path ? nlohmann::ordered_json(cfg.cache_path->string()) : nlohmann::ordered_json(nullptr);
  j["union_rounds"] = cfg.union_rounds;
  auto emit = nlohmann::ordered_json::array();
  for (auto m : cfg.emit) emit.push_back(to_string(m));
  j["emit"] = emit;
  j["backend"] = backend_to_json(cfg.backend);
  j["judge_backend"] = cfg.judge_backend ? backend_to_json(*cfg.judge_backend) : nlohmann::ordered_json(nullptr);
  j["sampling"] = {{"generator", sampling_to_json(cfg.generator_sampling)},
                   {"validator", sampling_to_json(cfg.validator_sampling)},
                   {"cot_max_tokens", cfg.cot_max_tokens}};
  auto tasks = nlohmann::ordered_json::array();
  for (const auto& t : cfg.tasks) {
    nlohmann::ordered_json tj;
    tj["task"] = to_string(t.task);
    if (t.corpus) tj["corpus"] = t.corpus->string();
    else tj["count"] = t.count;
    tj["cot"] = t.cot;
    tasks.push_back(std::move(tj));
  }
  j["tasks"] = tasks;
  return j;
}

std::vector<TaskInstance> collect_instances(const RunConfig& config) {
  std::vector<TaskInstance> all;
  for (const auto& t : config.tasks) {
    auto batch = t.corpus ? load_instances(t.task, *t.corpus)
                          : (t.task == TaskId::arithmetic ? synth_arithmetic(config.seed, t.count)
                                                          : synth_planarith(config.seed, t.count));
    if (t.corpus && t.count > 0 && batch.size() > t.count) batch.resize(t.count);
    for (auto& inst : batch) all.push_back(std::move(inst));
  }
  std::set<std::string> seen;
  for (const auto& inst : all)
    if (!seen.insert(inst.instance_id).second)
      throw ConfigError("instance_id '" + inst.instance_id + "' appears twice in the run");
  return all;
}

GVRecord run_exchange(const TaskInstance& instance, const ExchangeSettings& s, LMClient& client) {
  const auto task = instance.task;
  GVRecord rec;
  rec.instance = instance;
  rec.round = s.round;
  rec.seed = s.seed;
  rec.cot = s.cot;
  rec.backend_id = client.backend_id();
  rec.scheme = draw_randomness(s.seed, instance.instance_id, scheme_kind_for(task));
  rec.template_hash = template_hash(task, rec.scheme, s.cot);

  rec.gen.prompt = render_generator(task, instance.payload, rec.scheme, s.cot);
  const auto gen = client.complete({rec.gen.prompt, s.generator_sampling});
  if (!gen.ok()) {
    rec.error = "generator: " + gen.error_message;
    return rec;
  }
  rec.gen.raw = gen.text;
  auto parsed = parse_generator(task, gen.text);
  rec.gen.parsed = std::move(parsed.answer);
  rec.gen.failure = parsed.failure;
  if (!rec.gen.parsed) return rec;

  rec.val.prompt = render_validator(task, instance.payload, *rec.gen.parsed, rec.scheme, s.cot);
  const auto val = client.complete({rec.val.prompt, s.validator_sampling});
  if (!val.ok()) {
    rec.error = "validator: " + val.error_message;
    return rec;
  }
  rec.val.raw = val.text;
  const auto verdict = parse_validator(task, val.text);
  rec.val.verdict = verdict.verdict;
  rec.val.failure = verdict.failure;
  rec.c = consistency_label(rec.scheme, rec.val.verdict);
  return rec;
}

std::vector<GVRecord> generate_records(const RunConfig& config, LMClient& client) {
  const auto instances = collect_instances(config);
  return generate_records(config, instances, client);
}

std::vector<GVRecord> generate_records(const RunConfig& config,
                                       std::span<const TaskInstance> instances, LMClient& client) {
  std::map<TaskId, bool> cot;
  for (const auto& t : config.tasks) cot[t.task] = t.cot;

  const auto seed = round_seed(config.seed, config.round);
  std::vector<GVRecord> records(instances.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto work = [&] {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= instances.size()) return;
      const auto& inst = instances[i];
      ExchangeSettings s;
      s.seed = seed;
      s.round = config.round;
      s.cot = cot.count(inst.task) ? cot.at(inst.task) : false;
      s.generator_sampling = config.generator_sampling;
      s.validator_sampling = config.validator_sampling;
      if (generator_uses_cot(inst.task, s.cot)) s.generator_sampling.max_tokens = config.cot_max_tokens;
      if (validator_uses_cot(inst.task, s.cot)) s.validator_sampling.max_tokens = config.cot_max_tokens;
      try {
        records[i] = run_exchange(inst, s, client);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(instances.size());
        return;
      }
    }
  };
  {
    const auto n = std::min<std::size_t>(std::max<std::size_t>(config.workers, 1), std::max<std::size_t>(instances.size(), 1));
    std::vector<std::jthread> pool;
    pool.reserve(n);
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  std::stable_sort(records.begin(), records.end(), [](const GVRecord& a, const GVRecord& b) {
    const auto ra = task_rank(a.instance.task);
    const auto rb = task_rank(b.instance.task);
    if (ra != rb) return ra < rb;
    return a.instance.instance_id < b.instance.instance_id;
  });
  return records;
}

std::vector<GVRecord> filter_consistent(std::span<const GVRecord> records) {
  std::vector<GVRecord> out;
  for (const auto& r : records)
    if (r.c == 1) out.push_back(r);
  return out;
}

Emission emit_finetune(std::span<const GVRecord> records, EmitMode mode) {
  Emission out;
  for (const auto& rec : records) {
    if (!rec.c) {
      ++out.skipped_unlabeled;
      continue;
    }
    if (mode == EmitMode::consistency && *rec.c != 1)
      throw std::invalid_argument("consistency emission needs records filtered to c = 1 (instance " +
                                  rec.instance.instance_id + ")");
    const auto task = rec.instance.task;
    const std::string prefix =
        mode == EmitMode::ctrl ? std::string(*rec.c == 1 ? kConsistentToken : kInconsistentToken) + " "
                               : std::string();

    FinetuneExample gen;
    gen.prompt = prefix + rec.gen.prompt;
    gen.completion = completion(generator_uses_cot(task, rec.cot) ? first_paragraph(rec.gen.raw)
                                                                   : answer_text(*rec.gen.parsed));
    gen.side = Side::generator;

    FinetuneExample val;
    val.prompt = prefix + rec.val.prompt;
    val.completion = completion(validator_uses_cot(task, rec.cot) ? first_paragraph(rec.val.raw)
                                                                   : verdict_label(task, *rec.val.verdict));
    val.side = Side::validator;

    for (auto* ex : {&gen, &val}) {
      ex->c = *rec.c;
      ex->mode = mode;
      ex->instance_id = rec.instance.instance_id;
      ex->task = task;
      ex->round = rec.round;
      out.examples.push_back(std::move(*ex));
    }
  }
  return out;
}

nlohmann::ordered_json finetune_to_json(const FinetuneExample& ex) {
  nlohmann::ordered_json j;
  j["prompt"] = ex.prompt;
  j["completion"] = ex.completion;
  j["side"] = ex.side == Side::generator ? "generator" : "validator";
  j["c"] = ex.c;
  j["mode"] = to_string(ex.mode);
  j["task"] = to_string(ex.task);
  j["instance_id"] = ex.instance_id;
  j["round"] = ex.round;
  return j;
}

void write_records_jsonl(const std::filesystem::path& path, std::span<const GVRecord> records) {
  auto out = open_out(path);
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

std::vector<GVRecord> read_records_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open records " + path.string());
  std::vector<GVRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_finetune_jsonl(const std::filesystem::path& path, std::span<const FinetuneExample> examples) {
  auto out = open_out(path);
  for (const auto& ex : examples) out << finetune_to_json(ex).dump() << '\n';
}

RoundSummary run_round(const RunConfig& config, LMClient& client, LMClient* judge) {
  config.validate();
  RoundSummary summary;
  summary.round = config.round;
  summary.dir = config.output_dir / ("round_" + std::to_string(config.round));
  std::filesystem::create_directories(summary.dir);

  const auto records = generate_records(config, client);
  write_records_jsonl(summary.dir / "records.jsonl", records);

  auto consistent = filter_consistent(records);
  if (config.union_rounds) {
    std::vector<GVRecord> earlier;
    for (int k = 1; k < config.round; ++k) {
      const auto path = config.output_dir / ("round_" + std::to_string(k)) / "records.jsonl";
      if (!std::filesystem::exists(path)) continue;
      auto prev = read_records_jsonl(path);
      for (auto& r : filter_consistent(prev)) earlier.push_back(std::move(r));
    }
    consistent.insert(consistent.begin(), earlier.begin(), earlier.end());
  }

  for (auto mode : config.emit) {
    const auto emission = mode == EmitMode::consistency ? emit_finetune(consistent, mode)
                                                        : emit_finetune(records, mode);
    const auto path = summary.dir / ("finetune_" + std::string(to_string(mode)) + ".jsonl");
    write_finetune_jsonl(path, emission.examples);
    summary.emitted.push_back(path);
  }

  ScoreOptions options;
  options.judge = judge;
  for (const auto& t : config.tasks) options.expected_tasks.push_back(t.task);
  const auto report = score_run(records, options);
  for (auto format : {ReportFormat::md, ReportFormat::csv, ReportFormat::json}) {
    auto out = open_out(summary.dir / ("report." + std::string(extension(format))));
    out << render_report(report, format, client.backend_id());
  }
  {
    auto out = open_out(summary.dir / "config.json");
    out << run_config_to_json(config).dump(2) << '\n';
  }

  summary.n_records = records.size();
  for (const auto& r : records) {
    if (r.parsed()) ++summary.n_parsed;
    if (r.c == 1) ++summary.n_consistent;
    if (r.error.empty()) continue;
    ++summary.n_transport_errors;
    if (summary.error_samples.size() < 5) summary.error_samples.push_back(r.instance.instance_id + ": " + r.error);
  }
  summary.average_consistency = report.average_consistency;
  return summary;
}

std::vector<RoundSummary> run_iteration(RunConfig config, int rounds, const NextBackend& next_backend,
                                        std::string* notice) {
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  std::shared_ptr<ResponseCache> cache;
  if (config.cache_path) cache = ResponseCache::open(*config.cache_path);
  std::unique_ptr<LMClient> judge;
  if (config.judge_backend) judge = std::make_unique<LMClient>(*config.judge_backend, cache);

  std::vector<RoundSummary> out;
  for (int i = 0; i < rounds; ++i) {
    LMClient client(config.backend, cache);
    out.push_back(run_round(config, client, judge.get()));
    if (i + 1 == rounds) break;

    const auto& last = out.back();
    const auto dataset = last.dir / "finetune_consistency.jsonl";
    std::optional<BackendSpec> next;
    if (next_backend) next = next_backend(last);
    if (!next) {
      if (notice)
        *notice = "stopped after round " + std::to_string(config.round) +
                  ": no fine-tuned backend for the next round. Fine-tune the base model on " +
                  dataset.string() + ", serve it, then run `gvc gen --round " +
                  std::to_string(config.round + 1) + " --backend-override <url>`.";
      break;
    }
    config.backend = *next;
    ++config.round;
  }
  return out;
}

}  // namespace gvc
