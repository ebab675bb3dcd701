#pragma once

// Data generation loop: paired generator/validator exchanges, consistency
// labeling, filtering and fine-tuning dataset emission, over one or more
// rounds.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gvc/core.hpp"
#include "gvc/lmclient.hpp"

namespace gvc {

struct TaskConfig {
  TaskId task = TaskId::arithmetic;
  std::size_t count = 0;                      // synthesized tasks
  std::optional<std::filesystem::path> corpus;  // loaded tasks
  bool cot = false;
};

enum class EmitMode { consistency, self_train, ctrl };

std::string_view to_string(EmitMode mode);
EmitMode emit_mode_from_string(std::string_view name);

inline constexpr std::string_view kConsistentToken = "<consistent>";
inline constexpr std::string_view kInconsistentToken = "<inconsistent>";

struct RunConfig {
  std::vector<TaskConfig> tasks;
  BackendSpec backend;
  std::optional<BackendSpec> judge_backend;
  std::uint64_t seed = 0;
  int round = 1;
  std::filesystem::path output_dir = "gvc_out";
  std::vector<EmitMode> emit = {EmitMode::consistency};
  std::size_t workers = 4;
  std::optional<std::filesystem::path> cache_path;
  // Union earlier rounds' consistent records into this round's
  // consistency-mode emission.
  bool union_rounds = false;
  Sampling generator_sampling{0.7, 256, {}};
  Sampling validator_sampling{0.0, 256, {}};
  // Token budget used instead of max_tokens for CoT-augmented tasks.
  int cot_max_tokens = 512;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Relative corpus and cache paths resolve against `base_dir`.
RunConfig run_config_from_json(const nlohmann::json& j,
                               const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json run_config_to_json(const RunConfig& config);

// Synthesized and loaded instances for every configured task, with
// instance ids unique across the run.
std::vector<TaskInstance> collect_instances(const RunConfig& config);

struct ExchangeSettings {
  std::uint64_t seed = 0;  // per-round seed, see round_seed()
  int round = 1;
  bool cot = false;
  Sampling generator_sampling{0.7, 256, {}};
  Sampling validator_sampling{0.0, 256, {}};
};

// One instance through generate -> parse -> validate -> parse -> label.
GVRecord run_exchange(const TaskInstance& instance, const ExchangeSettings& settings,
                      LMClient& client);

// Records sorted by (task, instance_id); deterministic for any worker count.
std::vector<GVRecord> generate_records(const RunConfig& config, LMClient& client);
std::vector<GVRecord> generate_records(const RunConfig& config,
                                       std::span<const TaskInstance> instances, LMClient& client);

std::vector<GVRecord> filter_consistent(std::span<const GVRecord> records);

enum class Side { generator, validator };

struct FinetuneExample {
  std::string prompt;
  std::string completion;
  Side side = Side::generator;
  int c = 1;
  EmitMode mode = EmitMode::consistency;
  std::string instance_id;
  TaskId task = TaskId::arithmetic;
  int round = 1;
};

struct Emission {
  std::vector<FinetuneExample> examples;
  std::size_t skipped_unlabeled = 0;
};

// consistency mode requires pre-filtered input and throws std::invalid_argument
// otherwise. Records without a label are skipped (and counted) in every mode.
Emission emit_finetune(std::span<const GVRecord> records, EmitMode mode);

nlohmann::ordered_json finetune_to_json(const FinetuneExample& example);

void write_records_jsonl(const std::filesystem::path& path, std::span<const GVRecord> records);
std::vector<GVRecord> read_records_jsonl(const std::filesystem::path& path);
void write_finetune_jsonl(const std::filesystem::path& path, std::span<const FinetuneExample> examples);

struct RoundSummary {
  int round = 1;
  std::filesystem::path dir;
  std::size_t n_records = 0;
  std::size_t n_parsed = 0;
  std::size_t n_consistent = 0;
  std::size_t n_transport_errors = 0;
  // "<instance_id>: <error>" for the first few failed records.
  std::vector<std::string> error_samples;
  std::optional<double> average_consistency;
  std::vector<std::filesystem::path> emitted;
};

// Generates, filters, emits and scores one round into output_dir/round_<k>/.
RoundSummary run_round(const RunConfig& config, LMClient& client, LMClient* judge = nullptr);

// Returns the backend for the next round given the previous round's summary,
// or nullopt to stop.
using NextBackend = std::function<std::optional<BackendSpec>(const RoundSummary&)>;

// Rounds config.round .. config.round + rounds - 1. Stops early when
// next_backend is empty or declines; a message explaining how to continue is
// written to `notice` in that case.
std::vector<RoundSummary> run_iteration(RunConfig config, int rounds, const NextBackend& next_backend,
                                        std::string* notice = nullptr);

}  // namespace gvc
