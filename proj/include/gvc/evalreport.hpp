#pragma once

// Score aggregation, benchmark-table rendering and extrapolation splits.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gvc/core.hpp"
#include "gvc/lmclient.hpp"

namespace gvc {

struct MetricReport {
  TaskId task = TaskId::arithmetic;
  std::size_t n_total = 0;
  std::size_t n_parsed = 0;
  std::size_t n_consistent = 0;
  std::size_t n_gen_unparsed = 0;
  std::size_t n_val_unparsed = 0;
  std::size_t n_errors = 0;
  std::size_t n_judge_unparsed = 0;
  // n_consistent / n_parsed; absent when nothing parsed.
  std::optional<double> consistency;
  std::optional<double> validator_acc;
  std::optional<double> generator_perf;
};

struct RunReport {
  // Benchmark column order, tasks without records omitted.
  std::vector<MetricReport> tasks;
  // Unweighted mean over tasks that have a consistency score.
  std::optional<double> average_consistency;
  std::vector<std::string> warnings;

  std::vector<TaskId> averaged_tasks() const;
};

struct ScoreOptions {
  // Supplies generator performance and validator ground truth for
  // style_transfer, priority_prompt and harmful_q.
  LMClient* judge = nullptr;
  // Tasks the run was configured with; missing ones produce a warning.
  std::vector<TaskId> expected_tasks;
};

RunReport score_run(std::span<const GVRecord> records, const ScoreOptions& options = {});

enum class ReportFormat { md, csv, json };

ReportFormat report_format_from_string(std::string_view name);
std::string_view extension(ReportFormat format);

// Percentages at one decimal, "-" for absent values.
std::string format_percent(std::optional<double> fraction);

std::string render_report(const RunReport& report, ReportFormat format, std::string_view label);

// "<label> 53.9 50.2 49.0 79.9 74.6 51.6 | 59.9" in benchmark column order.
std::string benchmark_row(const RunReport& report, std::string_view label);

// Held-out style and topic lists.
const std::vector<std::string>& train_styles();
const std::vector<std::string>& eval_styles();
const std::vector<std::string>& train_topics();
const std::vector<std::string>& eval_topics();

struct Split {
  std::vector<TaskInstance> train;
  std::vector<TaskInstance> eval;
};

// Each instance goes to the side whose list contains its style (or topic).
// Throws ConfigError when the lists overlap or an instance matches neither.
Split split_by_style(std::span<const TaskInstance> instances, std::span<const std::string> train,
                     std::span<const std::string> eval);
Split split_by_topic(std::span<const TaskInstance> instances, std::span<const std::string> train,
                     std::span<const std::string> eval);
// Two QA sources; throws ConfigError when a normalized question appears in both.
Split split_qa_sources(std::vector<TaskInstance> train, std::vector<TaskInstance> eval);

struct SplitConfig {
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> eval_corpus;  // qa only
  // Empty lists fall back to the built-in style/topic lists.
  std::vector<std::string> train_labels;
  std::vector<std::string> eval_labels;
};

Split extrapolation_split(TaskId task, const SplitConfig& config);

}  // namespace gvc
