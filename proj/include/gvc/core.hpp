#pragma once

// Domain types shared by every task: task inputs, the randomness bit that
// decides which answer is the consistent one, the two LM exchanges and the
// resulting generator-validator record.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace gvc {

using ordered_json = nlohmann::ordered_json;

enum class TaskId { arithmetic, plan_arith, qa, harmful_q, priority_prompt, style_transfer };

// Benchmark column order: Arithmetic, PlanArith, PriorityPrompt, QA, Style, HarmfulQ.
inline constexpr std::array<TaskId, 6> kReportTaskOrder = {
    TaskId::arithmetic, TaskId::plan_arith,     TaskId::priority_prompt,
    TaskId::qa,         TaskId::style_transfer, TaskId::harmful_q};

std::string_view to_string(TaskId task);
// Throws ConfigError for unknown names.
TaskId task_from_string(std::string_view name);
// Column heading used in benchmark tables ("PlanArith", "Style", ...).
std::string_view column_name(TaskId task);

enum class SchemeKind { correctness, order };

std::string_view to_string(SchemeKind kind);
SchemeKind scheme_kind_for(TaskId task);

// r = +1: the generator was asked for a correct answer (correctness scheme)
// or the consistent option sits in slot A (order scheme). r = -1 otherwise.
struct RandomScheme {
  SchemeKind kind = SchemeKind::correctness;
  int r = 1;

  bool operator==(const RandomScheme&) const = default;
};

enum class ArithOp { add, sub };

// symbol: "What is A - B?" / "What is A + B?"
// words:  "What is B less than A?" / "What is B more than A?"
enum class ArithPhrasing { symbol, words };

struct ArithmeticPayload {
  std::int64_t a = 0;
  std::int64_t b = 0;
  ArithOp op = ArithOp::add;
  ArithPhrasing phrasing = ArithPhrasing::symbol;

  bool operator==(const ArithmeticPayload&) const = default;
};

struct PlanArithPayload {
  std::int64_t a = 0, b = 0, c = 0, d = 0;
  std::int64_t rhs = 0;
  std::int64_t target = 0;

  std::array<std::int64_t, 4> operands() const { return {a, b, c, d}; }
  bool operator==(const PlanArithPayload&) const = default;
};

struct QAPayload {
  std::string question;
  std::vector<std::string> gold_answers;

  bool operator==(const QAPayload&) const = default;
};

struct StylePayload {
  std::string sentence;
  std::string style;

  bool operator==(const StylePayload&) const = default;
};

struct HarmfulQPayload {
  std::string question;
  std::string topic;

  bool operator==(const HarmfulQPayload&) const = default;
};

struct PriorityPayload {
  std::string persona;
  std::string task;
  std::string contrast_persona;

  bool operator==(const PriorityPayload&) const = default;
};

using Payload = std::variant<ArithmeticPayload, PlanArithPayload, QAPayload, StylePayload,
                             HarmfulQPayload, PriorityPayload>;

struct TaskInstance {
  TaskId task = TaskId::arithmetic;
  Payload payload;
  std::string instance_id;

  bool operator==(const TaskInstance&) const = default;
};

// Throws ConfigError if the payload alternative does not belong to the task.
void check_payload_matches(TaskId task, const Payload& payload);

// Parsed generator answers.
struct AnswerPair {
  std::string correct;
  std::string incorrect;

  bool operator==(const AnswerPair&) const = default;
};

struct PlanExpression {
  std::array<std::int64_t, 4> operands{};

  std::int64_t value() const { return operands[0] * operands[1] + operands[2] * operands[3]; }
  // Compact form "A*B+C*D".
  std::string compact() const;
  // Spaced form "A * B + C * D" used by the chain-of-thought prompts.
  std::string spaced() const;
  bool operator==(const PlanExpression&) const = default;
};

struct FreeText {
  std::string text;

  bool operator==(const FreeText&) const = default;
};

// Strict parse of a whole "A*B+C*D" string (whitespace tolerated).
std::optional<PlanExpression> parse_plan_expression(std::string_view text);

using GeneratorAnswer = std::variant<AnswerPair, PlanExpression, FreeText>;

enum class ParseFailure { none, empty, missing_delimiter, no_expression, no_label, ambiguous_label };

std::string_view to_string(ParseFailure failure);
ParseFailure parse_failure_from_string(std::string_view name);

struct GeneratorExchange {
  std::string prompt;
  std::string raw;
  std::optional<GeneratorAnswer> parsed;
  ParseFailure failure = ParseFailure::none;

  bool parse_ok() const { return parsed.has_value(); }
};

struct ValidatorExchange {
  std::string prompt;
  std::string raw;
  std::optional<int> verdict;
  ParseFailure failure = ParseFailure::none;

  bool parse_ok() const { return verdict.has_value(); }
};

struct GVRecord {
  TaskInstance instance;
  RandomScheme scheme;
  GeneratorExchange gen;
  ValidatorExchange val;
  std::optional<int> c;
  std::string backend_id;
  int round = 1;
  std::uint64_t seed = 0;
  bool cot = false;
  std::string template_hash;
  // Transport or configuration failure for this record, empty when none.
  std::string error;

  bool parsed() const { return gen.parse_ok() && val.parse_ok(); }
};

// Keyed hash of (seed, instance_id); independent of call order and process.
RandomScheme draw_randomness(std::uint64_t seed, std::string_view instance_id, SchemeKind kind);

// Per-round seed so that each round re-draws r independently.
std::uint64_t round_seed(std::uint64_t seed, int round);

// 1 iff scheme.r == verdict. An absent verdict yields an absent label.
// Throws std::invalid_argument for verdicts outside {-1, +1}.
std::optional<int> consistency_label(const RandomScheme& scheme, std::optional<int> verdict);

// JSONL record schema.
ordered_json payload_to_json(const Payload& payload);
Payload payload_from_json(TaskId task, const nlohmann::json& j);
ordered_json answer_to_json(const GeneratorAnswer& answer);
GeneratorAnswer answer_from_json(TaskId task, const nlohmann::json& j);
ordered_json record_to_json(const GVRecord& record);
GVRecord record_from_json(const nlohmann::json& j);

}  // namespace gvc
