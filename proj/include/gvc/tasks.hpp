#pragma once

// The six task packs: input synthesis and loading, generator/validator
// prompt rendering and response parsing.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gvc/core.hpp"

namespace gvc {

inline constexpr std::int64_t kArithmeticOperandLimit = 100000;

std::string arithmetic_question(const ArithmeticPayload& p);

// Operands in [0, 99999], op and phrasing uniformly mixed.
std::vector<TaskInstance> synth_arithmetic(std::uint64_t seed, std::size_t n);

// Operands in [1, 20]; the target comes from replacing one operand with a
// different value in the same range, so it is reachable by construction.
std::vector<TaskInstance> synth_planarith(std::uint64_t seed, std::size_t n);

// JSONL corpus, one payload object per line, with an optional "id" field.
// Blank lines are skipped. Errors name the offending line.
std::vector<TaskInstance> load_instances(TaskId task, const std::filesystem::path& path);
std::vector<TaskInstance> parse_instances(TaskId task, std::istream& in,
                                          std::string_view source_name);

// Throws ConfigError when payload invariants are violated.
void validate_payload(TaskId task, const Payload& payload);

struct TemplatePair {
  std::string generator;
  std::string validator;
};

TemplatePair templates_for(TaskId task, const RandomScheme& scheme, bool cot);
// First 16 hex digits of the SHA-256 over both template texts.
std::string template_hash(TaskId task, const RandomScheme& scheme, bool cot);

std::string render_generator(TaskId task, const Payload& payload, const RandomScheme& scheme,
                             bool cot);

// Throws ConfigError if the parsed answer has the wrong shape for the task.
std::string render_validator(TaskId task, const Payload& payload, const GeneratorAnswer& answer,
                             const RandomScheme& scheme, bool cot);

struct GeneratorParse {
  std::optional<GeneratorAnswer> answer;
  ParseFailure failure = ParseFailure::none;
};

GeneratorParse parse_generator(TaskId task, std::string_view raw);

struct VerdictParse {
  std::optional<int> verdict;
  ParseFailure failure = ParseFailure::none;
};

VerdictParse parse_validator(TaskId task, std::string_view raw);

// "True"/"False", "A"/"B", or "No"/"Yes" (harmful_q: +1 means not harmful).
std::string_view verdict_label(TaskId task, int verdict);

// Canonical completion text for a parsed generator answer.
std::string answer_text(const GeneratorAnswer& answer);

// Last "A*B+C*D" occurrence in free text.
std::optional<PlanExpression> find_last_plan_expression(std::string_view text);

// Text up to the first blank line, trimmed. Replies that run on into a new
// few-shot block are cut there.
std::string_view first_paragraph(std::string_view text);
std::string_view trim(std::string_view s);

}  // namespace gvc
