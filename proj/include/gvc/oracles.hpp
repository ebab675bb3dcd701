#pragma once

// Ground-truth verifiers and metrics.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gvc/core.hpp"

namespace gvc {

// Optionally signed decimal integer with surrounding whitespace; nothing else.
std::optional<std::int64_t> parse_integer(std::string_view text);

std::int64_t arithmetic_value(const ArithmeticPayload& p);

// Inverse of arithmetic_question for the four supported phrasings.
std::optional<ArithmeticPayload> parse_arithmetic_question(std::string_view question);

// Non-numeric answers are simply wrong.
bool eval_arithmetic(const ArithmeticPayload& p, std::string_view answer);

struct PlanSolution {
  int position = 0;  // 0..3 for A, B, C, D
  std::int64_t value = 0;

  auto operator<=>(const PlanSolution&) const = default;
};

struct PlanSolveOptions {
  // Replacement values must be >= 1 unless this is cleared.
  bool positive_only = true;
};

// Every single-operand replacement that makes the left side equal the target,
// sorted by (position, value).
std::vector<PlanSolution> solve_planarith(const PlanArithPayload& identity,
                                          const PlanSolveOptions& options = {});

struct PlanVerdict {
  std::int64_t lhs_value = 0;
  bool equals_target = false;
  bool one_int_modified = false;
  std::optional<int> modified_position;

  // What the generator was asked for when it sought a correct answer.
  bool solves() const { return equals_target && one_int_modified; }
};

PlanVerdict verify_planarith(const PlanArithPayload& identity, const PlanExpression& proposed);
// Throws ParseError when the text is not an "A*B+C*D" expression.
PlanVerdict verify_planarith(const PlanArithPayload& identity, std::string_view proposed_lhs);

// Lowercase, drop punctuation and the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);
bool exact_match(std::string_view prediction, std::span<const std::string> golds);

// Ground-truth validator verdict for a record, absent when unknown.
using GroundTruth = std::function<std::optional<int>(const GVRecord&)>;

// Fraction of parsed verdicts that agree with the ground truth; absent when
// no parsed record has a ground truth.
std::optional<double> validator_accuracy(std::span<const GVRecord> records,
                                         const GroundTruth& truth);

// Deterministic ground truth for arithmetic, plan_arith and labeled qa.
//   arithmetic: is the answer shown to the validator the right number
//   plan_arith: does the shown expression equal the target
//   qa:         which option exact-matches a gold answer (if exactly one does)
std::optional<int> reference_verdict(const GVRecord& record);

// Deterministic generator success for arithmetic, plan_arith and labeled qa.
// Judged tasks return nullopt here.
std::optional<bool> reference_generator_success(const GVRecord& record);

}  // namespace gvc
