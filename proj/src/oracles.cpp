#include "gvc/oracles.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

#include "gvc/errors.hpp"
#include "gvc/tasks.hpp"

namespace gvc {

std::optional<std::int64_t> parse_integer(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  bool neg = false;
  if (text.front() == '-' || text.front() == '+') {
    neg = text.front() == '-';
    text.remove_prefix(1);
  }
  if (text.empty() || text.size() > 18) return std::nullopt;
  std::int64_t v = 0;
  for (char ch : text) {
    if (ch < '0' || ch > '9') return std::nullopt;
    v = v * 10 + (ch - '0');
  }
  return neg ? -v : v;
}

std::int64_t arithmetic_value(const ArithmeticPayload& p) {
  return p.op == ArithOp::add ? p.a + p.b : p.a - p.b;
}

std::optional<ArithmeticPayload> parse_arithmetic_question(std::string_view question) {
  static const std::regex kSymbol(R"(^What is (-?\d+) ([+-]) (-?\d+)\?$)");
  static const std::regex kWords(R"(^What is (-?\d+) (less|more) than (-?\d+)\?$)");
  const std::string q(trim(question));
  std::smatch m;
  ArithmeticPayload p;
  if (std::regex_match(q, m, kSymbol)) {
    const auto a = parse_integer(m[1].str());
    const auto b = parse_integer(m[3].str());
    if (!a || !b) return std::nullopt;
    p = {*a, *b, m[2].str() == "+" ? ArithOp::add : ArithOp::sub, ArithPhrasing::symbol};
    return p;
  }
  if (std::regex_match(q, m, kWords)) {
    const auto b = parse_integer(m[1].str());
    const auto a = parse_integer(m[3].str());
    if (!a || !b) return std::nullopt;
    p = {*a, *b, m[2].str() == "more" ? ArithOp::add : ArithOp::sub, ArithPhrasing::words};
    return p;
  }
  return std::nullopt;
}

bool eval_arithmetic(const ArithmeticPayload& p, std::string_view answer) {
  const auto v = parse_integer(answer);
  return v && *v == arithmetic_value(p);
}

std::vector<PlanSolution> solve_planarith(const PlanArithPayload& identity,
                                          const PlanSolveOptions& options) {
  // Changing one operand x of the product x*y leaves the other product fixed:
  // x' * y = target - other, so x' = (target - other) / y when y divides it.
  const auto ops = identity.operands();
  const std::int64_t products[2] = {ops[0] * ops[1], ops[2] * ops[3]};
  std::vector<PlanSolution> out;
  for (int pos = 0; pos < 4; ++pos) {
    const int pair = pos / 2;
    const auto partner = ops[pos ^ 1];
    const auto needed = identity.target - products[1 - pair];
    if (partner == 0) continue;  // the product is pinned at zero
    if (needed % partner != 0) continue;
    const auto value = needed / partner;
    if (value == ops[pos]) continue;
    if (options.positive_only && value < 1) continue;
    out.push_back({pos, value});
  }
  std::sort(out.begin(), out.end());
  return out;
}

PlanVerdict verify_planarith(const PlanArithPayload& identity, const PlanExpression& proposed) {
  PlanVerdict v;
  v.lhs_value = proposed.value();
  v.equals_target = v.lhs_value == identity.target;
  const auto ops = identity.operands();
  int changed = 0;
  int last = -1;
  for (int i = 0; i < 4; ++i) {
    if (proposed.operands[i] != ops[i]) {
      ++changed;
      last = i;
    }
  }
  v.one_int_modified = changed == 1;
  if (v.one_int_modified) v.modified_position = last;
  return v;
}

PlanVerdict verify_planarith(const PlanArithPayload& identity, std::string_view proposed_lhs) {
  const auto expr = parse_plan_expression(proposed_lhs);
  if (!expr) throw ParseError("not an A*B+C*D expression: '" + std::string(proposed_lhs) + "'");
  return verify_planarith(identity, *expr);
}

std::string normalize_answer(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::ispunct(u)) continue;
    cleaned.push_back(static_cast<char>(std::tolower(u)));
  }
  std::string out;
  std::size_t pos = 0;
  while (pos < cleaned.size()) {
    while (pos < cleaned.size() && std::isspace(static_cast<unsigned char>(cleaned[pos]))) ++pos;
    const auto start = pos;
    while (pos < cleaned.size() && !std::isspace(static_cast<unsigned char>(cleaned[pos]))) ++pos;
    if (pos == start) break;
    const auto word = std::string_view(cleaned).substr(start, pos - start);
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out.append(word);
  }
  return out;
}

bool exact_match(std::string_view prediction, std::span<const std::string> golds) {
  const auto p = normalize_answer(prediction);
  return std::any_of(golds.begin(), golds.end(),
                     [&](const std::string& g) { return normalize_answer(g) == p; });
}

std::optional<double> validator_accuracy(std::span<const GVRecord> records,
                                         const GroundTruth& truth) {
  std::size_t judged = 0;
  std::size_t right = 0;
  for (const auto& rec : records) {
    if (!rec.val.verdict) continue;
    const auto expected = truth(rec);
    if (!expected) continue;
    ++judged;
    if (*expected == *rec.val.verdict) ++right;
  }
  if (judged == 0) return std::nullopt;
  return static_cast<double>(right) / static_cast<double>(judged);
}

std::optional<int> reference_verdict(const GVRecord& rec) {
  if (!rec.gen.parsed) return std::nullopt;
  const auto& answer = *rec.gen.parsed;
  switch (rec.instance.task) {
    case TaskId::arithmetic: {
      const auto* pair = std::get_if<AnswerPair>(&answer);
      if (!pair) return std::nullopt;
      const auto& shown = rec.scheme.r > 0 ? pair->correct : pair->incorrect;
      return eval_arithmetic(std::get<ArithmeticPayload>(rec.instance.payload), shown) ? 1 : -1;
    }
    case TaskId::plan_arith: {
      const auto* expr = std::get_if<PlanExpression>(&answer);
      if (!expr) return std::nullopt;
      const auto& p = std::get<PlanArithPayload>(rec.instance.payload);
      return verify_planarith(p, *expr).equals_target ? 1 : -1;
    }
    case TaskId::qa: {
      const auto* pair = std::get_if<AnswerPair>(&answer);
      const auto& golds = std::get<QAPayload>(rec.instance.payload).gold_answers;
      if (!pair || golds.empty()) return std::nullopt;
      const auto& option_a = rec.scheme.r > 0 ? pair->correct : pair->incorrect;
      const auto& option_b = rec.scheme.r > 0 ? pair->incorrect : pair->correct;
      const bool a_ok = exact_match(option_a, golds);
      const bool b_ok = exact_match(option_b, golds);
      if (a_ok == b_ok) return std::nullopt;
      return a_ok ? 1 : -1;
    }
    default:
      return std::nullopt;
  }
}

std::optional<bool> reference_generator_success(const GVRecord& rec) {
  if (!rec.gen.parsed) return std::nullopt;
  const auto& answer = *rec.gen.parsed;
  switch (rec.instance.task) {
    case TaskId::arithmetic: {
      const auto* pair = std::get_if<AnswerPair>(&answer);
      if (!pair) return std::nullopt;
      return eval_arithmetic(std::get<ArithmeticPayload>(rec.instance.payload), pair->correct);
    }
    case TaskId::plan_arith: {
      // Only the correct-seeking prompt asks for a solution.
      const auto* expr = std::get_if<PlanExpression>(&answer);
      if (!expr || rec.scheme.r < 0) return std::nullopt;
      return verify_planarith(std::get<PlanArithPayload>(rec.instance.payload), *expr).solves();
    }
    case TaskId::qa: {
      const auto* pair = std::get_if<AnswerPair>(&answer);
      const auto& golds = std::get<QAPayload>(rec.instance.payload).gold_answers;
      if (!pair || golds.empty()) return std::nullopt;
      return exact_match(pair->correct, golds);
    }
    default:
      return std::nullopt;
  }
}

}  // namespace gvc
