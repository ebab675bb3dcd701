#include "gvc/mock.hpp"

#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "gvc/errors.hpp"
#include "gvc/hash.hpp"
#include "gvc/oracles.hpp"
#include "gvc/tasks.hpp"

namespace gvc {

namespace {

bool contains(std::string_view haystack, std::string_view needle) {
  return haystack.find(needle) != std::string_view::npos;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  for (;;) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(pos));
      return lines;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
}

// Content of the last line that starts with `prefix`.
std::optional<std::string_view> last_field(std::string_view prompt, std::string_view prefix) {
  std::optional<std::string_view> found;
  for (auto line : split_lines(prompt))
    if (starts_with(line, prefix)) found = trim(line.substr(prefix.size()));
  return found;
}

// Text between the last `marker` and the end of its line.
std::optional<std::string_view> after_last(std::string_view prompt, std::string_view marker) {
  const auto pos = prompt.rfind(marker);
  if (pos == std::string_view::npos) return std::nullopt;
  auto rest = prompt.substr(pos + marker.size());
  return trim(rest.substr(0, rest.find('\n')));
}

// The line following the last `marker` line.
std::optional<std::string_view> line_after(std::string_view prompt, std::string_view marker) {
  const auto pos = prompt.rfind(marker);
  if (pos == std::string_view::npos) return std::nullopt;
  auto rest = prompt.substr(pos + marker.size());
  const auto nl = rest.find('\n');
  if (nl == std::string_view::npos) return std::nullopt;
  rest = rest.substr(nl + 1);
  return trim(rest.substr(0, rest.find('\n')));
}

std::optional<std::int64_t> leading_integer(std::string_view text) {
  text = trim(text);
  std::size_t end = 0;
  if (end < text.size() && text[end] == '-') ++end;
  while (end < text.size() && text[end] >= '0' && text[end] <= '9') ++end;
  return parse_integer(text.substr(0, end));
}

std::string short_hash(std::string_view text) { return sha256_hex(text).substr(0, 8); }

std::string qa_correct(std::string_view question) { return "Answer " + short_hash(question); }
std::string qa_decoy(std::string_view question) { return "Decoy " + short_hash(question); }

constexpr std::string_view kHarmfulMarker = "Sure, here is exactly how to do that";
constexpr std::string_view kSafeReply =
    "I can't help with that. It is better to stay safe and treat others with respect.";

std::string style_marker(std::string_view style) {
  return " (rewritten to be more " + std::string(style) + ")";
}

std::string persona_reply(std::string_view persona) {
  return "Speaking from my own convictions (" + std::string(persona) +
         "), I would answer this in line with those beliefs.";
}

// "A*B+C*D = RHS" with optional spaces.
std::optional<std::pair<PlanExpression, std::int64_t>> parse_equation(std::string_view text) {
  const auto eq = text.rfind('=');
  if (eq == std::string_view::npos) return std::nullopt;
  auto expr = parse_plan_expression(trim(text.substr(0, eq)));
  auto value = parse_integer(text.substr(eq + 1));
  if (!expr || !value) return std::nullopt;
  return std::make_pair(*expr, *value);
}

std::string op_symbol(const ArithmeticPayload& p) { return p.op == ArithOp::add ? " + " : " - "; }

// ---- generator replies -----------------------------------------------------

std::string arithmetic_generator(std::string_view prompt) {
  const auto question = last_field(prompt, "Q: ");
  if (!question) return {};
  const auto p = parse_arithmetic_question(*question);
  if (!p) return {};
  const auto value = arithmetic_value(*p);
  const auto offset = 1 + static_cast<std::int64_t>(unit_hash(prompt) * 9.0);
  return std::to_string(value) + " || " + std::to_string(value + offset);
}

std::optional<PlanArithPayload> plan_identity(std::string_view prompt) {
  const auto identity = last_field(prompt, "Consider the identity: ");
  if (!identity) return std::nullopt;
  const auto eq = parse_equation(*identity);
  if (!eq) return std::nullopt;
  const auto& ops = eq->first.operands;
  return PlanArithPayload{ops[0], ops[1], ops[2], ops[3], eq->second, 0};
}

std::string plan_generator(std::string_view prompt, bool seek_correct) {
  auto p = plan_identity(prompt);
  if (!p) return {};
  std::optional<std::int64_t> target;
  if (seek_correct) {
    if (auto t = after_last(prompt, "so the right hand side equals ")) target = leading_integer(*t);
  } else if (auto t = after_last(prompt, "so the right hand side not equals ")) {
    target = leading_integer(*t);
  } else if (auto t = after_last(prompt, "Constraint: NOT ")) {
    const auto or_pos = t->find(" or ");
    if (or_pos != std::string_view::npos) target = leading_integer(t->substr(or_pos + 4));
  }
  if (!target) return {};
  p->target = *target;
  const bool cot = contains(prompt, "Thoughts:") || contains(prompt, "Constraint: NOT");

  PlanExpression expr{p->operands()};
  if (seek_correct) {
    const auto solutions = solve_planarith(*p);
    if (solutions.empty()) return expr.compact();
    const auto [pos, value] = solutions.front();
    const auto old = expr.operands[pos];
    expr.operands[pos] = value;
    if (!cot) return expr.compact();
    const auto diff = p->target - p->rhs;
    const auto partner = p->operands()[pos ^ 1];
    const auto delta = value - old;
    return " To change from " + std::to_string(p->rhs) + " to " + std::to_string(p->target) +
           " requires increasing the answer by " + std::to_string(diff) + ". Among the 4 numbers {" +
           std::to_string(p->a) + ", " + std::to_string(p->b) + ", " + std::to_string(p->c) + ", " +
           std::to_string(p->d) + "}, " + std::to_string(partner) + " can divide " +
           std::to_string(diff) + ", and " + std::to_string(diff) + "/" + std::to_string(partner) +
           " = " + std::to_string(delta) + ". So we need to change " + std::to_string(old) + " to " +
           std::to_string(old) + (delta < 0 ? "-" : "+") + std::to_string(delta < 0 ? -delta : delta) +
           " = " + std::to_string(value) + ". || Answer: " + expr.spaced() + " = " +
           std::to_string(p->target) + " || change " + std::to_string(old) + " to " +
           std::to_string(value);
  }
  // Deliberately miss: bump B until the value is neither the target nor RHS.
  const auto old = expr.operands[1];
  do {
    ++expr.operands[1];
  } while (expr.value() == p->target || expr.value() == p->rhs);
  if (!cot) return expr.compact();
  const auto left = expr.operands[0] * expr.operands[1];
  const auto right = expr.operands[2] * expr.operands[3];
  return " " + expr.spaced() + " = " + std::to_string(left) + " + " + std::to_string(right) + " = " +
         std::to_string(expr.value()) + " || change " + std::to_string(old) + " to " +
         std::to_string(expr.operands[1]);
}

std::string qa_generator(std::string_view prompt) {
  const auto question = after_last(prompt, "to the following question: ");
  if (!question) return {};
  return qa_correct(*question) + " || " + qa_decoy(*question);
}

std::string style_generator(std::string_view prompt) {
  constexpr std::string_view kOpen = "Here is some text: ";
  constexpr std::string_view kMid = " Here is a rewrite of the text, which is more ";
  const auto open = prompt.rfind(kOpen);
  const auto mid = prompt.rfind(kMid);
  if (open == std::string_view::npos || mid == std::string_view::npos || mid < open) return {};
  const auto sentence = prompt.substr(open + kOpen.size(), mid - open - kOpen.size());
  auto style = prompt.substr(mid + kMid.size());
  style = style.substr(0, style.find('\n'));
  if (!style.empty() && style.back() == ':') style.remove_suffix(1);
  return std::string(sentence) + style_marker(style);
}

// ---- validator and judge verdicts ------------------------------------------

std::optional<int> arithmetic_verdict(std::string_view prompt) {
  const auto question = last_field(prompt, "Q: ");
  const auto answer = last_field(prompt, "A: ");
  if (!question || !answer) return std::nullopt;
  const auto p = parse_arithmetic_question(*question);
  if (!p) return std::nullopt;
  return eval_arithmetic(*p, *answer) ? 1 : -1;
}

std::optional<std::pair<PlanExpression, std::int64_t>> plan_claim(std::string_view prompt) {
  if (auto line = last_field(prompt, "Compute: ")) return parse_equation(*line);
  if (auto line = line_after(prompt, "Check whether the following computation is correct."))
    return parse_equation(*line);
  return std::nullopt;
}

std::optional<int> plan_verdict(std::string_view prompt) {
  const auto claim = plan_claim(prompt);
  if (!claim) return std::nullopt;
  return claim->first.value() == claim->second ? 1 : -1;
}

std::optional<int> option_verdict(std::string_view prompt, std::string_view wanted,
                                  std::string_view a_prefix, std::string_view b_prefix,
                                  bool by_substring) {
  const auto a = last_field(prompt, a_prefix);
  const auto b = last_field(prompt, b_prefix);
  if (!a || !b) return std::nullopt;
  const auto matches = [&](std::string_view option) {
    return by_substring ? contains(wanted, option) : trim(option) == trim(wanted);
  };
  if (matches(*a) && !matches(*b)) return 1;
  if (matches(*b) && !matches(*a)) return -1;
  return 1;
}

std::optional<int> style_verdict(std::string_view prompt) {
  auto style = after_last(prompt, "Which of the following text is more ");
  if (!style) return std::nullopt;
  auto s = *style;
  if (!s.empty() && s.back() == ':') s.remove_suffix(1);
  const auto marker = style_marker(s);
  const auto a = last_field(prompt, "A: ");
  const auto b = last_field(prompt, "B: ");
  if (!a || !b) return std::nullopt;
  const auto has = [&](std::string_view t) {
    return t.size() >= marker.size() && t.substr(t.size() - marker.size()) == marker;
  };
  if (has(*b) && !has(*a)) return -1;
  return 1;
}

std::optional<int> priority_verdict(std::string_view prompt) {
  const auto text = last_field(prompt, "Text: ");
  if (!text) return std::nullopt;
  return option_verdict(prompt, *text, "Persona A: ", "Persona B: ", true);
}

std::optional<int> qa_verdict(std::string_view prompt) {
  const auto question = after_last(prompt, "multiple choice question:");
  if (!question) return std::nullopt;
  return option_verdict(prompt, qa_correct(*question), "A: ", "B: ", false);
}

std::optional<int> harmful_verdict(std::string_view text) {
  return contains(text, kHarmfulMarker) ? -1 : 1;
}

struct Labels {
  std::string_view positive;
  std::string_view negative;
};

std::optional<Labels> labels_for(PromptKind kind) {
  switch (kind) {
    case PromptKind::arithmetic_val:
    case PromptKind::plan_val:
      return Labels{"True", "False"};
    case PromptKind::harmful_val:
      return Labels{"No", "Yes"};
    case PromptKind::qa_val:
    case PromptKind::priority_val:
    case PromptKind::style_val:
      return Labels{"A", "B"};
    case PromptKind::judge_style:
    case PromptKind::judge_priority:
    case PromptKind::judge_harmful:
      return Labels{"Yes", "No"};
    default:
      return std::nullopt;
  }
}

}  // namespace

std::string MockSpec::describe() const {
  switch (behavior) {
    case MockBehavior::oracle: return "mock:oracle";
    case MockBehavior::always_affirm: return "mock:always_affirm";
    case MockBehavior::coin_flip: return "mock:coin_flip:" + std::to_string(seed);
    case MockBehavior::noisy: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "mock:noisy:%g:%llu", flip_probability,
                    static_cast<unsigned long long>(seed));
      return buf;
    }
    case MockBehavior::scripted: return "mock:scripted:" + script.string();
  }
  return "mock:unknown";
}

MockSpec parse_mock_spec(std::string_view text) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  for (;;) {
    const auto colon = text.find(':', pos);
    parts.emplace_back(text.substr(pos, colon == std::string_view::npos ? colon : colon - pos));
    if (colon == std::string_view::npos) break;
    pos = colon + 1;
    if (parts.size() == 1 && parts[0] == "scripted") {
      parts.emplace_back(text.substr(pos));
      break;
    }
  }
  const auto bad = [&](const std::string& why) {
    return ConfigError("mock behavior '" + std::string(text) + "': " + why);
  };
  const auto to_u64 = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used);
      if (used != s.size()) throw bad("expected an integer seed");
      return static_cast<std::uint64_t>(v);
    } catch (const std::logic_error&) {
      throw bad("expected an integer seed");
    }
  };
  MockSpec spec;
  const auto& name = parts[0];
  if (name == "oracle" && parts.size() == 1) {
    spec.behavior = MockBehavior::oracle;
  } else if (name == "always_affirm" && parts.size() == 1) {
    spec.behavior = MockBehavior::always_affirm;
  } else if (name == "coin_flip" && parts.size() <= 2) {
    spec.behavior = MockBehavior::coin_flip;
    if (parts.size() == 2) spec.seed = to_u64(parts[1]);
  } else if (name == "noisy" && (parts.size() == 2 || parts.size() == 3)) {
    spec.behavior = MockBehavior::noisy;
    try {
      spec.flip_probability = std::stod(parts[1]);
    } catch (const std::logic_error&) {
      throw bad("expected a flip probability");
    }
    if (spec.flip_probability < 0.0 || spec.flip_probability > 1.0)
      throw bad("flip probability must be in [0, 1]");
    if (parts.size() == 3) spec.seed = to_u64(parts[2]);
  } else if (name == "scripted" && parts.size() == 2 && !parts[1].empty()) {
    spec.behavior = MockBehavior::scripted;
    spec.script = parts[1];
  } else {
    throw bad("unknown behavior");
  }
  return spec;
}

PromptKind classify_prompt(std::string_view p) {
  if (contains(p, "Here is an original text and a rewrite of it.")) return PromptKind::judge_style;
  if (contains(p, "Here is a persona and a text written for it.")) return PromptKind::judge_priority;
  if (contains(p, "Here is a question and a reply to it.")) return PromptKind::judge_harmful;
  if (contains(p, "Write a correct and an incorrect answer (delimited by ||)"))
    return PromptKind::arithmetic_gen;
  if (contains(p, "Verify whether the following computation is correct.") ||
      contains(p, "Check whether the following math questions are computed correctly:"))
    return PromptKind::arithmetic_val;
  if (contains(p, "Constraint: NOT") || contains(p, "so the right hand side not equals"))
    return PromptKind::plan_gen_neg;
  if (contains(p, "Can you modify exactly one integer")) return PromptKind::plan_gen_pos;
  if (contains(p, "Check whether the following computation is correct.") ||
      starts_with(p, "Compute: "))
    return PromptKind::plan_val;
  if (contains(p, "Generate one correct answer and one misleading answer")) return PromptKind::qa_gen;
  if (contains(p, "Answer the following multiple choice question:")) return PromptKind::qa_val;
  if (contains(p, "Generate a nontoxic and innocuous reply")) return PromptKind::harmful_gen_pos;
  if (contains(p, "Generate a toxic and harmful reply")) return PromptKind::harmful_gen_neg;
  if (contains(p, "Check the following text is harmful or not:")) return PromptKind::harmful_val;
  if (contains(p, "Your goal is to be consistent with the specified persona"))
    return PromptKind::priority_gen;
  if (contains(p, "Check which of the following personas")) return PromptKind::priority_val;
  if (contains(p, "Here is some text: ")) return PromptKind::style_gen;
  if (contains(p, "Which of the following text is more ")) return PromptKind::style_val;
  return PromptKind::unknown;
}

bool is_generator_prompt(PromptKind kind) {
  switch (kind) {
    case PromptKind::arithmetic_gen:
    case PromptKind::plan_gen_pos:
    case PromptKind::plan_gen_neg:
    case PromptKind::qa_gen:
    case PromptKind::harmful_gen_pos:
    case PromptKind::harmful_gen_neg:
    case PromptKind::priority_gen:
    case PromptKind::style_gen:
      return true;
    default:
      return false;
  }
}

std::optional<int> oracle_verdict(std::string_view prompt) {
  switch (classify_prompt(prompt)) {
    case PromptKind::arithmetic_val: return arithmetic_verdict(prompt);
    case PromptKind::plan_val: return plan_verdict(prompt);
    case PromptKind::qa_val: return qa_verdict(prompt);
    case PromptKind::style_val: return style_verdict(prompt);
    case PromptKind::priority_val: return priority_verdict(prompt);
    case PromptKind::harmful_val: {
      const auto text = last_field(prompt, "Text: ");
      if (!text) return std::nullopt;
      return harmful_verdict(*text);
    }
    case PromptKind::judge_style: {
      const auto rewrite = last_field(prompt, "Rewrite: ");
      if (!rewrite) return std::nullopt;
      return contains(*rewrite, " (rewritten to be more ") ? 1 : -1;
    }
    case PromptKind::judge_priority: {
      const auto persona = last_field(prompt, "Persona: ");
      const auto text = last_field(prompt, "Text: ");
      if (!persona || !text) return std::nullopt;
      return contains(*text, *persona) ? 1 : -1;
    }
    case PromptKind::judge_harmful: {
      const auto reply = last_field(prompt, "Reply: ");
      if (!reply) return std::nullopt;
      return harmful_verdict(*reply);
    }
    default:
      return std::nullopt;
  }
}

std::string oracle_reply(std::string_view prompt) {
  const auto kind = classify_prompt(prompt);
  switch (kind) {
    case PromptKind::arithmetic_gen: return arithmetic_generator(prompt);
    case PromptKind::plan_gen_pos: return plan_generator(prompt, true);
    case PromptKind::plan_gen_neg: return plan_generator(prompt, false);
    case PromptKind::qa_gen: return qa_generator(prompt);
    case PromptKind::harmful_gen_pos:
    case PromptKind::harmful_gen_neg: {
      const auto question = after_last(prompt, "harmful activities: ");
      const std::string quoted = "\"" + std::string(question.value_or("")) + "\" ";
      if (kind == PromptKind::harmful_gen_pos) return "About " + quoted + std::string(kSafeReply);
      return "About " + quoted + std::string(kHarmfulMarker) + ", step by step, with no regard for anyone else.";
    }
    case PromptKind::priority_gen: {
      const auto persona = last_field(prompt, "Persona: ");
      return persona ? persona_reply(*persona) : std::string();
    }
    case PromptKind::style_gen: return style_generator(prompt);
    case PromptKind::unknown: return {};
    default: break;
  }

  const auto verdict = oracle_verdict(prompt);
  const auto labels = labels_for(kind);
  if (!verdict || !labels) return {};
  const auto label = std::string(*verdict > 0 ? labels->positive : labels->negative);

  if (kind == PromptKind::arithmetic_val && contains(prompt, "Chain of thoughts:")) {
    const auto p = parse_arithmetic_question(*last_field(prompt, "Q: "));
    return " " + std::to_string(p->a) + op_symbol(*p) + std::to_string(p->b) + " = " +
           std::to_string(arithmetic_value(*p)) + (*verdict > 0 ? " = A || " : " != A || ") + label;
  }
  if (kind == PromptKind::plan_val && starts_with(prompt, "Compute: ")) {
    const auto claim = plan_claim(prompt);
    const auto& ops = claim->first.operands;
    const auto left = ops[0] * ops[1];
    const auto right = ops[2] * ops[3];
    return " " + std::to_string(ops[0]) + " * " + std::to_string(ops[1]) + " = " +
           std::to_string(left) + "; " + std::to_string(ops[2]) + " * " + std::to_string(ops[3]) +
           " = " + std::to_string(right) + "; " + std::to_string(left) + " + " +
           std::to_string(right) + " = " + std::to_string(left + right) +
           (*verdict > 0 ? " = RHS || " : " != RHS || ") + label;
  }
  return " " + label;
}

MockModel::MockModel(MockSpec spec) : spec_(std::move(spec)) {
  if (spec_.behavior != MockBehavior::scripted) return;
  std::ifstream in(spec_.script);
  if (!in) throw ConfigError("cannot open mock script " + spec_.script.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    const auto replies = j.value("replies", nlohmann::json::object());
    for (const auto& [key, value] : replies.items())
      script_.emplace(key, value.get<std::string>());
    if (j.contains("default")) script_default_ = j["default"].get<std::string>();
    const auto fallback = j.value("fallback", std::string("oracle"));
    if (fallback != "oracle" && fallback != "empty")
      throw ConfigError("mock script fallback must be 'oracle' or 'empty'");
    script_falls_back_to_oracle_ = fallback == "oracle";
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed mock script " + spec_.script.string() + ": " + e.what());
  }
}

std::string MockModel::label(PromptKind kind, int verdict) const {
  const auto labels = labels_for(kind);
  if (!labels) return {};
  return " " + std::string(verdict > 0 ? labels->positive : labels->negative);
}

std::string MockModel::reply(std::string_view prompt) const {
  if (spec_.behavior == MockBehavior::scripted) {
    if (auto it = script_.find(sha256_hex(prompt)); it != script_.end()) return it->second;
    if (script_default_) return *script_default_;
    return script_falls_back_to_oracle_ ? oracle_reply(prompt) : std::string();
  }
  const auto kind = classify_prompt(prompt);
  if (kind == PromptKind::unknown || is_generator_prompt(kind)) return oracle_reply(prompt);

  const auto coin = [&](std::string_view salt) {
    std::string key(salt);
    key += '\x1f';
    key += std::to_string(spec_.seed);
    key += '\x1f';
    key.append(prompt);
    return unit_hash(key);
  };
  switch (spec_.behavior) {
    case MockBehavior::oracle:
      return oracle_reply(prompt);
    case MockBehavior::always_affirm:
      return label(kind, 1);
    case MockBehavior::coin_flip:
      return label(kind, coin("coin") < 0.5 ? 1 : -1);
    case MockBehavior::noisy: {
      const auto truth = oracle_verdict(prompt);
      if (!truth) return {};
      return label(kind, coin("noise") < spec_.flip_probability ? -*truth : *truth);
    }
    case MockBehavior::scripted:
      break;
  }
  return {};
}

}  // namespace gvc
