#include "gvc/tasks.hpp"

#include <cctype>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "gvc/errors.hpp"
#include "gvc/hash.hpp"
#include "gvc/oracles.hpp"
#include "gvc/templates.hpp"

namespace gvc {

namespace {

// std distributions are implementation-defined; reduce the engine output
// directly so synthesized corpora match across standard libraries.
std::int64_t draw(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo + 1);
  return lo + static_cast<std::int64_t>(rng() % span);
}

std::mt19937_64 seeded(std::uint64_t seed, std::string_view stream) {
  const auto d = sha256(std::string(stream) + "\x1f" + std::to_string(seed));
  std::seed_seq seq{d[0] | (d[1] << 8) | (d[2] << 16), d[3] | (d[4] << 8) | (d[5] << 16),
                    d[6] | (d[7] << 8) | (d[8] << 16), d[9] | (d[10] << 8) | (d[11] << 16)};
  return std::mt19937_64(seq);
}

std::string numbered_id(TaskId task, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return std::string(to_string(task)) + "-" + buf;
}

bool is_word_char(char ch) { return std::isalnum(static_cast<unsigned char>(ch)) != 0; }

// Whole-word search; `fold` compares case-insensitively.
bool contains_word(std::string_view text, std::string_view word, bool fold) {
  if (word.empty() || text.size() < word.size()) return false;
  for (std::size_t i = 0; i + word.size() <= text.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < word.size() && match; ++k) {
      char a = text[i + k];
      char b = word[k];
      if (fold) {
        a = static_cast<char>(std::tolower(static_cast<unsigned char>(a)));
        b = static_cast<char>(std::tolower(static_cast<unsigned char>(b)));
      }
      match = a == b;
    }
    if (!match) continue;
    const bool left_ok = i == 0 || !is_word_char(text[i - 1]);
    const bool right_ok = i + word.size() == text.size() || !is_word_char(text[i + word.size()]);
    if (left_ok && right_ok) return true;
  }
  return false;
}

std::string erase_all_folded(std::string text, std::string_view needle) {
  auto lower = [](std::string s) {
    for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
  };
  const std::string n = lower(std::string(needle));
  for (;;) {
    const auto pos = lower(text).find(n);
    if (pos == std::string::npos) return text;
    text.erase(pos, n.size());
  }
}

struct LabelSet {
  std::string_view positive;
  std::string_view negative;
  bool fold;
};

LabelSet labels_for(TaskId task) {
  switch (task) {
    case TaskId::arithmetic:
    case TaskId::plan_arith:
      return {"True", "False", true};
    case TaskId::harmful_q:
      // Asked "is the text harmful": a "No" agrees with an innocuous request.
      return {"No", "Yes", true};
    default:
      // Lowercase "a" is an English article, so option letters are matched
      // in upper case only.
      return {"A", "B", false};
  }
}

const AnswerPair& require_pair(const GeneratorAnswer& answer, TaskId task) {
  if (const auto* p = std::get_if<AnswerPair>(&answer)) return *p;
  throw ConfigError("task " + std::string(to_string(task)) + " needs a two-answer generator reply");
}

const std::string& require_text(const GeneratorAnswer& answer, TaskId task) {
  if (const auto* p = std::get_if<FreeText>(&answer)) return p->text;
  throw ConfigError("task " + std::string(to_string(task)) + " needs a free-text generator reply");
}

}  // namespace

std::string_view trim(std::string_view s) {
  const auto is_space = [](char ch) { return std::isspace(static_cast<unsigned char>(ch)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string_view first_paragraph(std::string_view text) {
  text = trim(text);
  const auto cut = text.find("\n\n");
  if (cut != std::string_view::npos) text = text.substr(0, cut);
  return trim(text);
}

std::string arithmetic_question(const ArithmeticPayload& p) {
  const auto a = std::to_string(p.a);
  const auto b = std::to_string(p.b);
  if (p.phrasing == ArithPhrasing::symbol)
    return "What is " + a + (p.op == ArithOp::add ? " + " : " - ") + b + "?";
  return "What is " + b + (p.op == ArithOp::add ? " more than " : " less than ") + a + "?";
}

std::vector<TaskInstance> synth_arithmetic(std::uint64_t seed, std::size_t n) {
  auto rng = seeded(seed, "arithmetic");
  std::vector<TaskInstance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ArithmeticPayload p;
    p.a = draw(rng, 0, kArithmeticOperandLimit - 1);
    p.b = draw(rng, 0, kArithmeticOperandLimit - 1);
    p.op = draw(rng, 0, 1) == 0 ? ArithOp::add : ArithOp::sub;
    p.phrasing = draw(rng, 0, 1) == 0 ? ArithPhrasing::symbol : ArithPhrasing::words;
    out.push_back({TaskId::arithmetic, p, numbered_id(TaskId::arithmetic, i + 1)});
  }
  return out;
}

std::vector<TaskInstance> synth_planarith(std::uint64_t seed, std::size_t n) {
  constexpr std::int64_t kMax = 20;
  auto rng = seeded(seed, "plan_arith");
  std::vector<TaskInstance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::array<std::int64_t, 4> ops{};
    for (auto& v : ops) v = draw(rng, 1, kMax);
    const auto position = static_cast<std::size_t>(draw(rng, 0, 3));
    auto replacement = draw(rng, 1, kMax - 1);
    if (replacement >= ops[position]) ++replacement;  // any value except the original
    auto modified = ops;
    modified[position] = replacement;

    PlanArithPayload p{ops[0], ops[1], ops[2], ops[3], 0, 0};
    p.rhs = ops[0] * ops[1] + ops[2] * ops[3];
    p.target = modified[0] * modified[1] + modified[2] * modified[3];
    out.push_back({TaskId::plan_arith, p, numbered_id(TaskId::plan_arith, i + 1)});
  }
  return out;
}

void validate_payload(TaskId task, const Payload& payload) {
  check_payload_matches(task, payload);
  switch (task) {
    case TaskId::arithmetic: {
      const auto& p = std::get<ArithmeticPayload>(payload);
      if (p.a <= -kArithmeticOperandLimit || p.a >= kArithmeticOperandLimit ||
          p.b <= -kArithmeticOperandLimit || p.b >= kArithmeticOperandLimit)
        throw ConfigError("arithmetic operands must have at most 5 digits");
      break;
    }
    case TaskId::plan_arith: {
      const auto& p = std::get<PlanArithPayload>(payload);
      for (auto v : p.operands())
        if (v < 1) throw ConfigError("plan_arith operands must be positive");
      if (p.rhs != p.a * p.b + p.c * p.d) throw ConfigError("plan_arith rhs does not match A*B+C*D");
      if (p.target == p.rhs) throw ConfigError("plan_arith target equals rhs");
      if (solve_planarith(p).empty())
        throw ConfigError("plan_arith target is not reachable by changing one operand");
      break;
    }
    case TaskId::qa:
      if (trim(std::get<QAPayload>(payload).question).empty())
        throw ConfigError("qa question is empty");
      break;
    case TaskId::style_transfer: {
      const auto& p = std::get<StylePayload>(payload);
      if (trim(p.sentence).empty() || trim(p.style).empty())
        throw ConfigError("style_transfer needs a sentence and a style");
      break;
    }
    case TaskId::harmful_q:
      if (trim(std::get<HarmfulQPayload>(payload).question).empty())
        throw ConfigError("harmful_q question is empty");
      break;
    case TaskId::priority_prompt: {
      const auto& p = std::get<PriorityPayload>(payload);
      if (trim(p.persona).empty() || trim(p.task).empty() || trim(p.contrast_persona).empty())
        throw ConfigError("priority_prompt needs persona, task and contrast_persona");
      break;
    }
  }
}

std::vector<TaskInstance> parse_instances(TaskId task, std::istream& in,
                                          std::string_view source_name) {
  std::vector<TaskInstance> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  const auto fail = [&](const std::string& msg) {
    throw ParseError(std::string(source_name) + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(std::string("malformed JSON: ") + e.what());
    }
    TaskInstance inst;
    inst.task = task;
    try {
      inst.payload = payload_from_json(task, j);
      validate_payload(task, inst.payload);
    } catch (const Error& e) {
      fail(e.what());
    }
    if (j.contains("id")) {
      if (!j["id"].is_string() && !j["id"].is_number()) fail("id must be a string or number");
      inst.instance_id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    } else {
      inst.instance_id = numbered_id(task, line_no);
    }
    if (!seen.insert(inst.instance_id).second) fail("duplicate instance_id '" + inst.instance_id + "'");
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<TaskInstance> load_instances(TaskId task, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus " + path.string());
  return parse_instances(task, in, path.string());
}

TemplatePair templates_for(TaskId task, const RandomScheme& scheme, bool cot) {
  const bool pos = scheme.r > 0;
  switch (task) {
    case TaskId::arithmetic:
      return {"arithmetic_gen", cot ? "arithmetic_val_cot" : "arithmetic_val"};
    case TaskId::plan_arith:
      if (cot)
        return {pos ? "plan_arith_gen_pos_cot" : "plan_arith_gen_neg_cot", "plan_arith_val_cot"};
      return {pos ? "plan_arith_gen_pos" : "plan_arith_gen_neg", "plan_arith_val"};
    case TaskId::harmful_q:
      return {pos ? "harmful_q_gen_pos" : "harmful_q_gen_neg", "harmful_q_val"};
    case TaskId::qa:
      return {"qa_gen", "qa_val"};
    case TaskId::priority_prompt:
      return {"priority_prompt_gen", "priority_prompt_val"};
    case TaskId::style_transfer:
      return {"style_transfer_gen", "style_transfer_val"};
  }
  throw ConfigError("unknown task_id");
}

std::string template_hash(TaskId task, const RandomScheme& scheme, bool cot) {
  const auto names = templates_for(task, scheme, cot);
  std::string joined(template_text(names.generator));
  joined += '\x1f';
  joined += template_text(names.validator);
  return sha256_hex(joined).substr(0, 16);
}

std::string render_generator(TaskId task, const Payload& payload, const RandomScheme& scheme,
                             bool cot) {
  check_payload_matches(task, payload);
  const auto name = templates_for(task, scheme, cot).generator;
  switch (task) {
    case TaskId::arithmetic:
      return render_template(name, {{"question", arithmetic_question(std::get<ArithmeticPayload>(payload))}});
    case TaskId::plan_arith: {
      const auto& p = std::get<PlanArithPayload>(payload);
      return render_template(name, {{"a", std::to_string(p.a)},
                                    {"b", std::to_string(p.b)},
                                    {"c", std::to_string(p.c)},
                                    {"d", std::to_string(p.d)},
                                    {"rhs", std::to_string(p.rhs)},
                                    {"target", std::to_string(p.target)}});
    }
    case TaskId::qa:
      return render_template(name, {{"question", std::get<QAPayload>(payload).question}});
    case TaskId::harmful_q:
      return render_template(name, {{"question", std::get<HarmfulQPayload>(payload).question}});
    case TaskId::priority_prompt: {
      const auto& p = std::get<PriorityPayload>(payload);
      return render_template(name, {{"persona", p.persona}, {"task", p.task}});
    }
    case TaskId::style_transfer: {
      const auto& p = std::get<StylePayload>(payload);
      return render_template(name, {{"sentence", p.sentence}, {"style", p.style}});
    }
  }
  throw ConfigError("unknown task_id");
}

std::string render_validator(TaskId task, const Payload& payload, const GeneratorAnswer& answer,
                             const RandomScheme& scheme, bool cot) {
  check_payload_matches(task, payload);
  const auto name = templates_for(task, scheme, cot).validator;
  const bool pos = scheme.r > 0;
  switch (task) {
    case TaskId::arithmetic: {
      const auto& pair = require_pair(answer, task);
      return render_template(name,
                             {{"question", arithmetic_question(std::get<ArithmeticPayload>(payload))},
                              {"answer", pos ? pair.correct : pair.incorrect}});
    }
    case TaskId::plan_arith: {
      const auto* expr = std::get_if<PlanExpression>(&answer);
      if (!expr) throw ConfigError("plan_arith needs an expression generator reply");
      return render_template(name, {{"lhs", cot ? expr->spaced() : expr->compact()},
                                    {"target", std::to_string(std::get<PlanArithPayload>(payload).target)}});
    }
    case TaskId::qa: {
      const auto& pair = require_pair(answer, task);
      return render_template(name, {{"question", std::get<QAPayload>(payload).question},
                                    {"option_a", pos ? pair.correct : pair.incorrect},
                                    {"option_b", pos ? pair.incorrect : pair.correct}});
    }
    case TaskId::harmful_q:
      return render_template(name, {{"text", require_text(answer, task)}});
    case TaskId::priority_prompt: {
      const auto& p = std::get<PriorityPayload>(payload);
      return render_template(name, {{"text", require_text(answer, task)},
                                    {"option_a", pos ? p.persona : p.contrast_persona},
                                    {"option_b", pos ? p.contrast_persona : p.persona}});
    }
    case TaskId::style_transfer: {
      const auto& p = std::get<StylePayload>(payload);
      const auto& rewrite = require_text(answer, task);
      return render_template(name, {{"style", p.style},
                                    {"option_a", pos ? rewrite : p.sentence},
                                    {"option_b", pos ? p.sentence : rewrite}});
    }
  }
  throw ConfigError("unknown task_id");
}

std::optional<PlanExpression> find_last_plan_expression(std::string_view text) {
  static const std::regex kExpr(R"((-?\d+)\s*\*\s*(-?\d+)\s*\+\s*(-?\d+)\s*\*\s*(-?\d+))");
  std::optional<PlanExpression> last;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kExpr); it != std::sregex_iterator(); ++it) {
    PlanExpression e;
    bool ok = true;
    for (int k = 0; k < 4; ++k) {
      const auto v = parse_integer((*it)[k + 1].str());
      if (!v) ok = false;
      else e.operands[k] = *v;
    }
    if (ok) last = e;
  }
  return last;
}

GeneratorParse parse_generator(TaskId task, std::string_view raw) {
  switch (task) {
    case TaskId::arithmetic:
    case TaskId::qa: {
      auto para = first_paragraph(raw);
      if (para.empty()) return {std::nullopt, ParseFailure::empty};
      const auto line = trim(para.substr(0, para.find('\n')));
      const auto bar = line.find("||");
      if (bar == std::string_view::npos) return {std::nullopt, ParseFailure::missing_delimiter};
      auto rest = line.substr(bar + 2);
      rest = rest.substr(0, rest.find("||"));
      AnswerPair pair{std::string(trim(line.substr(0, bar))), std::string(trim(rest))};
      if (pair.correct.empty() || pair.incorrect.empty()) return {std::nullopt, ParseFailure::empty};
      return {GeneratorAnswer{std::move(pair)}, ParseFailure::none};
    }
    case TaskId::plan_arith: {
      const auto para = first_paragraph(raw);
      if (para.empty()) return {std::nullopt, ParseFailure::empty};
      auto expr = find_last_plan_expression(para);
      if (!expr) return {std::nullopt, ParseFailure::no_expression};
      return {GeneratorAnswer{*expr}, ParseFailure::none};
    }
    case TaskId::harmful_q:
    case TaskId::priority_prompt:
    case TaskId::style_transfer: {
      const auto text = trim(raw);
      if (text.empty()) return {std::nullopt, ParseFailure::empty};
      return {GeneratorAnswer{FreeText{std::string(text)}}, ParseFailure::none};
    }
  }
  throw ConfigError("unknown task_id");
}

VerdictParse parse_validator(TaskId task, std::string_view raw) {
  auto para = first_paragraph(raw);
  if (para.empty()) return {std::nullopt, ParseFailure::empty};
  if (const auto bar = para.rfind("||"); bar != std::string_view::npos) para = para.substr(bar + 2);

  std::string text(para);
  for (std::string_view echo : {"(True/False)", "(Yes/No)", "(A or B)", "(A/B)"})
    text = erase_all_folded(std::move(text), echo);

  const auto labels = labels_for(task);
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const bool pos = contains_word(line, labels.positive, labels.fold);
    const bool neg = contains_word(line, labels.negative, labels.fold);
    if (pos && neg) return {std::nullopt, ParseFailure::ambiguous_label};
    if (pos) return {1, ParseFailure::none};
    if (neg) return {-1, ParseFailure::none};
  }
  return {std::nullopt, ParseFailure::no_label};
}

std::string_view verdict_label(TaskId task, int verdict) {
  const auto labels = labels_for(task);
  return verdict > 0 ? labels.positive : labels.negative;
}

std::string answer_text(const GeneratorAnswer& answer) {
  return std::visit(
      [](const auto& a) -> std::string {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, AnswerPair>) return a.correct + " || " + a.incorrect;
        else if constexpr (std::is_same_v<T, PlanExpression>) return a.compact();
        else return a.text;
      },
      answer);
}

}  // namespace gvc
