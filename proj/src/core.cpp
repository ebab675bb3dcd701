#include "gvc/core.hpp"

#include <stdexcept>

#include "gvc/errors.hpp"
#include "gvc/hash.hpp"

namespace gvc {

namespace {

struct TaskName {
  TaskId id;
  std::string_view name;
  std::string_view column;
};

constexpr std::array<TaskName, 6> kTaskNames = {{
    {TaskId::arithmetic, "arithmetic", "Arithmetic"},
    {TaskId::plan_arith, "plan_arith", "PlanArith"},
    {TaskId::qa, "qa", "QA"},
    {TaskId::harmful_q, "harmful_q", "HarmfulQ"},
    {TaskId::priority_prompt, "priority_prompt", "PriorityPrompt"},
    {TaskId::style_transfer, "style_transfer", "Style"},
}};

constexpr std::array<std::pair<ParseFailure, std::string_view>, 6> kFailureNames = {{
    {ParseFailure::none, "none"},
    {ParseFailure::empty, "empty"},
    {ParseFailure::missing_delimiter, "missing_delimiter"},
    {ParseFailure::no_expression, "no_expression"},
    {ParseFailure::no_label, "no_label"},
    {ParseFailure::ambiguous_label, "ambiguous_label"},
}};

template <class T>
T require(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(std::string("field '") + key + "' has the wrong type");
  }
}

std::optional<int> optional_int(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<int>();
}

}  // namespace

std::string_view to_string(TaskId task) {
  for (const auto& t : kTaskNames)
    if (t.id == task) return t.name;
  return "unknown";
}

std::string_view column_name(TaskId task) {
  for (const auto& t : kTaskNames)
    if (t.id == task) return t.column;
  return "unknown";
}

TaskId task_from_string(std::string_view name) {
  for (const auto& t : kTaskNames)
    if (t.name == name) return t.id;
  throw ConfigError("unknown task_id '" + std::string(name) + "'");
}

std::string_view to_string(SchemeKind kind) {
  return kind == SchemeKind::correctness ? "correctness" : "order";
}

SchemeKind scheme_kind_for(TaskId task) {
  switch (task) {
    case TaskId::arithmetic:
    case TaskId::plan_arith:
    case TaskId::harmful_q:
      return SchemeKind::correctness;
    case TaskId::qa:
    case TaskId::priority_prompt:
    case TaskId::style_transfer:
      return SchemeKind::order;
  }
  return SchemeKind::correctness;
}

std::string_view to_string(ParseFailure failure) {
  for (const auto& [f, name] : kFailureNames)
    if (f == failure) return name;
  return "none";
}

ParseFailure parse_failure_from_string(std::string_view name) {
  for (const auto& [f, n] : kFailureNames)
    if (n == name) return f;
  throw ParseError("unknown parse failure '" + std::string(name) + "'");
}

void check_payload_matches(TaskId task, const Payload& payload) {
  bool ok = false;
  switch (task) {
    case TaskId::arithmetic: ok = std::holds_alternative<ArithmeticPayload>(payload); break;
    case TaskId::plan_arith: ok = std::holds_alternative<PlanArithPayload>(payload); break;
    case TaskId::qa: ok = std::holds_alternative<QAPayload>(payload); break;
    case TaskId::harmful_q: ok = std::holds_alternative<HarmfulQPayload>(payload); break;
    case TaskId::priority_prompt: ok = std::holds_alternative<PriorityPayload>(payload); break;
    case TaskId::style_transfer: ok = std::holds_alternative<StylePayload>(payload); break;
  }
  if (!ok) throw ConfigError("payload does not match task " + std::string(to_string(task)));
}

std::string PlanExpression::compact() const {
  return std::to_string(operands[0]) + "*" + std::to_string(operands[1]) + "+" +
         std::to_string(operands[2]) + "*" + std::to_string(operands[3]);
}

std::string PlanExpression::spaced() const {
  return std::to_string(operands[0]) + " * " + std::to_string(operands[1]) + " + " +
         std::to_string(operands[2]) + " * " + std::to_string(operands[3]);
}

std::optional<PlanExpression> parse_plan_expression(std::string_view text) {
  // Grammar: int '*' int '+' int '*' int, whitespace allowed between tokens.
  PlanExpression expr;
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  };
  auto read_int = [&](std::int64_t& out) {
    skip_ws();
    bool neg = false;
    if (pos < text.size() && (text[pos] == '-' || text[pos] == '+')) {
      neg = text[pos] == '-';
      ++pos;
    }
    const auto start = pos;
    std::int64_t v = 0;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
      if (pos - start >= 15) return false;
      v = v * 10 + (text[pos] - '0');
      ++pos;
    }
    if (pos == start) return false;
    out = neg ? -v : v;
    return true;
  };
  auto expect = [&](char ch) {
    skip_ws();
    if (pos >= text.size() || text[pos] != ch) return false;
    ++pos;
    return true;
  };
  if (!read_int(expr.operands[0]) || !expect('*') || !read_int(expr.operands[1]) ||
      !expect('+') || !read_int(expr.operands[2]) || !expect('*') ||
      !read_int(expr.operands[3]))
    return std::nullopt;
  skip_ws();
  if (pos != text.size()) return std::nullopt;
  return expr;
}

RandomScheme draw_randomness(std::uint64_t seed, std::string_view instance_id, SchemeKind kind) {
  std::string key = "gvc.r\x1f" + std::to_string(seed) + "\x1f";
  key.append(instance_id);
  const auto digest = sha256(key);
  return RandomScheme{kind, (digest[0] & 1) ? 1 : -1};
}

std::uint64_t round_seed(std::uint64_t seed, int round) {
  const auto digest =
      sha256("gvc.round\x1f" + std::to_string(seed) + "\x1f" + std::to_string(round));
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | digest[i];
  return v;
}

std::optional<int> consistency_label(const RandomScheme& scheme, std::optional<int> verdict) {
  if (!verdict) return std::nullopt;
  if (*verdict != 1 && *verdict != -1)
    throw std::invalid_argument("verdict must be +1 or -1");
  if (scheme.r != 1 && scheme.r != -1) throw std::invalid_argument("r must be +1 or -1");
  return scheme.r == *verdict ? 1 : 0;
}

ordered_json payload_to_json(const Payload& payload) {
  ordered_json j;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ArithmeticPayload>) {
          j["a"] = p.a;
          j["b"] = p.b;
          j["op"] = p.op == ArithOp::add ? "add" : "sub";
          j["phrasing"] = p.phrasing == ArithPhrasing::symbol ? "symbol" : "words";
        } else if constexpr (std::is_same_v<T, PlanArithPayload>) {
          j["a"] = p.a;
          j["b"] = p.b;
          j["c"] = p.c;
          j["d"] = p.d;
          j["rhs"] = p.rhs;
          j["target"] = p.target;
        } else if constexpr (std::is_same_v<T, QAPayload>) {
          j["question"] = p.question;
          j["gold_answers"] = p.gold_answers;
        } else if constexpr (std::is_same_v<T, StylePayload>) {
          j["sentence"] = p.sentence;
          j["style"] = p.style;
        } else if constexpr (std::is_same_v<T, HarmfulQPayload>) {
          j["question"] = p.question;
          j["topic"] = p.topic;
        } else {
          j["persona"] = p.persona;
          j["task"] = p.task;
          j["contrast_persona"] = p.contrast_persona;
        }
      },
      payload);
  return j;
}

Payload payload_from_json(TaskId task, const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("payload must be a JSON object");
  switch (task) {
    case TaskId::arithmetic: {
      ArithmeticPayload p;
      p.a = require<std::int64_t>(j, "a");
      p.b = require<std::int64_t>(j, "b");
      const auto op = require<std::string>(j, "op");
      if (op == "add") p.op = ArithOp::add;
      else if (op == "sub") p.op = ArithOp::sub;
      else throw ParseError("op must be 'add' or 'sub'");
      const auto phrasing = j.value("phrasing", std::string("symbol"));
      if (phrasing == "symbol") p.phrasing = ArithPhrasing::symbol;
      else if (phrasing == "words") p.phrasing = ArithPhrasing::words;
      else throw ParseError("phrasing must be 'symbol' or 'words'");
      return p;
    }
    case TaskId::plan_arith: {
      PlanArithPayload p;
      p.a = require<std::int64_t>(j, "a");
      p.b = require<std::int64_t>(j, "b");
      p.c = require<std::int64_t>(j, "c");
      p.d = require<std::int64_t>(j, "d");
      p.rhs = j.contains("rhs") ? require<std::int64_t>(j, "rhs") : p.a * p.b + p.c * p.d;
      p.target = require<std::int64_t>(j, "target");
      return p;
    }
    case TaskId::qa: {
      QAPayload p;
      p.question = require<std::string>(j, "question");
      if (j.contains("gold_answers"))
        p.gold_answers = require<std::vector<std::string>>(j, "gold_answers");
      return p;
    }
    case TaskId::style_transfer:
      return StylePayload{require<std::string>(j, "sentence"), require<std::string>(j, "style")};
    case TaskId::harmful_q:
      return HarmfulQPayload{require<std::string>(j, "question"), j.value("topic", std::string())};
    case TaskId::priority_prompt:
      return PriorityPayload{require<std::string>(j, "persona"), require<std::string>(j, "task"),
                             require<std::string>(j, "contrast_persona")};
  }
  throw ConfigError("unknown task_id");
}

ordered_json answer_to_json(const GeneratorAnswer& answer) {
  ordered_json j;
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, AnswerPair>) {
          j["correct"] = a.correct;
          j["incorrect"] = a.incorrect;
        } else if constexpr (std::is_same_v<T, PlanExpression>) {
          j["lhs"] = a.compact();
        } else {
          j["text"] = a.text;
        }
      },
      answer);
  return j;
}

GeneratorAnswer answer_from_json(TaskId task, const nlohmann::json& j) {
  switch (task) {
    case TaskId::arithmetic:
    case TaskId::qa:
      return AnswerPair{require<std::string>(j, "correct"), require<std::string>(j, "incorrect")};
    case TaskId::plan_arith: {
      const auto lhs = require<std::string>(j, "lhs");
      auto expr = parse_plan_expression(lhs);
      if (!expr) throw ParseError("unparseable lhs '" + lhs + "'");
      return *expr;
    }
    default:
      return FreeText{require<std::string>(j, "text")};
  }
  throw ConfigError("unknown task_id");
}

ordered_json record_to_json(const GVRecord& rec) {
  ordered_json j;
  j["task"] = to_string(rec.instance.task);
  j["instance_id"] = rec.instance.instance_id;
  j["r"] = rec.scheme.r;
  j["scheme"] = to_string(rec.scheme.kind);
  j["gen_prompt"] = rec.gen.prompt;
  j["gen_raw"] = rec.gen.raw;
  j["gen_parsed"] = rec.gen.parsed ? answer_to_json(*rec.gen.parsed) : ordered_json(nullptr);
  j["val_prompt"] = rec.val.prompt;
  j["val_raw"] = rec.val.raw;
  j["verdict"] = rec.val.verdict ? ordered_json(*rec.val.verdict) : ordered_json(nullptr);
  j["c"] = rec.c ? ordered_json(*rec.c) : ordered_json(nullptr);
  j["backend_id"] = rec.backend_id;
  j["round"] = rec.round;
  j["seed"] = rec.seed;
  j["cot"] = rec.cot;
  j["template_hash"] = rec.template_hash;
  j["payload"] = payload_to_json(rec.instance.payload);
  j["gen_parse_failure"] = to_string(rec.gen.failure);
  j["val_parse_failure"] = to_string(rec.val.failure);
  j["error"] = rec.error;
  return j;
}

GVRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("record must be a JSON object");
  GVRecord rec;
  rec.instance.task = task_from_string(require<std::string>(j, "task"));
  rec.instance.instance_id = require<std::string>(j, "instance_id");
  rec.instance.payload = payload_from_json(rec.instance.task, require<nlohmann::json>(j, "payload"));
  const auto scheme = require<std::string>(j, "scheme");
  rec.scheme.kind = scheme == "order" ? SchemeKind::order : SchemeKind::correctness;
  if (rec.scheme.kind != scheme_kind_for(rec.instance.task))
    throw ParseError("scheme does not match task");
  rec.scheme.r = require<int>(j, "r");
  if (rec.scheme.r != 1 && rec.scheme.r != -1) throw ParseError("r must be +1 or -1");
  rec.gen.prompt = require<std::string>(j, "gen_prompt");
  rec.gen.raw = require<std::string>(j, "gen_raw");
  if (auto it = j.find("gen_parsed"); it != j.end() && !it->is_null())
    rec.gen.parsed = answer_from_json(rec.instance.task, *it);
  rec.val.prompt = require<std::string>(j, "val_prompt");
  rec.val.raw = require<std::string>(j, "val_raw");
  rec.val.verdict = optional_int(j, "verdict");
  rec.c = optional_int(j, "c");
  rec.backend_id = require<std::string>(j, "backend_id");
  rec.round = require<int>(j, "round");
  rec.seed = j.value("seed", std::uint64_t{0});
  rec.cot = j.value("cot", false);
  rec.template_hash = j.value("template_hash", std::string());
  rec.gen.failure = parse_failure_from_string(j.value("gen_parse_failure", std::string("none")));
  rec.val.failure = parse_failure_from_string(j.value("val_parse_failure", std::string("none")));
  rec.error = j.value("error", std::string());
  if (rec.c.has_value() != (rec.gen.parse_ok() && rec.val.parse_ok()))
    throw ParseError("c must be present exactly when both sides parsed");
  return rec;
}

}  // namespace gvc
