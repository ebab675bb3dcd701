// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <boost/multiprecision/cpp_int.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "gvc/evalreport.hpp"
#include "gvc/hash.hpp"
#include "gvc/oracles.hpp"
#include "gvc/pipeline.hpp"
#include "gvc/tasks.hpp"
#include "stub_server.hpp"
#include "test_support.hpp"

using namespace gvc;
using boost::multiprecision::cpp_int;
using gvc::testing::TempDir;

namespace {

struct Check {
  bool ok = true;
  std::string detail;
};

int failures = 0;

void report(const char* name, const std::function<Check()>& fn) {
  Check c;
  try {
    c = fn();
  } catch (const std::exception& e) {
    c = {false, std::string("exception: ") + e.what()};
  }
  if (!c.ok) ++failures;
  std::printf("%s %s%s%s\n", c.ok ? "PASS" : "FAIL", name, c.detail.empty() ? "" : " : ", c.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

struct Rate {
  std::size_t parsed = 0, consistent = 0;
  double value() const { return parsed ? static_cast<double>(consistent) / parsed : 0.0; }
};

Rate rate_of(const std::vector<GVRecord>& records) {
  Rate r;
  for (const auto& rec : records)
    if (rec.c) {
      ++r.parsed;
      r.consistent += *rec.c;
    }
  return r;
}

RunConfig mock_config(const std::filesystem::path& out, const std::string& behavior) {
  RunConfig cfg;
  cfg.seed = 2023;
  cfg.output_dir = out;
  cfg.backend = gvc::testing::mock_backend(behavior);
  cfg.workers = 8;
  return cfg;
}

Check oracle_soundness() {
  TempDir dir;
  auto cfg = mock_config(dir.path(), "oracle");
  cfg.tasks = {{TaskId::arithmetic, 300, std::nullopt, false}, {TaskId::plan_arith, 300, std::nullopt, false}};
  const auto start = std::chrono::steady_clock::now();
  LMClient client(cfg.backend);
  const auto s = run_round(cfg, client);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = s.n_records == 600 && s.n_consistent == 600 && secs < 60.0;
  return {ok, std::to_string(s.n_consistent) + "/" + std::to_string(s.n_records) + " consistent in " + fmt(secs) + " s"};
}

Check constant_verdict_correctness() {
  TempDir dir;
  auto cfg = mock_config(dir.path(), "always_affirm");
  cfg.tasks = {{TaskId::arithmetic, 5000, std::nullopt, false}, {TaskId::plan_arith, 5000, std::nullopt, false}};
  LMClient client(cfg.backend);
  const auto r = rate_of(generate_records(cfg, client));
  return {r.parsed == 10000 && std::abs(r.value() - 0.5) <= 0.02,
          "consistency " + fmt(r.value()) + " over n=" + std::to_string(r.parsed)};
}

Check constant_verdict_order() {
  std::vector<TaskInstance> insts;
  for (int i = 0; i < 3334; ++i)
    insts.push_back({TaskId::qa, QAPayload{"Which synthetic fact number " + std::to_string(i) + " holds?", {}},
                     "qa-" + std::to_string(i)});
  for (int i = 0; i < 3333; ++i)
    insts.push_back({TaskId::style_transfer, StylePayload{"Sentence number " + std::to_string(i) + ".", "witty"},
                     "style-" + std::to_string(i)});
  for (int i = 0; i < 3333; ++i)
    insts.push_back({TaskId::priority_prompt,
                     PriorityPayload{"astronaut", "topic " + std::to_string(i), "baker"},
                     "priority-" + std::to_string(i)});
  TempDir dir;
  auto cfg = mock_config(dir.path(), "always_affirm");
  LMClient client(cfg.backend);
  const auto records = generate_records(cfg, insts, client);
  std::size_t always_a = 0;
  for (const auto& rec : records) always_a += rec.val.verdict == 1;
  const auto r = rate_of(records);
  return {r.parsed == 10000 && always_a == 10000 && std::abs(r.value() - 0.5) <= 0.02,
          "consistency " + fmt(r.value()) + " over n=" + std::to_string(r.parsed)};
}

Check plan_solver_brute_force() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::int64_t> operand(1, 20);
  std::size_t disagreements = 0, solvable = 0;
  for (int i = 0; i < 1000; ++i) {
    PlanArithPayload p{operand(rng), operand(rng), operand(rng), operand(rng), 0, 0};
    p.rhs = p.a * p.b + p.c * p.d;
    // Half the targets are reachable by construction, half arbitrary.
    if (i % 2 == 0) {
      auto ops = p.operands();
      ops[rng() % 4] = std::uniform_int_distribution<std::int64_t>(1, 1000)(rng);
      p.target = ops[0] * ops[1] + ops[2] * ops[3];
    } else {
      p.target = std::uniform_int_distribution<std::int64_t>(1, 1200)(rng);
    }
    std::set<PlanSolution> brute;
    for (int pos = 0; pos < 4; ++pos)
      for (std::int64_t v = 1; v <= 1000; ++v) {
        auto ops = p.operands();
        if (ops[pos] == v) continue;  // unchanged is not a modification
        ops[pos] = v;
        if (ops[0] * ops[1] + ops[2] * ops[3] == p.target) brute.insert({pos, v});
      }
    std::set<PlanSolution> solved;
    for (const auto& s : solve_planarith(p))
      if (s.value <= 1000) solved.insert(s);
    if (solved != brute) ++disagreements;
    solvable += !brute.empty();
  }
  return {disagreements == 0, std::to_string(disagreements) + " disagreements, " + std::to_string(solvable) +
                                  " solvable of 1000"};
}

Check arithmetic_oracle() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::int64_t> operand(-99999, 99999);
  std::size_t disagreements = 0;
  for (int i = 0; i < 10000; ++i) {
    ArithmeticPayload p{operand(rng), operand(rng), rng() % 2 ? ArithOp::add : ArithOp::sub,
                        rng() % 2 ? ArithPhrasing::symbol : ArithPhrasing::words};
    const cpp_int a(p.a), b(p.b);
    const cpp_int exact = p.op == ArithOp::add ? cpp_int(a + b) : cpp_int(a - b);
    if (!eval_arithmetic(p, exact.str())) ++disagreements;
    if (eval_arithmetic(p, cpp_int(exact + 1).str())) ++disagreements;
  }
  const bool paper = eval_arithmetic({89541, 9374, ArithOp::sub, ArithPhrasing::symbol}, "80167") &&
                     eval_arithmetic({50, 2903, ArithOp::sub, ArithPhrasing::symbol}, "-2853");
  return {disagreements == 0 && paper, std::to_string(disagreements) + " disagreements; worked examples " +
                                           (paper ? "pass" : "fail")};
}

Check filtering_contract() {
  TempDir dir;
  auto cfg = mock_config(dir.path(), "oracle");
  cfg.tasks = {{TaskId::arithmetic, 100, std::nullopt, false}};
  cfg.emit = {EmitMode::consistency, EmitMode::self_train, EmitMode::ctrl};
  LMClient oracle(cfg.backend);
  const auto clean = generate_records(cfg, oracle);

  // Flip the validator on 40 of 100 exchanges.
  nlohmann::json replies = nlohmann::json::object();
  for (std::size_t i = 0; i < 40; ++i)
    replies[sha256_hex(clean[i].val.prompt)] = std::string(verdict_label(TaskId::arithmetic, -*clean[i].val.verdict));
  gvc::testing::write_file(dir / "script.json", nlohmann::json{{"replies", replies}}.dump());
  cfg.backend = parse_backend_spec("mock:scripted:" + (dir / "script.json").string());
  LMClient scripted(cfg.backend);
  const auto s = run_round(cfg, scripted);

  bool prefixes = true;
  std::ifstream ctrl(s.dir / "finetune_ctrl.jsonl");
  std::size_t n_ctrl = 0;
  for (std::string line; std::getline(ctrl, line);) {
    if (line.empty()) continue;
    ++n_ctrl;
    const auto j = nlohmann::json::parse(line);
    const std::string token = j["c"] == 1 ? "<consistent> " : "<inconsistent> ";
    prefixes = prefixes && j["prompt"].get<std::string>().rfind(token, 0) == 0;
  }
  const auto n_cons = gvc::testing::count_lines(s.dir / "finetune_consistency.jsonl");
  const auto n_self = gvc::testing::count_lines(s.dir / "finetune_self_train.jsonl");
  const bool ok = s.n_consistent == 60 && s.n_parsed == 100 && n_cons == 120 && n_self == 200 && n_ctrl == 200 &&
                  prefixes;
  std::ostringstream d;
  d << "c=1: " << s.n_consistent << "/" << s.n_parsed << ", consistency " << n_cons << ", self_train " << n_self
    << ", ctrl " << n_ctrl << (prefixes ? " (tokens ok)" : " (bad token)");
  return {ok, d.str()};
}

Check determinism() {
  TempDir a, b;
  auto cfg = mock_config(a.path(), "noisy:0.4:9");
  cfg.tasks = {{TaskId::arithmetic, 150, std::nullopt, true},
               {TaskId::plan_arith, 150, std::nullopt, false},
               {TaskId::qa, 0, std::filesystem::path(GVC_SOURCE_DIR) / "data/qa_trivia.jsonl", false},
               {TaskId::style_transfer, 0, std::filesystem::path(GVC_SOURCE_DIR) / "data/style_transfer.jsonl", false}};
  cfg.emit = {EmitMode::consistency, EmitMode::self_train, EmitMode::ctrl};
  cfg.workers = 1;
  LMClient c1(cfg.backend);
  const auto s1 = run_round(cfg, c1);
  cfg.output_dir = b.path();
  cfg.workers = 8;
  LMClient c8(cfg.backend);
  const auto s8 = run_round(cfg, c8);
  std::size_t same = 0, total = 0;
  for (const char* name : {"records.jsonl", "finetune_consistency.jsonl", "finetune_self_train.jsonl", "finetune_ctrl.jsonl"}) {
    ++total;
    const auto x = gvc::testing::read_file(s1.dir / name);
    same += !x.empty() && x == gvc::testing::read_file(s8.dir / name);
  }
  return {same == total, std::to_string(same) + "/" + std::to_string(total) + " files byte-identical across 1 and 8 workers"};
}

Check cache_contract() {
  gvc::testing::StubServer stub;
  TempDir dir;
  RunConfig cfg;
  cfg.seed = 1;
  cfg.output_dir = dir / "out";
  cfg.cache_path = dir / "cache.jsonl";
  cfg.backend = parse_backend_spec(stub.base_url());
  cfg.backend.model_name = "stub";
  cfg.tasks = {{TaskId::arithmetic, 20, std::nullopt, false}};
  run_iteration(cfg, 1, nullptr);
  const int first = stub.calls();
  run_iteration(cfg, 1, nullptr);
  const int second = stub.calls() - first;
  return {first == 40 && second == 0,
          "upstream calls: first run " + std::to_string(first) + ", second run " + std::to_string(second)};
}

Check report_row() {
  const std::vector<std::pair<TaskId, int>> rates = {
      {TaskId::arithmetic, 539}, {TaskId::plan_arith, 502},     {TaskId::priority_prompt, 490},
      {TaskId::qa, 799},         {TaskId::style_transfer, 746}, {TaskId::harmful_q, 516}};
  std::vector<GVRecord> records;
  for (auto [task, k] : rates)
    for (int i = 0; i < 1000; ++i) {
      GVRecord rec;
      rec.instance.task = task;
      rec.instance.instance_id = std::string(to_string(task)) + "-" + std::to_string(i);
      switch (task) {
        case TaskId::arithmetic: rec.instance.payload = ArithmeticPayload{}; break;
        case TaskId::plan_arith: rec.instance.payload = PlanArithPayload{}; break;
        case TaskId::qa: rec.instance.payload = QAPayload{}; break;
        case TaskId::style_transfer: rec.instance.payload = StylePayload{}; break;
        case TaskId::harmful_q: rec.instance.payload = HarmfulQPayload{}; break;
        case TaskId::priority_prompt: rec.instance.payload = PriorityPayload{}; break;
      }
      rec.scheme = {scheme_kind_for(task), 1};
      rec.val.verdict = i < k ? 1 : -1;
      rec.c = consistency_label(rec.scheme, rec.val.verdict);
      records.push_back(std::move(rec));
    }
  const auto row = benchmark_row(score_run(records), "Alpaca-30B");
  return {row == "Alpaca-30B 53.9 50.2 49.0 79.9 74.6 51.6 | 59.9", row};
}

Check splits() {
  const auto& tr = train_styles();
  const auto& ev = eval_styles();
  const std::set<std::string> trs(tr.begin(), tr.end()), evs(ev.begin(), ev.end());
  bool disjoint = true;
  for (const auto& s : evs) disjoint = disjoint && !trs.count(s);
  const bool styles = tr.size() == 40 && ev.size() == 12 && trs.size() == 40 && evs.size() == 12 && disjoint &&
                      evs.count("humorous") && trs.count("satirical");

  const std::set<std::string> tt(train_topics().begin(), train_topics().end()),
      et(eval_topics().begin(), eval_topics().end());
  bool topics_disjoint = true;
  for (const auto& t : et) topics_disjoint = topics_disjoint && !tt.count(t);
  const bool topics = tt.size() == 5 && et.size() == 5 && topics_disjoint && et.count("environment") &&
                      tt.count("legal");

  std::vector<TaskInstance> insts;
  for (const auto& s : {"humorous", "satirical"})
    insts.push_back({TaskId::style_transfer, StylePayload{"x", s}, std::string("s-") + s});
  const auto split = split_by_style(insts, tr, ev);
  const bool routed = split.eval.size() == 1 && split.train.size() == 1 &&
                      std::get<StylePayload>(split.eval[0].payload).style == "humorous";
  std::ostringstream d;
  d << "styles " << tr.size() << "/" << ev.size() << ", topics " << tt.size() << "/" << et.size()
    << (routed ? ", humorous->eval satirical->train" : ", routing wrong");
  return {styles && topics && routed, d.str()};
}

}  // namespace

int main() {
  report("oracle-mock soundness", oracle_soundness);
  report("constant verdict on correctness-randomized tasks", constant_verdict_correctness);
  report("constant verdict on order-randomized tasks", constant_verdict_order);
  report("plan_arith solver vs brute force", plan_solver_brute_force);
  report("arithmetic oracle vs big integers", arithmetic_oracle);
  report("filtering and emission counts", filtering_contract);
  report("determinism across worker counts", determinism);
  report("response cache avoids upstream calls", cache_contract);
  report("benchmark row rendering", report_row);
  report("extrapolation splits", splits);
  return failures == 0 ? 0 : 1;
}
