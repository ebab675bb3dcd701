#include "gvc/evalreport.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "gvc/errors.hpp"
#include "gvc/judge.hpp"
#include "gvc/oracles.hpp"
#include "gvc/tasks.hpp"

namespace gvc {

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

struct Tally {
  std::size_t hits = 0;
  std::size_t n = 0;
  void add(bool ok) {
    ++n;
    if (ok) ++hits;
  }
};

MetricReport score_task(TaskId task, const std::vector<const GVRecord*>& records, LMClient* judge) {
  MetricReport m;
  m.task = task;
  m.n_total = records.size();
  Tally val_acc, gen_perf;
  const bool judged = is_judged_task(task);

  for (const auto* rec : records) {
    if (!rec->error.empty()) ++m.n_errors;
    if (rec->error.empty() && !rec->gen.parse_ok()) ++m.n_gen_unparsed;
    if (rec->gen.parse_ok() && rec->error.empty() && !rec->val.parse_ok()) ++m.n_val_unparsed;
    if (rec->c) {
      ++m.n_parsed;
      if (*rec->c == 1) ++m.n_consistent;
    }

    if (!judged) {
      if (const auto ok = reference_generator_success(*rec)) gen_perf.add(*ok);
      if (rec->val.verdict)
        if (const auto truth = reference_verdict(*rec)) val_acc.add(*truth == *rec->val.verdict);
      continue;
    }
    if (!judge || !rec->gen.parsed) continue;
    const auto score = judge_quality(*judge, task, rec->instance.payload, *rec->gen.parsed);
    if (!score) {
      ++m.n_judge_unparsed;
      continue;
    }
    const bool success = *score > 0.5;
    // harmful_q: only the innocuous-seeking prompt is a quality target.
    if (task != TaskId::harmful_q || rec->scheme.r == 1) gen_perf.add(success);
    if (rec->val.verdict) {
      const int truth = task == TaskId::harmful_q ? (success ? 1 : -1)
                                                  : (success ? rec->scheme.r : -rec->scheme.r);
      val_acc.add(truth == *rec->val.verdict);
    }
  }
  m.consistency = ratio(m.n_consistent, m.n_parsed);
  m.validator_acc = ratio(val_acc.hits, val_acc.n);
  m.generator_perf = ratio(gen_perf.hits, gen_perf.n);
  return m;
}

std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string md_escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    if (ch == '|') out += '\\';
    out += ch;
  }
  return out;
}

nlohmann::ordered_json opt_json(std::optional<double> v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json opt_pct_json(std::optional<double> v) {
  if (!v) return nullptr;
  return std::stod(format_percent(v));
}

const MetricReport* find_task(const RunReport& report, TaskId task) {
  for (const auto& m : report.tasks)
    if (m.task == task) return &m;
  return nullptr;
}

std::string render_md(const RunReport& report, std::string_view label) {
  std::ostringstream out;
  out << "| Model |";
  for (auto t : kReportTaskOrder) out << ' ' << column_name(t) << " |";
  out << " Average |\n|---|";
  for (std::size_t i = 0; i <= kReportTaskOrder.size(); ++i) out << "---:|";
  out << "\n| " << md_escape(label) << " |";
  for (auto t : kReportTaskOrder) {
    const auto* m = find_task(report, t);
    out << ' ' << format_percent(m ? m->consistency : std::nullopt) << " |";
  }
  out << ' ' << format_percent(report.average_consistency) << " |\n\n";

  out << "Average over:";
  const auto avg = report.averaged_tasks();
  if (avg.empty()) out << " (none)";
  for (std::size_t i = 0; i < avg.size(); ++i) out << (i ? ", " : " ") << column_name(avg[i]);
  out << "\n\n";

  out << "| Task | Records | Labeled | Consistent | Consistency | Validator acc | Generator perf "
         "| Gen unparsed | Val unparsed | Errors | Judge unparsed |\n";
  out << "|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& m : report.tasks) {
    out << "| " << to_string(m.task) << " | " << m.n_total << " | " << m.n_parsed << " | "
        << m.n_consistent << " | " << format_percent(m.consistency) << " | "
        << format_percent(m.validator_acc) << " | " << format_percent(m.generator_perf) << " | "
        << m.n_gen_unparsed << " | " << m.n_val_unparsed << " | " << m.n_errors << " | "
        << m.n_judge_unparsed << " |\n";
  }
  if (!report.warnings.empty()) {
    out << "\nWarnings:\n";
    for (const auto& w : report.warnings) out << "- " << w << '\n';
  }
  return out.str();
}

std::string render_csv(const RunReport& report, std::string_view label) {
  std::ostringstream out;
  out << "model,task,n_total,n_labeled,n_consistent,consistency,validator_acc,generator_perf,"
         "gen_unparsed,val_unparsed,errors,judge_unparsed\n";
  const auto model = csv_escape(label);
  for (const auto& m : report.tasks) {
    out << model << ',' << to_string(m.task) << ',' << m.n_total << ',' << m.n_parsed << ','
        << m.n_consistent << ',' << format_percent(m.consistency) << ','
        << format_percent(m.validator_acc) << ',' << format_percent(m.generator_perf) << ','
        << m.n_gen_unparsed << ',' << m.n_val_unparsed << ',' << m.n_errors << ','
        << m.n_judge_unparsed << '\n';
  }
  out << model << ",average,,,," << format_percent(report.average_consistency) << ",,,,,,\n";
  return out.str();
}

std::string render_json(const RunReport& report, std::string_view label) {
  nlohmann::ordered_json j;
  j["model"] = label;
  auto tasks = nlohmann::ordered_json::array();
  for (const auto& m : report.tasks) {
    nlohmann::ordered_json t;
    t["task"] = to_string(m.task);
    t["column"] = column_name(m.task);
    t["n_total"] = m.n_total;
    t["n_labeled"] = m.n_parsed;
    t["n_consistent"] = m.n_consistent;
    t["consistency"] = opt_json(m.consistency);
    t["consistency_pct"] = opt_pct_json(m.consistency);
    t["validator_acc"] = opt_json(m.validator_acc);
    t["generator_perf"] = opt_json(m.generator_perf);
    t["parse_failures"] = {{"generator", m.n_gen_unparsed},
                           {"validator", m.n_val_unparsed},
                           {"judge", m.n_judge_unparsed}};
    t["errors"] = m.n_errors;
    tasks.push_back(std::move(t));
  }
  j["tasks"] = std::move(tasks);
  j["average_consistency"] = opt_json(report.average_consistency);
  j["average_consistency_pct"] = opt_pct_json(report.average_consistency);
  auto avg = nlohmann::ordered_json::array();
  for (auto t : report.averaged_tasks()) avg.push_back(to_string(t));
  j["averaged_tasks"] = std::move(avg);
  j["warnings"] = report.warnings;
  return j.dump(2) + "\n";
}

Split split_by_label(std::span<const TaskInstance> instances, std::span<const std::string> train,
                     std::span<const std::string> eval, const char* what,
                     std::string (*label_of)(const TaskInstance&)) {
  const std::set<std::string> train_set(train.begin(), train.end());
  const std::set<std::string> eval_set(eval.begin(), eval.end());
  for (const auto& s : eval_set)
    if (train_set.count(s)) throw ConfigError(std::string(what) + " '" + s + "' is in both lists");
  Split out;
  for (const auto& inst : instances) {
    const auto label = label_of(inst);
    if (train_set.count(label)) out.train.push_back(inst);
    else if (eval_set.count(label)) out.eval.push_back(inst);
    else
      throw ConfigError("instance " + inst.instance_id + " has " + what + " '" + label +
                        "' in neither list");
  }
  return out;
}

std::string style_of(const TaskInstance& inst) {
  const auto* p = std::get_if<StylePayload>(&inst.payload);
  if (!p) throw ConfigError("instance " + inst.instance_id + " is not a style_transfer instance");
  return p->style;
}

std::string topic_of(const TaskInstance& inst) {
  const auto* p = std::get_if<HarmfulQPayload>(&inst.payload);
  if (!p) throw ConfigError("instance " + inst.instance_id + " is not a harmful_q instance");
  return p->topic;
}

}  // namespace

std::vector<TaskId> RunReport::averaged_tasks() const {
  std::vector<TaskId> out;
  for (const auto& m : tasks)
    if (m.consistency) out.push_back(m.task);
  return out;
}

RunReport score_run(std::span<const GVRecord> records, const ScoreOptions& options) {
  std::map<TaskId, std::vector<const GVRecord*>> by_task;
  for (const auto& r : records) by_task[r.instance.task].push_back(&r);

  RunReport report;
  double sum = 0.0;
  std::size_t n = 0;
  for (auto task : kReportTaskOrder) {
    const auto it = by_task.find(task);
    if (it == by_task.end()) {
      if (std::find(options.expected_tasks.begin(), options.expected_tasks.end(), task) !=
          options.expected_tasks.end())
        report.warnings.push_back(std::string(to_string(task)) + ": no records, omitted");
      continue;
    }
    auto m = score_task(task, it->second, options.judge);
    if (is_judged_task(task) && !options.judge)
      report.warnings.push_back(std::string(to_string(task)) +
                                ": no judge backend, validator accuracy and generator performance omitted");
    if (m.consistency) {
      sum += *m.consistency;
      ++n;
    } else {
      report.warnings.push_back(std::string(to_string(task)) +
                                ": no labeled records, excluded from the average");
    }
    report.tasks.push_back(std::move(m));
  }
  if (n > 0) report.average_consistency = sum / static_cast<double>(n);
  return report;
}

ReportFormat report_format_from_string(std::string_view name) {
  if (name == "md" || name == "markdown") return ReportFormat::md;
  if (name == "csv") return ReportFormat::csv;
  if (name == "json") return ReportFormat::json;
  throw ConfigError("unknown report format '" + std::string(name) + "'");
}

std::string_view extension(ReportFormat format) {
  switch (format) {
    case ReportFormat::md: return "md";
    case ReportFormat::csv: return "csv";
    case ReportFormat::json: return "json";
  }
  return "md";
}

std::string format_percent(std::optional<double> fraction) {
  if (!fraction) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", *fraction * 100.0);
  return buf;
}

std::string render_report(const RunReport& report, ReportFormat format, std::string_view label) {
  switch (format) {
    case ReportFormat::md: return render_md(report, label);
    case ReportFormat::csv: return render_csv(report, label);
    case ReportFormat::json: return render_json(report, label);
  }
  return {};
}

std::string benchmark_row(const RunReport& report, std::string_view label) {
  std::string out(label);
  for (auto t : kReportTaskOrder) {
    const auto* m = find_task(report, t);
    out += ' ';
    out += format_percent(m ? m->consistency : std::nullopt);
  }
  out += " | ";
  out += format_percent(report.average_consistency);
  return out;
}

const std::vector<std::string>& train_styles() {
  static const std::vector<std::string> styles = {
      "analytical",  "descriptive",    "formal",        "sophisticated", "educational",
      "reflective",  "imaginative",    "simplified",    "persuasive",    "satirical",
      "eloquent",    "opinionated",    "vivid",         "inspiring",     "colloquial",
      "whimsical",   "detailed",       "factual",       "academic",      "structured",
      "journalistic", "conversational", "romantic",     "passionate",    "witty",
      "punning",     "candid",         "philosophical", "technical",     "thought-provoking",
      "inspirational", "authoritative", "poetic",       "playful",       "optimistic",
      "informative", "exaggerated",    "informal",      "lyrical",       "logical"};
  return styles;
}

const std::vector<std::string>& eval_styles() {
  static const std::vector<std::string> styles = {
      "motivational", "lighthearted", "humorous", "evocative", "wry",      "entertaining",
      "experimental", "engaging",     "creative", "narrative", "positive", "succinct"};
  return styles;
}

const std::vector<std::string>& train_topics() {
  static const std::vector<std::string> topics = {"race", "society", "stereotypes", "legal",
                                                  "toxicity"};
  return topics;
}

const std::vector<std::string>& eval_topics() {
  static const std::vector<std::string> topics = {"economy", "environment", "ethics", "physical",
                                                  "psychological"};
  return topics;
}

Split split_by_style(std::span<const TaskInstance> instances, std::span<const std::string> train,
                     std::span<const std::string> eval) {
  return split_by_label(instances, train, eval, "style", style_of);
}

Split split_by_topic(std::span<const TaskInstance> instances, std::span<const std::string> train,
                     std::span<const std::string> eval) {
  return split_by_label(instances, train, eval, "topic", topic_of);
}

Split split_qa_sources(std::vector<TaskInstance> train, std::vector<TaskInstance> eval) {
  std::set<std::string> seen;
  for (const auto& inst : train) {
    const auto* p = std::get_if<QAPayload>(&inst.payload);
    if (!p) throw ConfigError("instance " + inst.instance_id + " is not a qa instance");
    seen.insert(normalize_answer(p->question));
  }
  for (const auto& inst : eval) {
    const auto* p = std::get_if<QAPayload>(&inst.payload);
    if (!p) throw ConfigError("instance " + inst.instance_id + " is not a qa instance");
    if (seen.count(normalize_answer(p->question)))
      throw ConfigError("question of " + inst.instance_id + " also appears in the training source");
  }
  return {std::move(train), std::move(eval)};
}

Split extrapolation_split(TaskId task, const SplitConfig& config) {
  switch (task) {
    case TaskId::style_transfer: {
      const auto instances = load_instances(task, config.corpus);
      return config.train_labels.empty() && config.eval_labels.empty()
                 ? split_by_style(instances, train_styles(), eval_styles())
                 : split_by_style(instances, config.train_labels, config.eval_labels);
    }
    case TaskId::harmful_q: {
      const auto instances = load_instances(task, config.corpus);
      return config.train_labels.empty() && config.eval_labels.empty()
                 ? split_by_topic(instances, train_topics(), eval_topics())
                 : split_by_topic(instances, config.train_labels, config.eval_labels);
    }
    case TaskId::qa:
      if (!config.eval_corpus) throw ConfigError("qa split needs a second (eval) corpus");
      return split_qa_sources(load_instances(task, config.corpus),
                              load_instances(task, *config.eval_corpus));
    default:
      throw ConfigError("task " + std::string(to_string(task)) + " has no extrapolation split");
  }
}

}  // namespace gvc
