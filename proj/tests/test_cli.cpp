#include <gtest/gtest.h>

#include <cstdio>
#include <sys/wait.h>

#include "gvc/pipeline.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using gvc::testing::TempDir;

namespace {

struct Outcome {
  int status = -1;
  std::string output;
};

Outcome gvc_run(const std::string& args) {
  const std::string cmd = std::string("'") + GVC_CLI_PATH + "' " + args + " 2>&1";
  Outcome out;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return out;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.output.append(buf, n);
  const int raw = ::pclose(pipe);
  out.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return out;
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

fs::path write_config(const TempDir& dir, const std::string& backend, int count = 20) {
  const auto path = dir / "run.json";
  gvc::testing::write_file(path, R"({"seed": 4, "output_dir": "out", "backend": ")" + backend +
                                     R"(", "emit": ["consistency"], "tasks": [{"task": "arithmetic", "count": )" +
                                     std::to_string(count) + R"(}]})");
  return path;
}

const fs::path kFixtures = fs::path(GVC_SOURCE_DIR) / "tests" / "fixtures";

}  // namespace

TEST(Cli, GenWritesRoundDirectory) {
  TempDir dir;
  const auto out = gvc_run("gen --config " + quoted(write_config(dir, "mock:oracle")));
  ASSERT_EQ(out.status, 0) << out.output;
  EXPECT_TRUE(fs::exists(dir / "out" / "round_1" / "records.jsonl"));
  EXPECT_EQ(gvc::testing::count_lines(dir / "out" / "round_1" / "finetune_consistency.jsonl"), 40u);
  EXPECT_NE(out.output.find("100.0"), std::string::npos) << out.output;
}

TEST(Cli, OverridesApply) {
  TempDir dir;
  const auto out = gvc_run("gen --config " + quoted(write_config(dir, "mock:oracle")) +
                           " --round 3 --workers 2 --backend-override mock:always_affirm --output-dir " +
                           quoted(dir / "alt"));
  ASSERT_EQ(out.status, 0) << out.output;
  const auto records = gvc::read_records_jsonl(dir / "alt" / "round_3" / "records.jsonl");
  ASSERT_EQ(records.size(), 20u);
  EXPECT_EQ(records[0].backend_id, "mock:always_affirm");
  EXPECT_EQ(records[0].round, 3);
}

TEST(Cli, ConfigErrorsExitOne) {
  TempDir dir;
  gvc::testing::write_file(dir / "bad.json", R"({"backend": "mock:oracle", "tasks": [{"task": "qa", "count": 2}]})");
  const auto out = gvc_run("gen --config " + quoted(dir / "bad.json"));
  EXPECT_EQ(out.status, 1);
  EXPECT_NE(out.output.find("tasks"), std::string::npos) << out.output;
  EXPECT_EQ(gvc_run("gen --config " + quoted(dir / "missing.json")).status, 1);
  EXPECT_EQ(gvc_run("frobnicate").status, 1);
}

TEST(Cli, TransportErrorsExitTwo) {
  TempDir dir;
  gvc::testing::write_file(dir / "run.json", R"({"output_dir": "out", "backend": {"kind": "http",
    "base_url": "http://127.0.0.1:9/v1", "model": "m", "retry": {"max_attempts": 1}},
    "tasks": [{"task": "arithmetic", "count": 2}]})");
  const auto out = gvc_run("gen --config " + quoted(dir / "run.json"));
  EXPECT_EQ(out.status, 2) << out.output;
  EXPECT_NE(out.output.find("arithmetic-"), std::string::npos) << out.output;
  EXPECT_TRUE(fs::exists(dir / "out" / "round_1" / "records.jsonl"));
}

TEST(Cli, EvalOnEmptyFileFails) {
  TempDir dir;
  gvc::testing::write_file(dir / "empty.jsonl", "");
  const auto out = gvc_run("eval --records " + quoted(dir / "empty.jsonl"));
  EXPECT_EQ(out.status, 1);
  EXPECT_NE(out.output.find("gvc:"), std::string::npos) << out.output;
}

TEST(Cli, EvalMatchesFrozenReports) {
  TempDir dir;
  const auto out = gvc_run("eval --records " + quoted(kFixtures / "records.jsonl") + " --out " + quoted(dir.path()));
  ASSERT_EQ(out.status, 0) << out.output;
  for (const char* name : {"report.md", "report.csv", "report.json"})
    EXPECT_EQ(gvc::testing::read_file(dir / name), gvc::testing::read_file(kFixtures / name)) << name;
}

TEST(Cli, EvalStdoutFormats) {
  const auto out = gvc_run("eval --records " + quoted(kFixtures / "records.jsonl") + " --format json --label fx");
  ASSERT_EQ(out.status, 0) << out.output;
  const auto j = nlohmann::json::parse(out.output);
  EXPECT_EQ(j["model"], "fx");
}

TEST(Cli, EvalWithJudgeFillsGeneratorPerformance) {
  const auto out = gvc_run("eval --records " + quoted(kFixtures / "records.jsonl") + " --format json --judge mock:oracle");
  ASSERT_EQ(out.status, 0) << out.output;
  const auto j = nlohmann::json::parse(out.output);
  for (const auto& t : j["tasks"]) {
    if (t["task"] == "style_transfer") {
      EXPECT_FALSE(t["generator_perf"].is_null());
    }
  }
}

TEST(Cli, IterateWithoutTrainerStopsAfterFirstRound) {
  TempDir dir;
  const auto out = gvc_run("iterate --rounds 3 --config " + quoted(write_config(dir, "mock:oracle")));
  EXPECT_EQ(out.status, 0) << out.output;
  EXPECT_NE(out.output.find("finetune_consistency.jsonl"), std::string::npos) << out.output;
  EXPECT_NE(out.output.find("--round 2"), std::string::npos) << out.output;
  EXPECT_TRUE(fs::exists(dir / "out" / "round_1"));
  EXPECT_FALSE(fs::exists(dir / "out" / "round_2"));
}

TEST(Cli, IterateRunsTrainerBetweenRounds) {
  TempDir dir;
  gvc::testing::write_file(dir / "trainer.sh",
                           "#!/bin/sh\n"
                           "test -f \"$1\" || exit 3\n"
                           "echo \"round $GVC_NEXT_ROUND from $1\" >> \"$(dirname \"$0\")/trainer.log\"\n"
                           "echo training done\n"
                           "echo mock:oracle\n");
  fs::permissions(dir / "trainer.sh", fs::perms::owner_all);
  const auto out = gvc_run("iterate --rounds 3 --config " + quoted(write_config(dir, "mock:noisy:0.4:1")) +
                           " --trainer-cmd " + quoted(dir / "trainer.sh"));
  ASSERT_EQ(out.status, 0) << out.output;
  for (int k = 1; k <= 3; ++k) EXPECT_TRUE(fs::exists(dir / "out" / ("round_" + std::to_string(k)))) << k;
  EXPECT_EQ(gvc::testing::count_lines(dir / "trainer.log"), 2u);
  const auto last = gvc::read_records_jsonl(dir / "out" / "round_3" / "records.jsonl");
  EXPECT_EQ(last[0].backend_id, "mock:oracle");
}

TEST(Cli, FailingTrainerIsAnError) {
  TempDir dir;
  const auto out = gvc_run("iterate --rounds 2 --config " + quoted(write_config(dir, "mock:oracle")) +
                           " --trainer-cmd false");
  EXPECT_EQ(out.status, 1) << out.output;
}

TEST(Cli, SplitWritesBothSides) {
  TempDir dir;
  const auto corpus = fs::path(GVC_SOURCE_DIR) / "data" / "style_transfer.jsonl";
  const auto out = gvc_run("split --task style_transfer --corpus " + quoted(corpus) + " --out " + quoted(dir.path()));
  ASSERT_EQ(out.status, 0) << out.output;
  EXPECT_EQ(gvc::testing::count_lines(dir / "train.jsonl") + gvc::testing::count_lines(dir / "eval.jsonl"), 104u);
  EXPECT_EQ(gvc::testing::count_lines(dir / "eval.jsonl"), 24u);
}
