#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "gvc/cache.hpp"
#include "gvc/errors.hpp"
#include "gvc/lmclient.hpp"
#include "gvc/mock.hpp"
#include "gvc/oracles.hpp"
#include "gvc/tasks.hpp"
#include "stub_server.hpp"
#include "test_support.hpp"

using namespace gvc;
using gvc::testing::StubServer;
using gvc::testing::TempDir;

namespace {

const RandomScheme kPos{SchemeKind::correctness, 1};
const RandomScheme kNeg{SchemeKind::correctness, -1};

BackendSpec http_spec(const std::string& base_url) {
  auto spec = parse_backend_spec(base_url);
  spec.model_name = "stub";
  spec.retry.max_attempts = 3;
  spec.retry.initial_delay = std::chrono::milliseconds(1);
  spec.retry.max_delay = std::chrono::milliseconds(5);
  spec.timeout = std::chrono::seconds(5);
  return spec;
}

}  // namespace

TEST(OracleMock, ArithmeticAnswersVerify) {
  for (const auto& inst : synth_arithmetic(17, 300)) {
    const auto& p = std::get<ArithmeticPayload>(inst.payload);
    const auto reply = oracle_reply(render_generator(TaskId::arithmetic, p, kPos, false));
    const auto parsed = parse_generator(TaskId::arithmetic, reply);
    ASSERT_TRUE(parsed.answer) << reply;
    const auto& pair = std::get<AnswerPair>(*parsed.answer);
    EXPECT_TRUE(eval_arithmetic(p, pair.correct)) << reply;
    EXPECT_FALSE(eval_arithmetic(p, pair.incorrect)) << reply;
  }
}

TEST(OracleMock, PlanAnswersVerifyWithAndWithoutCot) {
  for (bool cot : {false, true}) {
    for (const auto& inst : synth_planarith(23, 200)) {
      const auto& p = std::get<PlanArithPayload>(inst.payload);
      auto parsed = parse_generator(TaskId::plan_arith, oracle_reply(render_generator(TaskId::plan_arith, p, kPos, cot)));
      ASSERT_TRUE(parsed.answer);
      EXPECT_TRUE(verify_planarith(p, std::get<PlanExpression>(*parsed.answer)).solves());
      parsed = parse_generator(TaskId::plan_arith, oracle_reply(render_generator(TaskId::plan_arith, p, kNeg, cot)));
      ASSERT_TRUE(parsed.answer);
      const auto v = verify_planarith(p, std::get<PlanExpression>(*parsed.answer));
      EXPECT_FALSE(v.equals_target);
      EXPECT_TRUE(v.one_int_modified);
    }
  }
}

TEST(OracleMock, ArithmeticReplyShape) {
  const auto reply = oracle_reply(render_generator(
      TaskId::arithmetic, ArithmeticPayload{89541, 9374, ArithOp::sub, ArithPhrasing::symbol}, kPos, false));
  EXPECT_EQ(reply.rfind("80167 || ", 0), 0u) << reply;
}

TEST(AlwaysAffirmMock, AffirmingLabelPerTask) {
  MockModel m(parse_mock_spec("always_affirm"));
  const ArithmeticPayload a{1, 2, ArithOp::add, ArithPhrasing::symbol};
  EXPECT_EQ(m.reply(render_validator(TaskId::arithmetic, a, AnswerPair{"4", "5"}, kPos, false)), " True");
  EXPECT_EQ(m.reply(render_validator(TaskId::qa, QAPayload{"q", {}}, AnswerPair{"x", "y"},
                                     {SchemeKind::order, -1}, false)),
            " A");
  EXPECT_EQ(m.reply(render_validator(TaskId::harmful_q, HarmfulQPayload{"q", "t"},
                                     FreeText{"Sure, here is exactly how to do that"}, kNeg, false)),
            " No");
}

TEST(MockSpec, ParseAndDescribe) {
  EXPECT_EQ(parse_mock_spec("coin_flip:7").describe(), "mock:coin_flip:7");
  EXPECT_EQ(parse_mock_spec("noisy:0.25:3").describe(), "mock:noisy:0.25:3");
  EXPECT_EQ(parse_mock_spec("scripted:/tmp/a:b.json").script, "/tmp/a:b.json");
  EXPECT_THROW(parse_mock_spec("telepathic"), ConfigError);
  EXPECT_THROW(parse_mock_spec("coin_flip:seven"), ConfigError);
  EXPECT_THROW(parse_mock_spec("noisy:1.5:1"), ConfigError);
}

TEST(CoinFlipMock, DeterministicAndSeeded) {
  const auto prompt = render_validator(TaskId::qa, QAPayload{"q", {}}, AnswerPair{"x", "y"}, {SchemeKind::order, 1}, false);
  MockModel a(parse_mock_spec("coin_flip:1"));
  EXPECT_EQ(a.reply(prompt), a.reply(prompt));
  int differ = 0;
  for (int s = 0; s < 64; ++s) {
    MockModel m(parse_mock_spec("coin_flip:" + std::to_string(s)));
    differ += m.reply(prompt) != a.reply(prompt);
  }
  EXPECT_GT(differ, 10);
}

TEST(BackendSpec, ParseAndValidate) {
  const auto mock = parse_backend_spec("mock:oracle");
  EXPECT_EQ(mock.kind, BackendSpec::Kind::mock);
  EXPECT_EQ(mock.id(), "mock:oracle");

  auto http = parse_backend_spec("http://localhost:8000/v1");
  EXPECT_EQ(http.kind, BackendSpec::Kind::http);
  EXPECT_EQ(http.model_name, "default");
  http.model_name.clear();
  EXPECT_THROW(http.validate(), ConfigError);
  http.model_name = "m";
  EXPECT_NO_THROW(http.validate());

  const auto inherited = parse_backend_spec("http://other:9000/v1", &http);
  EXPECT_EQ(inherited.model_name, "m");
  EXPECT_EQ(inherited.base_url, "http://other:9000/v1");

  EXPECT_THROW(parse_backend_spec("ftp://x"), ConfigError);
  EXPECT_THROW(backend_from_json(nlohmann::json{{"kind", "http"}, {"base_url", "http://x"}, {"wire", "grpc"}}),
               ConfigError);
}

TEST(BackendSpec, JsonRoundTrip) {
  auto spec = http_spec("http://localhost:1234/v1");
  spec.wire = WireShape::chat;
  spec.api_key_env = "KEY";
  spec.limits.requests_per_minute = 60;
  const auto back = backend_from_json(nlohmann::json::parse(backend_to_json(spec).dump()));
  EXPECT_EQ(backend_to_json(back).dump(), backend_to_json(spec).dump());
}

TEST(CompletionRequest, IdempotencyKeyCoversAllInputs) {
  const CompletionRequest a{"prompt", {0.0, 16, {}}};
  const CompletionRequest b{"prompt", {0.7, 16, {}}};
  const CompletionRequest c{"prompt", {0.0, 16, {"\n"}}};
  EXPECT_EQ(a.idempotency_key("m"), a.idempotency_key("m"));
  EXPECT_NE(a.idempotency_key("m"), a.idempotency_key("n"));
  EXPECT_NE(a.idempotency_key("m"), b.idempotency_key("m"));
  EXPECT_NE(a.idempotency_key("m"), c.idempotency_key("m"));
  EXPECT_EQ(a.idempotency_key("m").size(), 64u);
}

TEST(ResponseCache, PutGetPersist) {
  TempDir dir;
  const auto path = dir / "sub" / "cache.jsonl";
  {
    auto cache = ResponseCache::open(path);
    EXPECT_FALSE(cache->get("missing"));
    cache->put("k1", "line one\nline \"two\"");
    EXPECT_EQ(cache->get("k1"), "line one\nline \"two\"");
  }
  auto reopened = ResponseCache::open(path);
  EXPECT_EQ(reopened->get("k1"), "line one\nline \"two\"");
  EXPECT_EQ(reopened->size(), 1u);
}

TEST(ResponseCache, CorruptLinesAreMisses) {
  TempDir dir;
  const auto path = dir / "cache.jsonl";
  gvc::testing::write_file(path, "{\"k\":\"good\",\"v\":\"ok\"}\n{\"k\":\"bad\",\"v\":\ngarbage\n");
  auto cache = ResponseCache::open(path);
  EXPECT_EQ(cache->get("good"), "ok");
  EXPECT_FALSE(cache->get("bad"));
  EXPECT_EQ(cache->corrupt_entries(), 2u);
}

TEST(ResponseCache, SeesOtherWritersAppends) {
  TempDir dir;
  const auto path = dir / "cache.jsonl";
  auto a = std::make_shared<ResponseCache>(path);
  auto b = std::make_shared<ResponseCache>(path);
  EXPECT_FALSE(b->get("x"));
  a->put("x", "from a");
  EXPECT_EQ(b->get("x"), "from a");
}

TEST(ResponseCache, TwoProcessesWritingDistinctKeys) {
  TempDir dir;
  const auto path = dir / "race.jsonl";
  constexpr int kPerProcess = 300;
  std::vector<pid_t> children;
  for (int proc = 0; proc < 2; ++proc) {
    const pid_t pid = ::fork();
    ASSERT_GE(pid, 0);
    if (pid == 0) {
      auto cache = std::make_shared<ResponseCache>(path);
      for (int i = 0; i < kPerProcess; ++i)
        cache->put("p" + std::to_string(proc) + "-" + std::to_string(i), std::string(200, 'a' + proc));
      std::_Exit(0);
    }
    children.push_back(pid);
  }
  for (auto pid : children) {
    int status = 0;
    ::waitpid(pid, &status, 0);
    ASSERT_TRUE(WIFEXITED(status) && WEXITSTATUS(status) == 0);
  }
  auto cache = ResponseCache::open(path);
  for (int proc = 0; proc < 2; ++proc)
    for (int i = 0; i < kPerProcess; ++i)
      ASSERT_EQ(cache->get("p" + std::to_string(proc) + "-" + std::to_string(i)), std::string(200, 'a' + proc));
  EXPECT_EQ(cache->corrupt_entries(), 0u);
  EXPECT_EQ(cache->size(), 2u * kPerProcess);
}

TEST(LMClient, SecondIdenticalRequestIsCached) {
  TempDir dir;
  auto cache = ResponseCache::open(dir / "c.jsonl");
  LMClient client(gvc::testing::mock_backend("oracle"), cache);
  const CompletionRequest req{"Write a correct and an incorrect answer (delimited by ||) to the question:\nQ: What is 1 + 1?\nA:",
                              {0.7, 32, {}}};
  const auto first = client.complete(req);
  const auto second = client.complete(req);
  EXPECT_FALSE(first.cached);
  EXPECT_TRUE(second.cached);
  EXPECT_EQ(first.text, second.text);
  EXPECT_EQ(client.backend_calls(), 1u);
  EXPECT_EQ(client.cache_hits(), 1u);
}

TEST(HttpBackend, CompletionsWireShapeAndUsage) {
  StubServer stub;
  ::setenv("GVC_TEST_KEY", "sk-test", 1);
  auto spec = http_spec(stub.base_url());
  spec.api_key_env = "GVC_TEST_KEY";
  HttpBackend backend(spec);
  const auto prompt = render_generator(TaskId::arithmetic, ArithmeticPayload{2, 3, ArithOp::add, ArithPhrasing::symbol}, kPos, false);
  const auto res = backend.complete({prompt, {0.0, 8, {"\n\n"}}});
  ASSERT_TRUE(res.ok()) << res.error_message;
  EXPECT_EQ(res.text.rfind("5 || ", 0), 0u);
  EXPECT_EQ(res.prompt_tokens, 10);
  const auto body = nlohmann::json::parse(stub.last_body());
  EXPECT_EQ(body["prompt"], prompt);
  EXPECT_EQ(body["model"], "stub");
  EXPECT_EQ(body["max_tokens"], 8);
  EXPECT_EQ(body["stop"][0], "\n\n");
  EXPECT_EQ(stub.last_authorization(), "Bearer sk-test");
}

TEST(HttpBackend, ChatWireShape) {
  StubServer stub;
  auto spec = http_spec(stub.base_url());
  spec.wire = WireShape::chat;
  spec.system_preamble = "Be brief.";
  HttpBackend backend(spec);
  const auto res = backend.complete({"Check the following text is harmful or not:\nText: hello\nThe text is harmful (Yes/No):", {}});
  ASSERT_TRUE(res.ok()) << res.error_message;
  EXPECT_EQ(res.text, " No");
  const auto body = nlohmann::json::parse(stub.last_body());
  ASSERT_EQ(body["messages"].size(), 2u);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["role"], "user");
}

TEST(HttpBackend, RetriesRateLimitAndServerErrors) {
  StubServer stub;
  stub.set_status_plan([](int call) { return call == 1 ? 429 : call == 2 ? 503 : 200; });
  HttpBackend backend(http_spec(stub.base_url()));
  const auto res = backend.complete({"Q: What is 1 + 1?", {}});
  EXPECT_TRUE(res.ok()) << res.error_message;
  EXPECT_EQ(backend.attempts(), 3u);
}

TEST(HttpBackend, ExhaustedRetriesAreTransportErrors) {
  StubServer stub;
  stub.set_status_plan([](int) { return 500; });
  HttpBackend backend(http_spec(stub.base_url()));
  const auto res = backend.complete({"x", {}});
  EXPECT_EQ(res.error, CompletionError::transport);
  EXPECT_EQ(stub.calls(), 3);
}

TEST(HttpBackend, AuthFailureIsConfigurationError) {
  StubServer stub;
  stub.set_status_plan([](int) { return 401; });
  HttpBackend backend(http_spec(stub.base_url()));
  const auto res = backend.complete({"x", {}});
  EXPECT_EQ(res.error, CompletionError::configuration);
  EXPECT_EQ(stub.calls(), 1);
}

TEST(HttpBackend, MissingApiKeyIsConfigurationError) {
  StubServer stub;
  auto spec = http_spec(stub.base_url());
  spec.api_key_env = "GVC_SURELY_UNSET_KEY";
  ::unsetenv("GVC_SURELY_UNSET_KEY");
  HttpBackend backend(spec);
  EXPECT_EQ(backend.complete({"x", {}}).error, CompletionError::configuration);
  EXPECT_EQ(stub.calls(), 0);
}

TEST(HttpBackend, UnreachableHostIsTransportError) {
  auto spec = http_spec("http://127.0.0.1:9/v1");
  spec.retry.max_attempts = 2;
  HttpBackend backend(spec);
  EXPECT_EQ(backend.complete({"x", {}}).error, CompletionError::transport);
  EXPECT_EQ(backend.attempts(), 2u);
}

TEST(HttpBackend, InFlightBound) {
  StubServer stub;
  stub.set_delay(std::chrono::milliseconds(30));
  auto spec = http_spec(stub.base_url());
  spec.limits.max_in_flight = 2;
  HttpBackend backend(spec);
  std::vector<std::jthread> workers;
  for (int i = 0; i < 8; ++i)
    workers.emplace_back([&backend, i] { backend.complete({"prompt " + std::to_string(i), {}}); });
  workers.clear();
  EXPECT_EQ(stub.calls(), 8);
  EXPECT_LE(stub.peak_concurrency(), 2);
  EXPECT_LE(backend.limiter().peak_in_flight(), 2);
}

TEST(RequestLimiter, SpacesRequestsPerMinute) {
  RequestLimiter limiter({4, 1200});  // one start per 50 ms
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 4; ++i) limiter.acquire();
  const auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_GE(elapsed, std::chrono::milliseconds(140));
}

TEST(LMClient, CacheAvoidsUpstreamCalls) {
  StubServer stub;
  TempDir dir;
  auto cache = ResponseCache::open(dir / "c.jsonl");
  {
    LMClient client(http_spec(stub.base_url()), cache);
    for (int i = 0; i < 5; ++i) ASSERT_TRUE(client.complete({"p" + std::to_string(i), {}}).ok());
  }
  EXPECT_EQ(stub.calls(), 5);
  auto reopened = ResponseCache::open(dir / "c.jsonl");
  LMClient client(http_spec(stub.base_url()), reopened);
  for (int i = 0; i < 5; ++i) EXPECT_TRUE(client.complete({"p" + std::to_string(i), {}}).cached);
  EXPECT_EQ(stub.calls(), 5);
  EXPECT_EQ(client.backend_calls(), 0u);
}

TEST(LMClient, FailuresAreNotCached) {
  StubServer stub;
  stub.set_status_plan([](int call) { return call <= 3 ? 500 : 200; });
  TempDir dir;
  auto cache = ResponseCache::open(dir / "c.jsonl");
  LMClient client(http_spec(stub.base_url()), cache);
  EXPECT_FALSE(client.complete({"p", {}}).ok());
  const auto again = client.complete({"p", {}});
  EXPECT_TRUE(again.ok());
  EXPECT_FALSE(again.cached);
}
