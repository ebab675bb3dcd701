#pragma once

// OpenAI-compatible HTTP stub backed by the oracle mock. Responses can be
// scripted per call to exercise retries and error handling.

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "httplib.h"
#include "gvc/mock.hpp"

namespace gvc::testing {

class StubServer {
 public:
  // Returns an HTTP status for the n-th call (1-based); 200 means "answer".
  using StatusPlan = std::function<int(int call)>;

  StubServer() {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); };
    server_.Post("/v1/completions", handler);
    server_.Post("/v1/chat/completions", handler);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  int calls() const { return calls_.load(); }
  int peak_concurrency() const { return peak_.load(); }
  std::string last_body() const {
    std::lock_guard lock(mu_);
    return last_body_;
  }
  std::string last_authorization() const {
    std::lock_guard lock(mu_);
    return last_auth_;
  }

  void set_status_plan(StatusPlan plan) { plan_ = std::move(plan); }
  void set_delay(std::chrono::milliseconds d) { delay_ = d; }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    const int call = ++calls_;
    const int now = ++active_;
    for (int prev = peak_.load(); now > prev && !peak_.compare_exchange_weak(prev, now);) {
    }
    {
      std::lock_guard lock(mu_);
      last_body_ = req.body;
      last_auth_ = req.get_header_value("Authorization");
    }
    if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
    const int status = plan_ ? plan_(call) : 200;
    if (status != 200) {
      res.status = status;
      if (status == 429) res.set_header("Retry-After", "0");
      res.set_content("{\"error\":\"scripted\"}", "application/json");
      --active_;
      return;
    }
    const auto body = nlohmann::json::parse(req.body);
    nlohmann::json out;
    if (body.contains("messages")) {
      const auto prompt = body["messages"].back()["content"].get<std::string>();
      out["choices"] = {{{"message", {{"role", "assistant"}, {"content", oracle_reply(prompt)}}}}};
    } else {
      out["choices"] = {{{"text", oracle_reply(body["prompt"].get<std::string>())}}};
    }
    out["usage"] = {{"prompt_tokens", 10}, {"completion_tokens", 3}};
    res.set_content(out.dump(), "application/json");
    --active_;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> calls_{0};
  std::atomic<int> active_{0};
  std::atomic<int> peak_{0};
  mutable std::mutex mu_;
  std::string last_body_;
  std::string last_auth_;
  StatusPlan plan_;
  std::chrono::milliseconds delay_{0};
};

}  // namespace gvc::testing
