#pragma once

// Uniform language-model backend: OpenAI-compatible HTTP endpoints or
// deterministic mocks, behind a response cache and a shared rate limiter.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gvc/cache.hpp"
#include "gvc/mock.hpp"

namespace gvc {

struct Sampling {
  double temperature = 0.0;
  int max_tokens = 256;
  std::vector<std::string> stop;

  bool operator==(const Sampling&) const = default;
};

nlohmann::ordered_json sampling_to_json(const Sampling& s);
// Missing fields keep the values already in `base`.
Sampling sampling_from_json(const nlohmann::json& j, Sampling base = {});

// completions: POST {base}/completions with {"prompt": ...}
// chat:        POST {base}/chat/completions with one user message
enum class WireShape { completions, chat };

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds initial_delay{500};
  double backoff_factor = 2.0;
  std::chrono::milliseconds max_delay{30000};
};

struct RateLimits {
  int max_in_flight = 8;
  int requests_per_minute = 0;  // 0 = unlimited
};

struct BackendSpec {
  enum class Kind { http, mock };

  Kind kind = Kind::mock;
  std::string base_url;
  std::string api_key_env;
  std::string model_name;
  WireShape wire = WireShape::completions;
  std::string system_preamble;
  MockSpec mock;
  RetryPolicy retry;
  RateLimits limits;
  std::chrono::seconds timeout{120};

  // "mock:oracle" or "http:<model>@<base_url>".
  std::string id() const;
  // Throws ConfigError.
  void validate() const;
};

// "mock:<behavior>" or an http(s) URL. A URL inherits everything except the
// base URL from `base` when given.
BackendSpec parse_backend_spec(std::string_view text, const BackendSpec* base = nullptr);
BackendSpec backend_from_json(const nlohmann::json& j);
nlohmann::ordered_json backend_to_json(const BackendSpec& spec);

struct CompletionRequest {
  std::string prompt;
  Sampling sampling;

  // SHA-256 over (backend id, prompt, sampling).
  std::string idempotency_key(std::string_view backend_id) const;
};

enum class CompletionError { none, transport, configuration };

struct CompletionResult {
  std::string text;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  bool cached = false;
  CompletionError error = CompletionError::none;
  std::string error_message;

  bool ok() const { return error == CompletionError::none; }
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  // Never throws for per-request failures; they come back in the result.
  virtual CompletionResult complete(const CompletionRequest& request) = 0;
};

class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockSpec spec) : model_(std::move(spec)) {}
  std::string id() const override { return model_.spec().describe(); }
  CompletionResult complete(const CompletionRequest& request) override;

 private:
  MockModel model_;
};

// Bounds concurrent requests and spaces request starts to a per-minute rate.
class RequestLimiter {
 public:
  explicit RequestLimiter(RateLimits limits);

  class Permit {
   public:
    explicit Permit(RequestLimiter& owner) : owner_(&owner) {}
    Permit(Permit&& other) noexcept : owner_(std::exchange(other.owner_, nullptr)) {}
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;
    Permit& operator=(Permit&&) = delete;
    ~Permit() {
      if (owner_) owner_->release();
    }

   private:
    RequestLimiter* owner_;
  };

  Permit acquire();
  int in_flight() const;
  int peak_in_flight() const;

 private:
  void release();

  RateLimits limits_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int in_flight_ = 0;
  int peak_ = 0;
  std::chrono::steady_clock::time_point next_start_{};
};

class HttpBackend final : public Backend {
 public:
  // Throws ConfigError for an unusable URL.
  explicit HttpBackend(BackendSpec spec);
  std::string id() const override { return spec_.id(); }
  CompletionResult complete(const CompletionRequest& request) override;

  // Every HTTP attempt, including retries.
  std::uint64_t attempts() const { return attempts_.load(); }
  const RequestLimiter& limiter() const { return limiter_; }

 private:
  nlohmann::json request_body(const CompletionRequest& request) const;

  BackendSpec spec_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  RequestLimiter limiter_;
  std::atomic<std::uint64_t> attempts_{0};
};

std::unique_ptr<Backend> make_backend(const BackendSpec& spec);

// Thread-safe front door used by the pipeline.
class LMClient {
 public:
  explicit LMClient(const BackendSpec& spec, std::shared_ptr<ResponseCache> cache = nullptr);
  explicit LMClient(std::unique_ptr<Backend> backend,
                    std::shared_ptr<ResponseCache> cache = nullptr);

  CompletionResult complete(const CompletionRequest& request);

  const std::string& backend_id() const { return backend_id_; }
  // Requests that missed the cache and went to the backend.
  std::uint64_t backend_calls() const { return backend_calls_.load(); }
  std::uint64_t cache_hits() const { return cache_hits_.load(); }

 private:
  std::unique_ptr<Backend> backend_;
  std::shared_ptr<ResponseCache> cache_;
  std::string backend_id_;
  std::atomic<std::uint64_t> backend_calls_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
};

}  // namespace gvc
