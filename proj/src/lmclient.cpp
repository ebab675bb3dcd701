#include "gvc/lmclient.hpp"

#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>

#include "gvc/errors.hpp"
#include "gvc/hash.hpp"

namespace gvc {

namespace {

int rough_token_count(std::string_view text) {
  int words = 0;
  bool in_word = false;
  for (char ch : text) {
    const bool space = ch == ' ' || ch == '\n' || ch == '\t';
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return words;
}

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

ParsedUrl split_url(const std::string& url) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, kUrl)) throw ConfigError("backend base_url '" + url + "' is not an http(s) URL");
  ParsedUrl out{m[1].str(), m[2].matched ? m[2].str() : std::string()};
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

nlohmann::ordered_json sampling_to_json(const Sampling& s) {
  nlohmann::ordered_json j;
  j["temperature"] = s.temperature;
  j["max_tokens"] = s.max_tokens;
  j["stop"] = s.stop;
  return j;
}

Sampling sampling_from_json(const nlohmann::json& j, Sampling base) {
  if (!j.is_object()) throw ConfigError("sampling must be an object");
  base.temperature = j.value("temperature", base.temperature);
  base.max_tokens = j.value("max_tokens", base.max_tokens);
  if (j.contains("stop")) base.stop = j["stop"].get<std::vector<std::string>>();
  if (base.temperature < 0) throw ConfigError("sampling.temperature must be >= 0");
  if (base.max_tokens <= 0) throw ConfigError("sampling.max_tokens must be positive");
  return base;
}

std::string BackendSpec::id() const {
  if (kind == Kind::mock) return mock.describe();
  return "http:" + model_name + "@" + base_url;
}

void BackendSpec::validate() const {
  if (kind == Kind::http) {
    if (base_url.empty()) throw ConfigError("backend.base_url is required for http backends");
    if (model_name.empty()) throw ConfigError("backend.model is required for http backends");
    split_url(base_url);
    if (retry.max_attempts < 1) throw ConfigError("backend.retry.max_attempts must be >= 1");
    if (limits.max_in_flight < 1) throw ConfigError("backend.limits.max_in_flight must be >= 1");
  }
}

BackendSpec parse_backend_spec(std::string_view text, const BackendSpec* base) {
  if (text.substr(0, 5) == "mock:") {
    BackendSpec spec;
    spec.kind = BackendSpec::Kind::mock;
    spec.mock = parse_mock_spec(text.substr(5));
    return spec;
  }
  if (text.substr(0, 7) == "http://" || text.substr(0, 8) == "https://") {
    BackendSpec spec = base && base->kind == BackendSpec::Kind::http ? *base : BackendSpec{};
    spec.kind = BackendSpec::Kind::http;
    spec.base_url = std::string(text);
    if (spec.model_name.empty()) spec.model_name = base && !base->model_name.empty() ? base->model_name : "default";
    spec.validate();
    return spec;
  }
  throw ConfigError("backend '" + std::string(text) + "' must be mock:<behavior> or an http(s) URL");
}

BackendSpec backend_from_json(const nlohmann::json& j) {
  if (j.is_string()) return parse_backend_spec(j.get<std::string>());
  if (!j.is_object()) throw ConfigError("backend must be a string or an object");
  BackendSpec spec;
  try {
    const auto kind = j.value("kind", std::string("mock"));
    if (kind == "mock") {
      spec.kind = BackendSpec::Kind::mock;
      spec.mock = parse_mock_spec(j.value("mock", std::string("oracle")));
      return spec;
    }
    if (kind != "http") throw ConfigError("backend.kind must be 'http' or 'mock'");
    spec.kind = BackendSpec::Kind::http;
    spec.base_url = j.value("base_url", std::string());
    spec.model_name = j.value("model", std::string());
    spec.api_key_env = j.value("api_key_env", std::string());
    spec.system_preamble = j.value("system_preamble", std::string());
    const auto wire = j.value("wire", std::string("completions"));
    if (wire == "completions") spec.wire = WireShape::completions;
    else if (wire == "chat") spec.wire = WireShape::chat;
    else throw ConfigError("backend.wire must be 'completions' or 'chat'");
    if (j.contains("retry")) {
      const auto& r = j["retry"];
      spec.retry.max_attempts = r.value("max_attempts", spec.retry.max_attempts);
      spec.retry.initial_delay = std::chrono::milliseconds(
          r.value("initial_delay_ms", static_cast<std::int64_t>(spec.retry.initial_delay.count())));
      spec.retry.backoff_factor = r.value("backoff_factor", spec.retry.backoff_factor);
      spec.retry.max_delay = std::chrono::milliseconds(
          r.value("max_delay_ms", static_cast<std::int64_t>(spec.retry.max_delay.count())));
    }
    if (j.contains("limits")) {
      const auto& l = j["limits"];
      spec.limits.max_in_flight = l.value("max_in_flight", spec.limits.max_in_flight);
      spec.limits.requests_per_minute = l.value("requests_per_minute", spec.limits.requests_per_minute);
    }
    spec.timeout = std::chrono::seconds(j.value("timeout_s", static_cast<std::int64_t>(spec.timeout.count())));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("backend: ") + e.what());
  }
  spec.validate();
  return spec;
}

nlohmann::ordered_json backend_to_json(const BackendSpec& spec) {
  nlohmann::ordered_json j;
  if (spec.kind == BackendSpec::Kind::mock) {
    j["kind"] = "mock";
    j["mock"] = spec.mock.describe().substr(5);
    return j;
  }
  j["kind"] = "http";
  j["base_url"] = spec.base_url;
  j["model"] = spec.model_name;
  j["api_key_env"] = spec.api_key_env;
  j["wire"] = spec.wire == WireShape::chat ? "chat" : "completions";
  j["system_preamble"] = spec.system_preamble;
  j["retry"] = {{"max_attempts", spec.retry.max_attempts},
                {"initial_delay_ms", spec.retry.initial_delay.count()},
                {"backoff_factor", spec.retry.backoff_factor},
                {"max_delay_ms", spec.retry.max_delay.count()}};
  j["limits"] = {{"max_in_flight", spec.limits.max_in_flight},
                 {"requests_per_minute", spec.limits.requests_per_minute}};
  j["timeout_s"] = spec.timeout.count();
  return j;
}

std::string CompletionRequest::idempotency_key(std::string_view backend_id) const {
  nlohmann::ordered_json j;
  j["backend"] = backend_id;
  j["prompt"] = prompt;
  j["sampling"] = sampling_to_json(sampling);
  return sha256_hex(j.dump());
}

CompletionResult MockBackend::complete(const CompletionRequest& request) {
  CompletionResult result;
  result.text = model_.reply(request.prompt);
  result.prompt_tokens = rough_token_count(request.prompt);
  result.completion_tokens = rough_token_count(result.text);
  return result;
}

RequestLimiter::RequestLimiter(RateLimits limits) : limits_(limits) {
  if (limits_.max_in_flight < 1) limits_.max_in_flight = 1;
}

RequestLimiter::Permit RequestLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_flight_ < limits_.max_in_flight; });
  ++in_flight_;
  peak_ = std::max(peak_, in_flight_);
  if (limits_.requests_per_minute > 0) {
    const auto spacing = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::minutes(1)) / limits_.requests_per_minute;
    const auto now = std::chrono::steady_clock::now();
    const auto start = std::max(now, next_start_);
    next_start_ = start + spacing;
    lock.unlock();
    std::this_thread::sleep_until(start);
  }
  return Permit(*this);
}

void RequestLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

int RequestLimiter::in_flight() const {
  std::lock_guard lock(mu_);
  return in_flight_;
}

int RequestLimiter::peak_in_flight() const {
  std::lock_guard lock(mu_);
  return peak_;
}

HttpBackend::HttpBackend(BackendSpec spec) : spec_(std::move(spec)), limiter_(spec_.limits) {
  spec_.validate();
  auto url = split_url(spec_.base_url);
  scheme_host_port_ = std::move(url.scheme_host_port);
  path_prefix_ = std::move(url.path_prefix);
}

nlohmann::json HttpBackend::request_body(const CompletionRequest& request) const {
  nlohmann::json body;
  body["model"] = spec_.model_name;
  if (spec_.wire == WireShape::chat) {
    auto messages = nlohmann::json::array();
    if (!spec_.system_preamble.empty())
      messages.push_back({{"role", "system"}, {"content", spec_.system_preamble}});
    messages.push_back({{"role", "user"}, {"content", request.prompt}});
    body["messages"] = std::move(messages);
  } else {
    body["prompt"] = spec_.system_preamble.empty() ? request.prompt
                                                   : spec_.system_preamble + "\n\n" + request.prompt;
  }
  body["temperature"] = request.sampling.temperature;
  body["max_tokens"] = request.sampling.max_tokens;
  if (!request.sampling.stop.empty()) body["stop"] = request.sampling.stop;
  return body;
}

CompletionResult HttpBackend::complete(const CompletionRequest& request) {
  CompletionResult result;
  httplib::Headers headers;
  if (!spec_.api_key_env.empty()) {
    const char* key = std::getenv(spec_.api_key_env.c_str());
    if (!key || !*key) {
      result.error = CompletionError::configuration;
      result.error_message = "environment variable " + spec_.api_key_env + " is not set";
      return result;
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const auto path = path_prefix_ + (spec_.wire == WireShape::chat ? "/chat/completions" : "/completions");
  const auto body = request_body(request).dump();

  auto delay = spec_.retry.initial_delay;
  for (int attempt = 1;; ++attempt) {
    std::string failure;
    std::chrono::milliseconds wait = delay;
    {
      auto permit = limiter_.acquire();
      ++attempts_;
      httplib::Client cli(scheme_host_port_);
      cli.set_connection_timeout(spec_.timeout);
      cli.set_read_timeout(spec_.timeout);
      cli.set_write_timeout(spec_.timeout);
      auto res = cli.Post(path, headers, body, "application/json");
      if (!res) {
        failure = "request failed: " + httplib::to_string(res.error());
      } else if (res->status == 401 || res->status == 403) {
        result.error = CompletionError::configuration;
        result.error_message = "authentication failed (HTTP " + std::to_string(res->status) + ")";
        return result;
      } else if (res->status >= 200 && res->status < 300) {
        try {
          const auto j = nlohmann::json::parse(res->body);
          const auto& choice = j.at("choices").at(0);
          result.text = spec_.wire == WireShape::chat ? choice.at("message").at("content").get<std::string>()
                                                      : choice.at("text").get<std::string>();
          if (j.contains("usage") && j["usage"].is_object()) {
            result.prompt_tokens = j["usage"].value("prompt_tokens", 0);
            result.completion_tokens = j["usage"].value("completion_tokens", 0);
          }
          return result;
        } catch (const nlohmann::json::exception& e) {
          result.error = CompletionError::transport;
          result.error_message = std::string("malformed completion body: ") + e.what();
          return result;
        }
      } else if (retryable(res->status)) {
        failure = "HTTP " + std::to_string(res->status);
        if (res->has_header("Retry-After")) {
          try {
            wait = std::chrono::seconds(std::stoi(res->get_header_value("Retry-After")));
          } catch (const std::logic_error&) {
          }
        }
      } else {
        result.error = CompletionError::transport;
        result.error_message = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
        return result;
      }
    }
    if (attempt >= spec_.retry.max_attempts) {
      result.error = CompletionError::transport;
      result.error_message = failure + " after " + std::to_string(attempt) + " attempts";
      return result;
    }
    std::this_thread::sleep_for(std::min(wait, spec_.retry.max_delay));
    delay = std::chrono::milliseconds(
        static_cast<std::int64_t>(std::llround(static_cast<double>(delay.count()) * spec_.retry.backoff_factor)));
  }
}

std::unique_ptr<Backend> make_backend(const BackendSpec& spec) {
  spec.validate();
  if (spec.kind == BackendSpec::Kind::mock) return std::make_unique<MockBackend>(spec.mock);
  return std::make_unique<HttpBackend>(spec);
}

LMClient::LMClient(const BackendSpec& spec, std::shared_ptr<ResponseCache> cache)
    : LMClient(make_backend(spec), std::move(cache)) {}

LMClient::LMClient(std::unique_ptr<Backend> backend, std::shared_ptr<ResponseCache> cache)
    : backend_(std::move(backend)), cache_(std::move(cache)), backend_id_(backend_->id()) {}

CompletionResult LMClient::complete(const CompletionRequest& request) {
  std::string key;
  if (cache_) {
    key = request.idempotency_key(backend_id_);
    if (auto hit = cache_->get(key)) {
      try {
        const auto j = nlohmann::json::parse(*hit);
        CompletionResult result;
        result.text = j.at("text").get<std::string>();
        result.prompt_tokens = j.value("prompt_tokens", 0);
        result.completion_tokens = j.value("completion_tokens", 0);
        result.cached = true;
        ++cache_hits_;
        return result;
      } catch (const nlohmann::json::exception&) {
        // unreadable value: fall through and refetch
      }
    }
  }
  ++backend_calls_;
  auto result = backend_->complete(request);
  if (cache_ && result.ok()) {
    nlohmann::ordered_json j;
    j["text"] = result.text;
    j["prompt_tokens"] = result.prompt_tokens;
    j["completion_tokens"] = result.completion_tokens;
    cache_->put(key, j.dump());
  }
  return result;
}

}  // namespace gvc
