#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ticl/core.hpp"
#include "ticl/error.hpp"
#include "ticl/prompt.hpp"

namespace ticl {

struct GenerationParams {
  int max_new_tokens = 10;
  int num_beams = 10;
  std::optional<double> temperature;  // absent: backend default

  bool operator==(const GenerationParams&) const = default;
};

void validate(const GenerationParams& p);
nlohmann::json to_json(const GenerationParams& p);
GenerationParams generation_params_from_json(const nlohmann::json& j);

enum class BackendKind { http_completions, http_embeddings, mock };
std::string_view to_string(BackendKind k);
BackendKind parse_backend_kind(std::string_view s);

/// Connection and capability description of one backend. Secrets are never
/// stored here: `auth_env` names the environment variable holding the key.
struct BackendDescriptor {
  std::string backend_id;
  BackendKind kind = BackendKind::mock;
  std::string model;
  std::string endpoint;      // base URL, e.g. http://127.0.0.1:8080
  std::string endpoint_env;  // if set and present, overrides `endpoint`
  std::string auth_env;
  std::size_t context_limit_tokens = 512;
  bool supports_echo = false;  // completions repeat the prompt before the answer
  bool supports_candidate_scores = false;
  std::string beams_field = "best_of";  // request field carrying num_beams, or "none"
  std::string completions_path = "/v1/completions";
  std::string embeddings_path = "/v1/embeddings";
  std::string tokenize_path;  // empty: no tokenizer endpoint
  int max_in_flight = 4;
  double requests_per_second = 0.0;  // 0: unlimited
  double burst = 1.0;
  nlohmann::json mock;  // MockServer configuration for kind == mock
};

BackendDescriptor descriptor_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BackendDescriptor& d);

class BackendError : public Error {
 public:
  enum class Kind { over_budget, exhausted_retries, auth, malformed, unsupported, http, invalid };

  BackendError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct HttpResponse {
  int status = 0;  // 0: transport failure
  std::string body;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& path, const std::string& body,
                            const Headers& headers) = 0;
};

/// Plain HTTP(S) transport backed by cpp-httplib.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::string base_url, std::chrono::seconds timeout = std::chrono::seconds(60));
  HttpResponse post(const std::string& path, const std::string& body,
                    const Headers& headers) override;

 private:
  std::string base_url_;
  std::chrono::seconds timeout_;
};

/// In-process backend speaking the same completion, embedding and tokenize
/// schemas as the HTTP backends. Responses are a pure function of the request
/// bytes unless failures are injected.
class MockServer {
 public:
  using Responder = std::function<std::string(const std::string& prompt, const GenerationParams&)>;
  using Scorer = std::function<double(const std::string& prompt, const std::string& continuation)>;

  MockServer() = default;
  /// Options: completion (constant text), table {sha256(prompt): text},
  /// labels (pick by prompt hash), scores {candidate: score}, embedding_dim.
  static std::shared_ptr<MockServer> from_config(const nlohmann::json& config);

  void set_responder(Responder r);
  void set_scorer(Scorer s);
  void set_table(std::map<std::string, std::string> by_prompt_sha256);
  void set_default_completion(std::string text);
  void set_embedding_dim(std::size_t dim);
  /// The next `count` requests fail with `status` before being handled.
  void fail_next(int count, int status = 503);

  HttpResponse handle(const std::string& path, const std::string& body);

  std::size_t requests() const { return requests_.load(); }

  static std::vector<double> embedding_for(std::string_view text, std::size_t dim);

 private:
  std::string completion_for(const std::string& prompt, const GenerationParams& params) const;
  double score_for(const std::string& prompt, const std::string& continuation) const;

  Responder responder_;
  Scorer scorer_;
  std::map<std::string, std::string> table_;
  std::map<std::string, double> fixed_scores_;
  std::vector<std::string> labels_;
  std::string default_completion_;
  std::size_t embedding_dim_ = 64;
  std::atomic<int> pending_failures_{0};
  std::atomic<int> failure_status_{503};
  std::atomic<std::size_t> requests_{0};
};

class LoopbackTransport : public Transport {
 public:
  explicit LoopbackTransport(std::shared_ptr<MockServer> server) : server_(std::move(server)) {}
  HttpResponse post(const std::string& path, const std::string& body,
                    const Headers& headers) override;

 private:
  std::shared_ptr<MockServer> server_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{200};
  double multiplier = 2.0;
  double jitter = 0.25;  // +/- fraction of the delay
  std::chrono::milliseconds max_delay{5000};
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to sleep_for

  std::chrono::milliseconds delay_before(int attempt, double unit_noise) const;
};

/// Token bucket. `rate` tokens per second, capacity `burst`; rate 0 disables.
class RateLimiter {
 public:
  RateLimiter(double rate, double burst);
  void acquire();

 private:
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mutex_;
};

struct Completion {
  std::string text;  // verbatim backend output
  std::int64_t latency_ms = 0;
  int attempts = 0;
  std::optional<int> prompt_tokens;
  std::optional<int> completion_tokens;
};

/// Uniform client over one backend: pre-flight budget check, bounded
/// in-flight requests, rate limiting and retries with backoff.
class ModelClient {
 public:
  ModelClient(BackendDescriptor descriptor, std::unique_ptr<Transport> transport,
              RetryPolicy retry = {});

  /// HTTP transport for http kinds; loopback MockServer for mock.
  static std::unique_ptr<ModelClient> create(const BackendDescriptor& descriptor,
                                             RetryPolicy retry = {});

  Completion complete(const RenderedPrompt& prompt, const GenerationParams& params);

  /// Log-likelihood of each candidate continuing the prompt.
  std::vector<std::pair<std::string, double>> score_candidates(const RenderedPrompt& prompt,
                                                               const CandidateAnswerSet& candidates);

  EmbeddingVector embed(std::string_view text);

  /// Token count from the backend's tokenizer endpoint.
  std::size_t count_tokens(std::string_view text);
  bool has_tokenizer() const { return !descriptor_.tokenize_path.empty(); }

  const BackendDescriptor& descriptor() const { return descriptor_; }
  /// Which request field carries num_beams, for run metadata.
  std::string beams_mapping() const;
  std::size_t requests_sent() const { return requests_.load(); }

 private:
  nlohmann::json post_json(const std::string& path, const nlohmann::json& body, int* attempts);

  BackendDescriptor descriptor_;
  std::unique_ptr<Transport> transport_;
  RetryPolicy retry_;
  RateLimiter limiter_;
  std::counting_semaphore<1024> in_flight_;
  std::atomic<std::size_t> requests_{0};
};

/// Index of the highest score, first on ties.
std::size_t argmax(const std::vector<std::pair<std::string, double>>& scores);

}  // namespace ticl
