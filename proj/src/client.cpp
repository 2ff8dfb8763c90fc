#include "ticl/client.hpp"

#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include <httplib.h>

#include "ticl/hash.hpp"
#include "ticl/text.hpp"

namespace ticl {

// ---- parameters and descriptors -------------------------------------------

void validate(const GenerationParams& p) {
  if (p.max_new_tokens < 1) throw ValidationError("max_new_tokens must be >= 1");
  if (p.num_beams < 1) throw ValidationError("num_beams must be >= 1");
  if (p.temperature && !(std::isfinite(*p.temperature) && *p.temperature >= 0.0)) {
    throw ValidationError("temperature must be a non-negative number");
  }
}

nlohmann::json to_json(const GenerationParams& p) {
  nlohmann::json j = {{"max_new_tokens", p.max_new_tokens}, {"num_beams", p.num_beams}};
  if (p.temperature) j["temperature"] = *p.temperature;
  return j;
}

GenerationParams generation_params_from_json(const nlohmann::json& j) {
  GenerationParams p;
  p.max_new_tokens = j.value("max_new_tokens", p.max_new_tokens);
  p.num_beams = j.value("num_beams", p.num_beams);
  if (j.contains("temperature") && !j.at("temperature").is_null()) {
    p.temperature = j.at("temperature").get<double>();
  }
  validate(p);
  return p;
}

std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::http_completions: return "http-completions";
    case BackendKind::http_embeddings: return "http-embeddings";
    case BackendKind::mock: return "mock";
  }
  return "?";
}

BackendKind parse_backend_kind(std::string_view s) {
  for (auto k : {BackendKind::http_completions, BackendKind::http_embeddings, BackendKind::mock}) {
    if (to_string(k) == s) return k;
  }
  throw Error("unknown backend kind '" + std::string(s) + "'");
}

BackendDescriptor descriptor_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "backend_id",     "kind",           "model",         "endpoint",
      "endpoint_env",   "auth_env",       "context_limit_tokens", "supports_echo",
      "supports_candidate_scores", "beams_field", "completions_path", "embeddings_path",
      "tokenize_path",  "max_in_flight",  "requests_per_second", "burst", "mock"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ValidationError("unknown backend field '" + key + "'");
    }
  }
  BackendDescriptor d;
  d.backend_id = j.at("backend_id").get<std::string>();
  d.kind = parse_backend_kind(j.at("kind").get<std::string>());
  d.model = j.value("model", d.model);
  d.endpoint = j.value("endpoint", d.endpoint);
  d.endpoint_env = j.value("endpoint_env", d.endpoint_env);
  d.auth_env = j.value("auth_env", d.auth_env);
  d.context_limit_tokens = j.value("context_limit_tokens", d.context_limit_tokens);
  d.supports_echo = j.value("supports_echo", d.supports_echo);
  d.supports_candidate_scores = j.value("supports_candidate_scores", d.supports_candidate_scores);
  d.beams_field = j.value("beams_field", d.beams_field);
  d.completions_path = j.value("completions_path", d.completions_path);
  d.embeddings_path = j.value("embeddings_path", d.embeddings_path);
  d.tokenize_path = j.value("tokenize_path", d.tokenize_path);
  d.max_in_flight = j.value("max_in_flight", d.max_in_flight);
  d.requests_per_second = j.value("requests_per_second", d.requests_per_second);
  d.burst = j.value("burst", d.burst);
  if (j.contains("mock")) d.mock = j.at("mock");
  if (d.backend_id.empty()) throw ValidationError("backend_id must not be empty");
  if (d.context_limit_tokens == 0) throw ValidationError("context_limit_tokens must be positive");
  if (d.max_in_flight < 1 || d.max_in_flight > 1024) {
    throw ValidationError("max_in_flight must be in [1, 1024]");
  }
  return d;
}

nlohmann::json to_json(const BackendDescriptor& d) {
  nlohmann::json j = {{"backend_id", d.backend_id},
                      {"kind", std::string(to_string(d.kind))},
                      {"model", d.model},
                      {"endpoint", d.endpoint},
                      {"endpoint_env", d.endpoint_env},
                      {"auth_env", d.auth_env},
                      {"context_limit_tokens", d.context_limit_tokens},
                      {"supports_echo", d.supports_echo},
                      {"supports_candidate_scores", d.supports_candidate_scores},
                      {"beams_field", d.beams_field},
                      {"completions_path", d.completions_path},
                      {"embeddings_path", d.embeddings_path},
                      {"tokenize_path", d.tokenize_path},
                      {"max_in_flight", d.max_in_flight},
                      {"requests_per_second", d.requests_per_second},
                      {"burst", d.burst}};
  if (!d.mock.is_null()) j["mock"] = d.mock;
  return j;
}

// ---- transports -----------------------------------------------------------

HttpTransport::HttpTransport(std::string base_url, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {}

HttpResponse HttpTransport::post(const std::string& path, const std::string& body,
                                 const Headers& headers) {
  httplib::Client cli(base_url_);
  if (!cli.is_valid()) return {0, "invalid endpoint '" + base_url_ + "'"};
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  cli.set_write_timeout(timeout_);
  httplib::Headers h;
  for (const auto& [k, v] : headers) {
    if (k != "Content-Type") h.emplace(k, v);
  }
  auto res = cli.Post(path, h, body, "application/json");
  if (!res) return {0, httplib::to_string(res.error())};
  return {res->status, res->body};
}

HttpResponse LoopbackTransport::post(const std::string& path, const std::string& body,
                                     const Headers&) {
  return server_->handle(path, body);
}

// ---- mock server ----------------------------------------------------------

std::shared_ptr<MockServer> MockServer::from_config(const nlohmann::json& config) {
  auto server = std::make_shared<MockServer>();
  if (config.is_null()) return server;
  if (config.contains("completion")) server->default_completion_ = config.at("completion");
  if (config.contains("table")) {
    server->table_ = config.at("table").get<std::map<std::string, std::string>>();
  }
  if (config.contains("labels")) server->labels_ = config.at("labels").get<std::vector<std::string>>();
  if (config.contains("scores")) {
    server->fixed_scores_ = config.at("scores").get<std::map<std::string, double>>();
  }
  if (config.contains("embedding_dim")) server->embedding_dim_ = config.at("embedding_dim");
  return server;
}

void MockServer::set_responder(Responder r) { responder_ = std::move(r); }
void MockServer::set_scorer(Scorer s) { scorer_ = std::move(s); }
void MockServer::set_table(std::map<std::string, std::string> t) { table_ = std::move(t); }
void MockServer::set_default_completion(std::string text) { default_completion_ = std::move(text); }
void MockServer::set_embedding_dim(std::size_t dim) { embedding_dim_ = dim; }

void MockServer::fail_next(int count, int status) {
  failure_status_ = status;
  pending_failures_ = count;
}

std::string MockServer::completion_for(const std::string& prompt,
                                       const GenerationParams& params) const {
  if (responder_) return responder_(prompt, params);
  if (auto it = table_.find(sha256_hex(prompt)); it != table_.end()) return it->second;
  if (!labels_.empty()) return " " + labels_[fnv1a64(prompt) % labels_.size()];
  return default_completion_;
}

double MockServer::score_for(const std::string& prompt, const std::string& continuation) const {
  if (scorer_) return scorer_(prompt, continuation);
  if (auto it = fixed_scores_.find(continuation); it != fixed_scores_.end()) return it->second;
  return -static_cast<double>(fnv1a64(prompt + '\x1f' + continuation) % 10000) / 1000.0;
}

std::vector<double> MockServer::embedding_for(std::string_view text, std::size_t dim) {
  std::mt19937_64 rng(fnv1a64(text));
  std::vector<double> v(dim);
  for (auto& x : v) x = static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  return v;
}

namespace {

int whitespace_tokens(std::string_view s) {
  int n = 0;
  bool in_token = false;
  for (char c : s) {
    bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

HttpResponse json_response(const nlohmann::json& j) { return {200, j.dump()}; }

HttpResponse error_response(int status, const std::string& message) {
  return {status, nlohmann::json{{"error", {{"message", message}}}}.dump()};
}

}  // namespace

HttpResponse MockServer::handle(const std::string& path, const std::string& body) {
  ++requests_;
  if (pending_failures_.load() > 0) {
    --pending_failures_;
    return error_response(failure_status_.load(), "injected failure");
  }
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    return error_response(400, "request body is not JSON");
  }

  if (path == "/v1/completions") {
    if (!req.contains("prompt") || !req.at("prompt").is_string()) {
      return error_response(400, "missing prompt");
    }
    const std::string prompt = req.at("prompt");
    const int max_tokens = req.value("max_tokens", 16);
    const bool echo = req.value("echo", false);

    if (max_tokens == 0 && echo && req.contains("logprobs")) {
      // Scoring request: prompt already carries the candidate after the last cue.
      auto cue = prompt.rfind(kAnswerCue);
      std::size_t split = cue == std::string::npos ? prompt.size() : cue + kAnswerCue.size();
      std::string prefix = prompt.substr(0, split);
      std::string continuation = std::string(text::trim(std::string_view(prompt).substr(split)));
      auto logprobs = nlohmann::json{
          {"tokens", {prefix, prompt.substr(split)}},
          {"token_logprobs", {nullptr, score_for(prefix, continuation)}},
          {"text_offset", {0, split}}};
      return json_response({{"object", "text_completion"},
                            {"model", req.value("model", "")},
                            {"choices", {{{"text", prompt}, {"index", 0}, {"logprobs", logprobs}}}}});
    }

    GenerationParams params;
    params.max_new_tokens = std::max(1, max_tokens);
    if (req.contains("best_of")) params.num_beams = req.at("best_of");
    if (req.contains("num_beams")) params.num_beams = req.at("num_beams");
    if (req.contains("temperature")) params.temperature = req.at("temperature").get<double>();
    std::string completion = completion_for(prompt, params);
    std::string out = echo ? prompt + completion : completion;
    int pt = whitespace_tokens(prompt), ct = whitespace_tokens(completion);
    return json_response(
        {{"object", "text_completion"},
         {"model", req.value("model", "")},
         {"choices", {{{"text", out}, {"index", 0}, {"finish_reason", "stop"}}}},
         {"usage", {{"prompt_tokens", pt}, {"completion_tokens", ct}, {"total_tokens", pt + ct}}}});
  }

  if (path == "/v1/embeddings") {
    if (!req.contains("input") || !req.at("input").is_string()) {
      return error_response(400, "missing input");
    }
    const std::string input = req.at("input");
    return json_response(
        {{"object", "list"},
         {"model", req.value("model", "")},
         {"data", {{{"object", "embedding"}, {"index", 0},
                    {"embedding", embedding_for(input, embedding_dim_)}}}}});
  }

  if (path == "/tokenize") {
    const std::string content = req.value("content", "");
    std::vector<int> ids(static_cast<std::size_t>(whitespace_tokens(content)));
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    return json_response({{"tokens", ids}});
  }

  return error_response(404, "no route for " + path);
}

// ---- retry and rate limiting ----------------------------------------------

std::chrono::milliseconds RetryPolicy::delay_before(int attempt, double unit_noise) const {
  double ms = static_cast<double>(base_delay.count()) * std::pow(multiplier, attempt - 1);
  ms = std::min(ms, static_cast<double>(max_delay.count()));
  ms *= 1.0 + jitter * std::clamp(unit_noise, -1.0, 1.0);
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::max(0.0, ms)));
}

RateLimiter::RateLimiter(double rate, double burst)
    : rate_(rate), burst_(std::max(1.0, burst)), tokens_(std::max(1.0, burst)),
      last_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
  if (rate_ <= 0.0) return;
  std::unique_lock lock(mutex_);
  while (true) {
    auto now = std::chrono::steady_clock::now();
    tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    // Sleeping with the lock held keeps waiters in FIFO-ish order.
    std::this_thread::sleep_for(std::chrono::duration<double>((1.0 - tokens_) / rate_));
  }
}

// ---- client ---------------------------------------------------------------

namespace {

bool transient(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

struct SemaphoreGuard {
  std::counting_semaphore<1024>& sem;
  explicit SemaphoreGuard(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
  ~SemaphoreGuard() { sem.release(); }
};

std::string resolve_endpoint(const BackendDescriptor& d) {
  if (!d.endpoint_env.empty()) {
    if (const char* v = std::getenv(d.endpoint_env.c_str()); v && *v) return v;
  }
  return d.endpoint;
}

}  // namespace

ModelClient::ModelClient(BackendDescriptor descriptor, std::unique_ptr<Transport> transport,
                         RetryPolicy retry)
    : descriptor_(std::move(descriptor)),
      transport_(std::move(transport)),
      retry_(std::move(retry)),
      limiter_(descriptor_.requests_per_second, descriptor_.burst),
      in_flight_(std::clamp(descriptor_.max_in_flight, 1, 1024)) {
  if (!retry_.sleep) {
    retry_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (retry_.max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
}

std::unique_ptr<ModelClient> ModelClient::create(const BackendDescriptor& d, RetryPolicy retry) {
  std::unique_ptr<Transport> transport;
  if (d.kind == BackendKind::mock) {
    transport = std::make_unique<LoopbackTransport>(MockServer::from_config(d.mock));
  } else {
    auto endpoint = resolve_endpoint(d);
    if (endpoint.empty()) throw ValidationError("backend '" + d.backend_id + "' has no endpoint");
    transport = std::make_unique<HttpTransport>(endpoint);
  }
  return std::make_unique<ModelClient>(d, std::move(transport), std::move(retry));
}

std::string ModelClient::beams_mapping() const {
  return descriptor_.beams_field == "none" ? "num_beams not sent"
                                           : "num_beams -> " + descriptor_.beams_field;
}

nlohmann::json ModelClient::post_json(const std::string& path, const nlohmann::json& body,
                                      int* attempts) {
  Headers headers = {{"Content-Type", "application/json"}};
  if (!descriptor_.auth_env.empty()) {
    const char* key = std::getenv(descriptor_.auth_env.c_str());
    if (!key || !*key) {
      throw BackendError(BackendError::Kind::auth,
                         "environment variable " + descriptor_.auth_env + " is not set");
    }
    headers.emplace_back("Authorization", std::string("Bearer ") + key);
  }
  const std::string payload = body.dump();
  thread_local std::mt19937_64 noise_rng{std::random_device{}()};
  std::uniform_real_distribution<double> noise(-1.0, 1.0);

  std::string last_error;
  for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
    if (attempt > 1) retry_.sleep(retry_.delay_before(attempt - 1, noise(noise_rng)));
    if (attempts) *attempts = attempt;
    limiter_.acquire();
    HttpResponse res;
    {
      SemaphoreGuard guard(in_flight_);
      ++requests_;
      res = transport_->post(path, payload, headers);
    }
    if (res.status >= 200 && res.status < 300) {
      try {
        return nlohmann::json::parse(res.body);
      } catch (const nlohmann::json::exception& e) {
        throw BackendError(BackendError::Kind::malformed,
                           "backend '" + descriptor_.backend_id + "' returned invalid JSON");
      }
    }
    if (res.status == 401 || res.status == 403) {
      throw BackendError(BackendError::Kind::auth, "backend '" + descriptor_.backend_id +
                                                       "' rejected credentials (HTTP " +
                                                       std::to_string(res.status) + ")");
    }
    last_error = res.status == 0 ? "transport error: " + res.body
                                 : "HTTP " + std::to_string(res.status);
    if (!transient(res.status)) {
      throw BackendError(BackendError::Kind::http,
                         "backend '" + descriptor_.backend_id + "': " + last_error);
    }
  }
  throw BackendError(BackendError::Kind::exhausted_retries,
                     "backend '" + descriptor_.backend_id + "' failed after " +
                         std::to_string(retry_.max_attempts) + " attempts: " + last_error);
}

Completion ModelClient::complete(const RenderedPrompt& prompt, const GenerationParams& params) {
  validate(params);
  if (descriptor_.kind == BackendKind::http_embeddings) {
    throw BackendError(BackendError::Kind::unsupported,
                       "backend '" + descriptor_.backend_id + "' only serves embeddings");
  }
  if (prompt.token_count > descriptor_.context_limit_tokens) {
    throw BackendError(BackendError::Kind::over_budget,
                       "prompt has " + std::to_string(prompt.token_count) +
                           " tokens, backend '" + descriptor_.backend_id + "' accepts " +
                           std::to_string(descriptor_.context_limit_tokens));
  }
  nlohmann::json body = {{"model", descriptor_.model},
                         {"prompt", prompt.text},
                         {"max_tokens", params.max_new_tokens},
                         {"echo", descriptor_.supports_echo}};
  if (descriptor_.beams_field != "none") body[descriptor_.beams_field] = params.num_beams;
  if (params.temperature) body["temperature"] = *params.temperature;

  Completion c;
  auto start = std::chrono::steady_clock::now();
  auto res = post_json(descriptor_.completions_path, body, &c.attempts);
  c.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                     std::chrono::steady_clock::now() - start)
                     .count();
  try {
    c.text = res.at("choices").at(0).at("text").get<std::string>();
    if (res.contains("usage")) {
      const auto& u = res.at("usage");
      if (u.contains("prompt_tokens")) c.prompt_tokens = u.at("prompt_tokens").get<int>();
      if (u.contains("completion_tokens")) c.completion_tokens = u.at("completion_tokens").get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(BackendError::Kind::malformed,
                       "backend '" + descriptor_.backend_id + "': unexpected completion shape");
  }
  return c;
}

std::vector<std::pair<std::string, double>> ModelClient::score_candidates(
    const RenderedPrompt& prompt, const CandidateAnswerSet& candidates) {
  if (!descriptor_.supports_candidate_scores) {
    throw BackendError(BackendError::Kind::unsupported,
                       "backend '" + descriptor_.backend_id + "' does not expose candidate scores");
  }
  if (candidates.candidates.empty()) {
    throw BackendError(BackendError::Kind::invalid, "candidate list is empty");
  }
  if (prompt.token_count > descriptor_.context_limit_tokens) {
    throw BackendError(BackendError::Kind::over_budget, "prompt exceeds the context limit");
  }
  std::vector<std::pair<std::string, double>> out;
  for (const auto& candidate : candidates.candidates) {
    nlohmann::json body = {{"model", descriptor_.model},
                           {"prompt", prompt.text + " " + candidate},
                           {"max_tokens", 0},
                           {"echo", true},
                           {"logprobs", 0}};
    auto res = post_json(descriptor_.completions_path, body, nullptr);
    try {
      const auto& lp = res.at("choices").at(0).at("logprobs");
      const auto& logprobs = lp.at("token_logprobs");
      const auto& offsets = lp.at("text_offset");
      double total = 0.0;
      std::size_t counted = 0;
      for (std::size_t i = 0; i < logprobs.size(); ++i) {
        if (logprobs[i].is_null() || offsets.at(i).get<std::size_t>() < prompt.text.size()) continue;
        total += logprobs[i].get<double>();
        ++counted;
      }
      if (counted == 0 || !std::isfinite(total)) throw std::runtime_error("no candidate tokens");
      out.emplace_back(candidate, total);
    } catch (const std::exception&) {
      throw BackendError(BackendError::Kind::malformed,
                         "backend '" + descriptor_.backend_id + "': unusable logprobs for '" +
                             candidate + "'");
    }
  }
  return out;
}

EmbeddingVector ModelClient::embed(std::string_view input) {
  if (input.empty()) throw BackendError(BackendError::Kind::invalid, "cannot embed empty text");
  if (descriptor_.kind == BackendKind::http_completions) {
    throw BackendError(BackendError::Kind::unsupported,
                       "backend '" + descriptor_.backend_id + "' does not serve embeddings");
  }
  nlohmann::json body = {{"model", descriptor_.model}, {"input", std::string(input)}};
  auto res = post_json(descriptor_.embeddings_path, body, nullptr);
  try {
    auto values = res.at("data").at(0).at("embedding").get<std::vector<double>>();
    return EmbeddingVector(std::move(values));
  } catch (const nlohmann::json::exception&) {
    throw BackendError(BackendError::Kind::malformed,
                       "backend '" + descriptor_.backend_id + "': unexpected embedding shape");
  } catch (const ValidationError& e) {
    throw BackendError(BackendError::Kind::malformed, e.what());
  }
}

std::size_t ModelClient::count_tokens(std::string_view input) {
  if (!has_tokenizer()) {
    throw BackendError(BackendError::Kind::unsupported,
                       "backend '" + descriptor_.backend_id + "' has no tokenizer endpoint");
  }
  auto res = post_json(descriptor_.tokenize_path, {{"content", std::string(input)}}, nullptr);
  try {
    return res.at("tokens").size();
  } catch (const nlohmann::json::exception&) {
    throw BackendError(BackendError::Kind::malformed, "unexpected tokenize response");
  }
}

std::size_t argmax(const std::vector<std::pair<std::string, double>>& scores) {
  if (scores.empty()) throw Error("argmax of an empty score list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i].second > scores[best].second) best = i;
  }
  return best;
}

}  // namespace ticl
