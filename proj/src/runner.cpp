#include "ticl/runner.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "ticl/cache.hpp"
#include "ticl/error.hpp"
#include "ticl/hash.hpp"
#include "ticl/prompt.hpp"
#include "ticl/store.hpp"
#include "ticl/text.hpp"

namespace ticl {

std::string_view to_string(PredictionPath p) {
  return p == PredictionPath::generate_parse ? "generate-parse" : "candidate-scores";
}

PredictionPath parse_prediction_path(std::string_view s) {
  if (s == "generate-parse") return PredictionPath::generate_parse;
  if (s == "candidate-scores") return PredictionPath::candidate_scores;
  throw Error("unknown prediction path '" + std::string(s) + "'");
}

TaskSpec task_spec_from_json(const nlohmann::json& j) {
  TaskSpec s;
  s.task_id = j.at("task_id");
  s.kind = parse_task_kind(j.value("kind", "classification"));
  s.label_set = j.value("label_set", std::vector<std::string>{});
  s.metric = parse_metric_kind(j.at("metric").get<std::string>());
  s.images_per_sample = j.value("images_per_sample", 1);
  s.template_id = j.value("template_id", s.task_id);
  s.eval_split = parse_split(j.value("eval_split", "test"));
  s.folds = j.value("folds", 0);
  if (j.contains("answers_per_sample")) s.answers_per_sample = j.at("answers_per_sample").get<int>();
  return s;
}

nlohmann::json to_json(const TaskSpec& s) {
  nlohmann::json j = {{"task_id", s.task_id},
                      {"kind", std::string(to_string(s.kind))},
                      {"label_set", s.label_set},
                      {"metric", std::string(to_string(s.metric))},
                      {"images_per_sample", s.images_per_sample},
                      {"template_id", s.template_id},
                      {"eval_split", std::string(to_string(s.eval_split))},
                      {"folds", s.folds}};
  if (s.answers_per_sample) j["answers_per_sample"] = *s.answers_per_sample;
  return j;
}

// ---- configuration --------------------------------------------------------

namespace {

std::filesystem::path resolve(const nlohmann::json& j, const char* key,
                              const std::filesystem::path& base) {
  if (!j.contains(key) || j.at(key).get<std::string>().empty()) return {};
  std::filesystem::path p = j.at(key).get<std::string>();
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  static const std::vector<std::string> known = {
      "task_id",   "backend_id", "embed_backend_id", "method_id",      "selection",
      "generation", "prediction_path", "repeats_per_sample", "output_dir", "cache_dir",
      "dataset",   "verbalizations", "embeddings", "template",        "tokens",
      "backends",  "tasks"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ValidationError("unknown config field '" + key + "'");
    }
  }
  ExperimentConfig c;
  c.task_id = j.at("task_id");
  c.backend_id = j.at("backend_id");
  c.embed_backend_id = j.value("embed_backend_id", "");
  c.method_id = j.value("method_id", c.method_id);
  if (j.contains("selection")) {
    const auto& s = j.at("selection");
    c.selection.method = parse_selection_method(s.value("method", "adaptive"));
    c.selection.n = s.value("n", 0);
    c.selection.seed = s.value("seed", std::uint64_t{0});
    c.selection.balance = s.value("balance", true);
    c.selection.max_n = s.value("max_n", c.selection.max_n);
    c.reverse_order = s.value("reverse_order", false);
    if (s.contains("token_budget")) {
      c.selection.token_budget = s.at("token_budget");
      c.token_budget_set = true;
    }
  }
  if (j.contains("generation")) c.generation = generation_params_from_json(j.at("generation"));
  c.prediction_path = parse_prediction_path(j.value("prediction_path", "generate-parse"));
  c.repeats_per_sample = j.value("repeats_per_sample", 1);
  c.output_dir = resolve(j, "output_dir", base);
  c.cache_dir = resolve(j, "cache_dir", base);
  c.dataset = resolve(j, "dataset", base);
  c.verbalizations = resolve(j, "verbalizations", base);
  c.embeddings = resolve(j, "embeddings", base);
  c.template_path = resolve(j, "template", base);
  if (j.contains("tokens")) {
    c.chars_per_token = j.at("tokens").value("chars_per_token", 4.0);
    c.exact_tokens = j.at("tokens").value("exact", false);
  }
  for (const auto& b : j.value("backends", nlohmann::json::array())) {
    c.backends.push_back(descriptor_from_json(b));
  }
  for (const auto& t : j.value("tasks", nlohmann::json::array())) {
    c.tasks.push_back(task_spec_from_json(t));
  }
  if (c.repeats_per_sample < 1) throw ValidationError("repeats_per_sample must be >= 1");
  validate(c.selection);
  return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json selection = {{"method", std::string(to_string(c.selection.method))},
                              {"n", c.selection.n},
                              {"seed", c.selection.seed},
                              {"balance", c.selection.balance},
                              {"max_n", c.selection.max_n},
                              {"reverse_order", c.reverse_order}};
  if (c.token_budget_set) selection["token_budget"] = c.selection.token_budget;
  nlohmann::json j = {{"task_id", c.task_id},
                      {"backend_id", c.backend_id},
                      {"method_id", c.method_id},
                      {"selection", selection},
                      {"generation", to_json(c.generation)},
                      {"prediction_path", std::string(to_string(c.prediction_path))},
                      {"repeats_per_sample", c.repeats_per_sample},
                      {"tokens", {{"chars_per_token", c.chars_per_token}, {"exact", c.exact_tokens}}}};
  if (!c.embed_backend_id.empty()) j["embed_backend_id"] = c.embed_backend_id;
  auto put_path = [&](const char* key, const std::filesystem::path& p) {
    if (!p.empty()) j[key] = p.string();
  };
  put_path("output_dir", c.output_dir);
  put_path("cache_dir", c.cache_dir);
  put_path("dataset", c.dataset);
  put_path("verbalizations", c.verbalizations);
  put_path("embeddings", c.embeddings);
  put_path("template", c.template_path);
  j["backends"] = nlohmann::json::array();
  for (const auto& b : c.backends) j["backends"].push_back(to_json(b));
  j["tasks"] = nlohmann::json::array();
  for (const auto& t : c.tasks) j["tasks"].push_back(to_json(t));
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  return config_from_json(j, path.parent_path());
}

std::string config_fingerprint(const ExperimentConfig& cfg, const TaskSpec& spec,
                               const BackendDescriptor& backend, const std::string& template_text,
                               const std::string& data_digest) {
  // Endpoints and secret references are deliberately left out: they locate a
  // backend but do not change what it computes.
  nlohmann::json b = {{"backend_id", backend.backend_id},
                      {"kind", std::string(to_string(backend.kind))},
                      {"model", backend.model},
                      {"context_limit_tokens", backend.context_limit_tokens},
                      {"supports_echo", backend.supports_echo},
                      {"beams_field", backend.beams_field},
                      {"mock", backend.mock}};
  nlohmann::json j = {{"task", to_json(spec)},
                      {"backend", b},
                      {"method_id", cfg.method_id},
                      {"selection", {{"method", std::string(to_string(cfg.selection.method))},
                                     {"n", cfg.selection.n},
                                     {"seed", cfg.selection.seed},
                                     {"balance", cfg.selection.balance},
                                     {"token_budget", cfg.selection.token_budget},
                                     {"reverse_order", cfg.reverse_order}}},
                      {"generation", to_json(cfg.generation)},
                      {"prediction_path", std::string(to_string(cfg.prediction_path))},
                      {"repeats_per_sample", cfg.repeats_per_sample},
                      {"tokens", {{"chars_per_token", cfg.chars_per_token}, {"exact", cfg.exact_tokens}}},
                      {"template", template_text},
                      {"data", data_digest}};
  return sha256_hex(j.dump());
}

// ---- records --------------------------------------------------------------

std::vector<PredictionRecord> parse_records(std::string_view content, const std::string& source) {
  std::vector<PredictionRecord> out;
  for_each_jsonl(content, source, [&](const nlohmann::json& j, std::size_t line) {
    try {
      out.push_back(record_from_json(j));
    } catch (const ValidationError& e) {
      throw ParseError(source, line, e.what());
    }
  });
  return out;
}

std::string serialize_records(const std::vector<PredictionRecord>& records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  return out;
}

EmbeddingStore compute_embeddings(const std::vector<Sample>& samples,
                                  const VerbalizationStore& verbalizations,
                                  std::string_view method_id, ModelClient& client) {
  EmbeddingStore store;
  for (const auto& s : samples) {
    if (!text::trim(s.text).empty()) store.add(s.sample_id, Channel::text, client.embed(s.text));
    store.add(s.sample_id, Channel::image_as_text,
              client.embed(image_context(s, verbalizations, method_id)));
  }
  return store;
}

// ---- running --------------------------------------------------------------

namespace {

struct Unit {
  std::optional<int> fold;
  std::vector<Sample> eval;
  std::vector<Sample> pool;
};

struct Job {
  std::size_t unit = 0;
  const Sample* eval = nullptr;
  int repeat = 0;
};

struct JobResult {
  PredictionRecord record;
  std::string prompt;
  bool cached = false;
  std::size_t dropped = 0;
  std::size_t prompt_tokens = 0;
  bool pool_too_small = false;
  bool balance_infeasible = false;
};

const BackendDescriptor& find_backend(const ExperimentConfig& cfg, const std::string& id) {
  for (const auto& b : cfg.backends) {
    if (b.backend_id == id) return b;
  }
  throw Error("backend '" + id + "' is not configured");
}

std::string preview(const std::vector<std::string>& items) {
  std::vector<std::string> head(items.begin(), items.begin() + std::min<std::size_t>(5, items.size()));
  auto out = text::join(head, ", ");
  if (items.size() > head.size()) out += ", ... (" + std::to_string(items.size()) + " total)";
  return out;
}

std::vector<Unit> make_units(const TaskSpec& spec, const std::vector<Sample>& samples) {
  std::vector<Unit> units;
  if (spec.is_kfold()) {
    for (int k = 0; k < spec.folds; ++k) {
      Unit u;
      u.fold = k;
      for (const auto& s : samples) (s.fold == k ? u.eval : u.pool).push_back(s);
      if (u.eval.empty()) throw Error("fold " + std::to_string(k) + " has no samples");
      units.push_back(std::move(u));
    }
  } else {
    Unit u;
    for (const auto& s : samples) {
      if (s.split == spec.eval_split) u.eval.push_back(s);
      else if (s.split == Split::train) u.pool.push_back(s);
    }
    if (u.eval.empty()) {
      throw Error("task '" + spec.task_id + "' has no " + std::string(to_string(spec.eval_split)) +
                  " samples");
    }
    units.push_back(std::move(u));
  }
  return units;
}

std::string matched_gold(const std::string& parsed, const Sample& s) {
  if (!s.gold_answers) return {};
  for (const auto& a : *s.gold_answers) {
    if (text::normalize(a) == parsed) return a;
  }
  return {};
}

template <class Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::size_t error_index = count;
  std::mutex error_mutex;
  auto work = [&] {
    while (!failed.load()) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
        failed = true;
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, count));
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& input, const RunOptions& options) {
  ExperimentConfig cfg = input;
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };

  auto registry = TaskRegistry::builtin();
  for (const auto& t : cfg.tasks) registry.register_task(t);
  const TaskSpec& spec = registry.get(cfg.task_id);
  if (cfg.repeats_per_sample < 1) throw ValidationError("repeats_per_sample must be >= 1");
  validate(cfg.generation);
  if (!is_known_method(cfg.method_id)) throw ValidationError("unknown method_id '" + cfg.method_id + "'");

  const BackendDescriptor& backend = find_backend(cfg, cfg.backend_id);
  if (backend.kind == BackendKind::http_embeddings) {
    throw Error("backend '" + backend.backend_id + "' cannot generate completions");
  }
  if (cfg.prediction_path == PredictionPath::candidate_scores) {
    if (!backend.supports_candidate_scores) {
      throw Error("backend '" + backend.backend_id +
                  "' does not expose candidate scores; use prediction_path generate-parse");
    }
    if (!spec.is_classification()) {
      throw Error("candidate-scores needs a closed label set; task '" + spec.task_id + "' is open QA");
    }
  }
  if (!cfg.token_budget_set) cfg.selection.token_budget = backend.context_limit_tokens;
  if (cfg.selection.token_budget > backend.context_limit_tokens) {
    throw ValidationError("token_budget " + std::to_string(cfg.selection.token_budget) +
                          " exceeds the context limit of backend '" + backend.backend_id + "'");
  }
  validate(cfg.selection);

  const PromptTemplate tmpl =
      cfg.template_path.empty() ? default_template(spec.template_id) : load_template(cfg.template_path);
  const std::string dataset_text = read_file(cfg.dataset);
  const auto samples = parse_dataset(dataset_text, spec, cfg.dataset.string());
  const std::string verbalization_text = read_file(cfg.verbalizations);
  const auto vstore = parse_verbalizations(verbalization_text, cfg.verbalizations.string());
  if (auto missing = missing_verbalizations(samples, vstore, cfg.method_id); !missing.empty()) {
    throw Error("no '" + cfg.method_id + "' verbalization for images: " + preview(missing));
  }

  auto make_client = [&](const BackendDescriptor& d) {
    return options.client_factory ? options.client_factory(d) : ModelClient::create(d);
  };
  auto client = make_client(backend);

  // Embeddings: an existing file always wins over fetching.
  EmbeddingStore estore;
  std::string embedding_text;
  bool have_embeddings = false;
  if (!cfg.embeddings.empty() && std::filesystem::exists(cfg.embeddings)) {
    embedding_text = read_file(cfg.embeddings);
    estore = parse_embeddings(embedding_text, cfg.embeddings.string());
    have_embeddings = true;
  } else if (!cfg.embed_backend_id.empty()) {
    auto embedder = make_client(find_backend(cfg, cfg.embed_backend_id));
    estore = compute_embeddings(samples, vstore, cfg.method_id, *embedder);
    embedding_text = serialize_embeddings(estore);
    auto target = !cfg.embeddings.empty() ? cfg.embeddings : cfg.output_dir / "embeddings.jsonl";
    if (options.write_outputs) {
      std::filesystem::create_directories(target.parent_path().empty() ? "." : target.parent_path());
      write_file_atomic(target, embedding_text);
      log("wrote " + target.string());
    }
    have_embeddings = true;
  }
  auto missing_emb = missing_embeddings(samples, estore);
  if (cfg.selection.method == SelectionMethod::adaptive && cfg.selection.n > 0) {
    if (!have_embeddings) throw Error("adaptive selection needs embeddings (file or embed backend)");
    if (!missing_emb.empty()) throw Error("missing embeddings: " + preview(missing_emb));
  }
  const bool similarities_known = have_embeddings && missing_emb.empty();

  TokenCounter counter = TokenCounter::approximate(cfg.chars_per_token);
  if (cfg.exact_tokens) {
    if (!client->has_tokenizer()) {
      throw Error("backend '" + backend.backend_id + "' has no tokenizer endpoint for exact counts");
    }
    counter = TokenCounter::external(
        [c = client.get()](std::string_view t) { return c->count_tokens(t); },
        "backend:" + backend.backend_id);
  }

  const std::string template_text = serialize_template(tmpl);
  const std::string data_digest =
      sha256_hex(dataset_text + '\x1e' + verbalization_text + '\x1e' + embedding_text);
  const std::string fingerprint = config_fingerprint(cfg, spec, backend, template_text, data_digest);
  const std::string gen_key = to_json(cfg.generation).dump();
  const auto cache_dir = !cfg.cache_dir.empty() ? cfg.cache_dir : cfg.output_dir / "cache";
  PredictionCache cache(cache_dir, [&](const std::string& key, const std::string& why) {
    log("ignoring corrupt cache entry " + key + ": " + why);
  });

  auto units = make_units(spec, samples);
  std::vector<Job> jobs;
  for (std::size_t u = 0; u < units.size(); ++u) {
    for (const auto& s : units[u].eval) {
      for (int r = 0; r < cfg.repeats_per_sample; ++r) jobs.push_back({u, &s, r});
    }
  }
  std::vector<JobResult> results(jobs.size());
  const auto candidates = candidates_for(spec);
  const auto calls_before = client->requests_sent();

  auto run_job = [&](std::size_t index) {
    const Job& job = jobs[index];
    const Unit& unit = units[job.unit];
    const Sample& eval = *job.eval;
    SelectionConfig sel_cfg = cfg.selection;
    sel_cfg.seed = derive_seed(cfg.selection.seed, eval.sample_id, job.repeat);

    Selection sel = sel_cfg.method == SelectionMethod::random
                        ? select_random(unit.pool, sel_cfg, spec)
                        : select_adaptive(eval, unit.pool, sel_cfg, spec, estore);
    if (sel.similarities.empty() && !sel.samples.empty() && similarities_known) {
      for (const auto& s : sel.samples) sel.similarities.push_back(sample_similarity(eval, s, estore));
    }
    auto ordered = [&](std::span<const Sample> chosen) {
      std::vector<Sample> v(chosen.begin(), chosen.end());
      if (cfg.reverse_order) std::reverse(v.begin(), v.end());
      return v;
    };
    auto measure = [&](std::span<const Sample> chosen) {
      auto v = ordered(chosen);
      return build_prompt(spec, tmpl, v, eval, vstore, cfg.method_id, counter).token_count;
    };
    auto fit = fit_to_budget(std::move(sel), cfg.selection.token_budget, measure);
    auto in_prompt = ordered(fit.kept.samples);
    auto prompt = build_prompt(spec, tmpl, in_prompt, eval, vstore, cfg.method_id, counter);
    if (prompt.token_count > cfg.selection.token_budget) {
      throw BudgetError("rendered prompt for '" + eval.sample_id + "' exceeds the token budget");
    }

    JobResult& out = results[index];
    out.prompt = prompt.text;
    out.dropped = fit.dropped;
    out.prompt_tokens = prompt.token_count;
    out.pool_too_small = fit.kept.pool_too_small;
    out.balance_infeasible = fit.kept.balance_infeasible;

    const std::string scope = fingerprint + "|" + std::string(to_string(cfg.prediction_path)) + "|" +
                              std::to_string(job.repeat);
    const auto key = make_cache_key({eval.sample_id, prompt.text, backend.backend_id, gen_key, scope});
    if (auto hit = cache.get(key)) {
      out.record = std::move(*hit);
      out.cached = true;
      return;
    }

    PredictionRecord rec;
    rec.sample_id = eval.sample_id;
    rec.repeat = job.repeat;
    rec.prompt_hash = sha256_hex(prompt.text);
    if (!fit.kept.similarities.empty()) {
      double sum = 0.0;
      for (double v : fit.kept.similarities) sum += v;
      rec.context_similarity = sum / static_cast<double>(fit.kept.similarities.size());
    }
    if (cfg.prediction_path == PredictionPath::generate_parse) {
      auto completion = client->complete(prompt, cfg.generation);
      auto parsed = parse_answer(extract_generation(completion.text, backend.supports_echo), spec);
      rec.raw_generation = completion.text;
      rec.parsed_answer = parsed.parsed;
      rec.valid = parsed.valid;
      rec.matched = parsed.matched;
      rec.latency_ms = completion.latency_ms;
      if (!spec.is_classification() && parsed.valid) {
        if (auto gold = matched_gold(parsed.parsed, eval); !gold.empty()) rec.matched = gold;
      }
    } else {
      auto started = std::chrono::steady_clock::now();
      rec.candidate_scores = client->score_candidates(prompt, candidates);
      rec.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
      const auto& best = rec.candidate_scores[argmax(rec.candidate_scores)].first;
      rec.parsed_answer = best;
      rec.matched = best;
      rec.valid = true;
    }
    cache.put(key, rec);
    out.record = std::move(rec);
  };
  parallel_for(jobs.size(), static_cast<std::size_t>(backend.max_in_flight), run_job);

  // Single-threaded fold over completed records.
  RunResult result;
  result.backend_calls = client->requests_sent() - calls_before;
  std::vector<PredictionRecord> finals;
  std::vector<Gold> golds;
  std::vector<std::size_t> unit_of_final;
  std::size_t dropped = 0, max_tokens = 0, too_small = 0, infeasible = 0;
  for (std::size_t i = 0; i < jobs.size();) {
    std::vector<PredictionRecord> group;
    std::size_t j = i;
    for (; j < jobs.size() && jobs[j].eval == jobs[i].eval; ++j) group.push_back(results[j].record);
    finals.push_back(group.size() == 1 ? group.front() : aggregate_answers(group));
    golds.push_back(gold_of(*jobs[i].eval));
    unit_of_final.push_back(jobs[i].unit);
    i = j;
  }
  for (auto& r : results) {
    result.cache_hits += r.cached ? 1 : 0;
    dropped += r.dropped;
    max_tokens = std::max(max_tokens, r.prompt_tokens);
    too_small += r.pool_too_small ? 1 : 0;
    infeasible += r.balance_infeasible ? 1 : 0;
    result.records.push_back(std::move(r.record));
    result.prompts.push_back(std::move(r.prompt));
  }

  MetricsReport& report = result.report;
  report.task_id = spec.task_id;
  report.metric = spec.metric;
  report.n_samples = finals.size();
  report.fingerprint = fingerprint;
  report.backend_id = backend.backend_id;
  report.method_id = cfg.method_id;
  report.selection_method = std::string(to_string(cfg.selection.method));
  report.n = cfg.selection.n;

  if (spec.is_kfold()) {
    for (std::size_t u = 0; u < units.size(); ++u) {
      std::vector<PredictionRecord> fr;
      std::vector<Gold> fg;
      for (std::size_t k = 0; k < finals.size(); ++k) {
        if (unit_of_final[k] != u) continue;
        fr.push_back(finals[k]);
        fg.push_back(golds[k]);
      }
      report.per_fold.push_back(accuracy(fr, fg));
    }
    report.value = kfold_mean(report.per_fold, static_cast<std::size_t>(spec.folds));
  }
  switch (spec.metric) {
    case MetricKind::accuracy: report.value = accuracy(finals, golds); break;
    case MetricKind::macro_f1: report.value = macro_f1(finals, golds, spec.label_set); break;
    case MetricKind::vqa_exact_match: report.value = vqa_exact_match(finals, golds); break;
    case MetricKind::kfold_accuracy: break;
  }
  if (spec.is_classification()) {
    report.confusion = confusion_matrix(finals, golds, spec.label_set);
    report.confusion_labels = spec.label_set;
    report.confusion_labels.push_back("invalid");
    report.extra["accuracy"] = accuracy(finals, golds);
    report.extra["macro_f1"] = macro_f1(finals, golds, spec.label_set);
  }
  std::size_t invalid = 0;
  for (const auto& r : finals) invalid += r.valid ? 0 : 1;
  report.run = {{"prediction_path", std::string(to_string(cfg.prediction_path))},
                {"repeats_per_sample", cfg.repeats_per_sample},
                {"generation", to_json(cfg.generation)},
                {"beams", client->beams_mapping()},
                {"token_counter", counter.id()},
                {"token_budget", cfg.selection.token_budget},
                {"max_prompt_tokens", max_tokens},
                {"samples_dropped_for_budget", dropped},
                {"prompts_with_small_pool", too_small},
                {"prompts_with_unbalanced_selection", infeasible},
                {"invalid_predictions", invalid},
                {"template", {{"id", tmpl.template_id}, {"version", tmpl.version}}},
                {"model", backend.model}};

  if (options.write_outputs && !cfg.output_dir.empty()) {
    emit_report(result, ReportFormat::table, cfg.output_dir);
    emit_report(result, ReportFormat::records, cfg.output_dir);
  }
  return result;
}

std::vector<std::filesystem::path> emit_report(const RunResult& result, ReportFormat format,
                                               const std::filesystem::path& dir) {
  if (result.records.empty() || result.report.n_samples == 0) {
    throw Error("refusing to emit an empty run");
  }
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  if (format == ReportFormat::table) {
    write_file_atomic(dir / "report.json", serialize_report(result.report));
    write_file_atomic(dir / "table.txt", render_table({result.report}));
    written = {dir / "report.json", dir / "table.txt"};
  } else {
    write_file_atomic(dir / "records.jsonl", serialize_records(result.records));
    written = {dir / "records.jsonl"};
  }
  return written;
}

}  // namespace ticl
