#include <gtest/gtest.h>

#include "support.hpp"
#include "ticl/error.hpp"
#include "ticl/runner.hpp"
#include "ticl/text.hpp"

using namespace ticl;
namespace fs = std::filesystem;

namespace {

nlohmann::json synth_config(const fx::SyntheticTask& t, const fs::path& out) {
  nlohmann::json spec = to_json(fx::synthetic_spec());
  return {{"task_id", "synth3"},
          {"backend_id", "lm"},
          {"embed_backend_id", "embedder"},
          {"method_id", "tags"},
          {"selection", {{"method", "adaptive"}, {"n", 2}, {"seed", 7}}},
          {"output_dir", out.string()},
          {"dataset", t.dataset.string()},
          {"verbalizations", t.verbalizations.string()},
          {"embeddings", (out / "emb.jsonl").string()},
          {"tasks", {spec}},
          {"backends",
           {{{"backend_id", "lm"}, {"kind", "mock"}, {"context_limit_tokens", 1024},
             {"supports_candidate_scores", true}, {"max_in_flight", 4}},
            {{"backend_id", "embedder"}, {"kind", "mock"}, {"mock", {{"embedding_dim", 16}}}}}}};
}

// Client factory whose generation backend answers through `responder`.
RunOptions with_responder(MockServer::Responder responder, std::shared_ptr<MockServer>* keep = nullptr) {
  RunOptions o;
  o.client_factory = [responder, keep](const BackendDescriptor& d) -> std::unique_ptr<ModelClient> {
    auto server = MockServer::from_config(d.mock);
    if (d.backend_id == "lm") {
      server->set_responder(responder);
      if (keep) *keep = server;
    }
    RetryPolicy retry;
    retry.sleep = [](std::chrono::milliseconds) {};
    return std::make_unique<ModelClient>(d, std::make_unique<LoopbackTransport>(server), retry);
  };
  return o;
}

struct Synth {
  fs::path dir = fx::scratch_dir("runner");
  fx::SyntheticTask task = fx::make_synthetic_task(dir / "data");
  ~Synth() { fs::remove_all(dir); }
};

}  // namespace

TEST(Runner, OracleBackendScoresPerfectly) {
  Synth s;
  auto cfg = config_from_json(synth_config(s.task, s.dir / "out"));
  auto oracle = [&](const std::string& prompt, const GenerationParams&) {
    return " " + fx::gold_for_prompt(s.task, prompt);
  };
  auto result = run_experiment(cfg, with_responder(oracle));
  EXPECT_DOUBLE_EQ(result.report.value, 1.0);
  EXPECT_EQ(result.report.n_samples, 24u);
  EXPECT_EQ(result.backend_calls, 24u);
  EXPECT_EQ(result.cache_hits, 0u);
  EXPECT_TRUE(fs::exists(s.dir / "out" / "report.json"));
  EXPECT_TRUE(fs::exists(s.dir / "out" / "table.txt"));
  EXPECT_TRUE(fs::exists(s.dir / "out" / "emb.jsonl"));  // fetched and persisted
  auto emb = load_embeddings(s.dir / "out" / "emb.jsonl");
  EXPECT_EQ(emb.size(), 120u);
  for (const auto& p : result.prompts) {
    EXPECT_TRUE(p.ends_with("Answer:"));
    EXPECT_EQ(text::count_occurrences(p, "Answer:"), 3u);
  }
  EXPECT_EQ(result.report.run.at("beams"), "num_beams -> best_of");
  EXPECT_EQ(result.report.run.at("prediction_path"), "generate-parse");
}

TEST(Runner, ConstantBackendAndWarmCache) {
  Synth s;
  auto cfg = config_from_json(synth_config(s.task, s.dir / "out"));
  auto constant = [](const std::string&, const GenerationParams&) { return std::string(" positive"); };
  auto first = run_experiment(cfg, with_responder(constant));
  EXPECT_DOUBLE_EQ(first.report.value, 0.5);
  EXPECT_NEAR(first.report.extra.at("macro_f1"), 2.0 / 9.0, 1e-12);
  auto bytes = read_file(s.dir / "out" / "report.json");

  std::vector<std::string> logs;
  auto opts = with_responder(constant);
  opts.log = [&](const std::string& m) { logs.push_back(m); };
  auto second = run_experiment(cfg, opts);
  EXPECT_EQ(second.backend_calls, 0u);
  EXPECT_EQ(second.cache_hits, 24u);
  EXPECT_EQ(read_file(s.dir / "out" / "report.json"), bytes);
  EXPECT_EQ(second.records, first.records);
}

TEST(Runner, ShotCountChangesOnlySampleBlocks) {
  Synth s;
  auto base = synth_config(s.task, s.dir / "out");
  auto constant = [](const std::string&, const GenerationParams&) { return std::string(" neutral"); };
  base["selection"]["n"] = 0;
  auto zero = run_experiment(config_from_json(base), with_responder(constant));
  base["selection"]["n"] = 2;
  base["output_dir"] = (s.dir / "out2").string();
  auto two = run_experiment(config_from_json(base), with_responder(constant));
  ASSERT_EQ(zero.prompts.size(), two.prompts.size());
  for (std::size_t i = 0; i < zero.prompts.size(); ++i) {
    const auto& z = zero.prompts[i];
    const auto& t = two.prompts[i];
    auto head = z.substr(0, z.find("\n\n"));
    auto tail = z.substr(z.rfind("\n\n"));
    EXPECT_TRUE(t.starts_with(head + "\n\n"));
    EXPECT_TRUE(t.ends_with(tail));
    EXPECT_EQ(text::count_occurrences(z, "Answer:") + 2, text::count_occurrences(t, "Answer:"));
  }
  EXPECT_NE(zero.report.fingerprint, two.report.fingerprint);
}

TEST(Runner, CapabilityMismatchFailsBeforeCalls) {
  Synth s;
  auto j = synth_config(s.task, s.dir / "out");
  j["backends"][0]["supports_candidate_scores"] = false;
  j["prediction_path"] = "candidate-scores";
  std::shared_ptr<MockServer> server;
  auto opts = with_responder([](const std::string&, const GenerationParams&) { return std::string(); },
                             &server);
  EXPECT_THROW(run_experiment(config_from_json(j), opts), Error);
  EXPECT_FALSE(server);  // no client was even built

  j = synth_config(s.task, s.dir / "out");
  j["selection"]["token_budget"] = 4096;
  EXPECT_THROW(run_experiment(config_from_json(j), opts), ValidationError);

  j = synth_config(s.task, s.dir / "out");
  j["selection"]["token_budget"] = 10;
  EXPECT_THROW(run_experiment(config_from_json(j), opts), BudgetError);
}

TEST(Runner, MissingVerbalizationsFailFast) {
  Synth s;
  auto j = synth_config(s.task, s.dir / "out");
  j["method_id"] = "caption:blip";
  EXPECT_THROW(run_experiment(config_from_json(j), with_responder({})), Error);
}

TEST(Runner, CandidateScoresPath) {
  Synth s;
  auto j = synth_config(s.task, s.dir / "out");
  j["prediction_path"] = "candidate-scores";
  RunOptions opts;
  opts.client_factory = [&](const BackendDescriptor& d) -> std::unique_ptr<ModelClient> {
    auto server = MockServer::from_config(d.mock);
    server->set_scorer([&](const std::string& prompt, const std::string& cont) {
      return cont == fx::gold_for_prompt(s.task, prompt) ? -0.1 : -2.0;
    });
    return std::make_unique<ModelClient>(d, std::make_unique<LoopbackTransport>(server));
  };
  auto result = run_experiment(config_from_json(j), opts);
  EXPECT_DOUBLE_EQ(result.report.value, 1.0);
  EXPECT_EQ(result.backend_calls, 24u * 3u);
  EXPECT_EQ(result.records[0].candidate_scores.size(), 3u);
}

TEST(Runner, KfoldTwoFolds) {
  Synth s;
  auto spec = fx::synthetic_spec();
  spec.metric = MetricKind::kfold_accuracy;
  spec.folds = 2;
  auto samples = s.task.samples;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].fold = static_cast<int>(i % 2);
    samples[i].split = Split::train;
  }
  write_file_atomic(s.task.dataset, serialize_dataset(samples));
  auto j = synth_config(s.task, s.dir / "out");
  j["tasks"] = {to_json(spec)};
  // Right on fold 0, always "neutral" on fold 1.
  auto responder = [&](const std::string& prompt, const GenerationParams&) {
    auto gold = fx::gold_for_prompt(s.task, prompt);
    auto eval = prompt.substr(prompt.rfind("\n\n"));
    int post = std::stoi(eval.substr(eval.find("Post ") + 5));
    return " " + (post % 2 == 0 ? gold : std::string("neutral"));
  };
  double neutral_odd = 0;
  for (std::size_t i = 1; i < samples.size(); i += 2) neutral_odd += *samples[i].gold_label == "neutral";
  auto result = run_experiment(config_from_json(j), with_responder(responder));
  ASSERT_EQ(result.report.per_fold.size(), 2u);
  EXPECT_DOUBLE_EQ(result.report.per_fold[0], 1.0);
  EXPECT_NEAR(result.report.per_fold[1], neutral_odd / 30.0, 1e-12);
  EXPECT_NEAR(result.report.value, (1.0 + neutral_odd / 30.0) / 2.0, 1e-12);
  // Pools exclude the evaluated fold.
  for (std::size_t i = 0; i < result.prompts.size(); ++i) {
    const auto& p = result.prompts[i];
    int eval_post = std::stoi(p.substr(p.rfind("Post ") + 5));
    for (auto pos = p.find("Tweet: Post "); pos != std::string::npos && pos < p.rfind("\n\n");
         pos = p.find("Tweet: Post ", pos + 1)) {
      EXPECT_NE(std::stoi(p.substr(pos + 12)) % 2, eval_post % 2);
    }
  }
}

TEST(Runner, RepeatsAggregateByMajority) {
  Synth s;
  auto j = synth_config(s.task, s.dir / "out");
  j["repeats_per_sample"] = 3;
  j["selection"]["method"] = "random";
  std::atomic<int> calls{0};
  // Two of every three calls are right.
  std::mutex m;
  std::map<std::string, int> per_prompt_sample;
  auto responder = [&](const std::string& prompt, const GenerationParams&) {
    ++calls;
    auto gold = fx::gold_for_prompt(s.task, prompt);
    std::lock_guard lock(m);
    int k = per_prompt_sample[gold + prompt.substr(prompt.rfind("\n\n"))]++;
    return " " + (k == 1 ? std::string("xyzzy") : gold);
  };
  auto result = run_experiment(config_from_json(j), with_responder(responder));
  EXPECT_EQ(result.records.size(), 72u);
  EXPECT_EQ(calls.load(), 72);
  EXPECT_DOUBLE_EQ(result.report.value, 1.0);
  EXPECT_EQ(result.report.n_samples, 24u);
}

TEST(Runner, ConfigRoundTripAndStrictness) {
  Synth s;
  auto j = synth_config(s.task, s.dir / "out");
  auto cfg = config_from_json(j);
  auto again = config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(again), to_json(cfg));
  j["selection"]["n"] = 5;
  EXPECT_THROW(config_from_json(j), ValidationError);
  j = synth_config(s.task, s.dir / "out");
  j["shots"] = 2;
  EXPECT_THROW(config_from_json(j), ValidationError);
  j = synth_config(s.task, s.dir / "out");
  j["dataset"] = "rel/data.jsonl";
  EXPECT_EQ(config_from_json(j, "/base").dataset, fs::path("/base/rel/data.jsonl"));
}

TEST(Runner, FingerprintIgnoresEndpoints) {
  auto spec = fx::synthetic_spec();
  ExperimentConfig cfg;
  BackendDescriptor b;
  b.backend_id = "x";
  auto f = config_fingerprint(cfg, spec, b, "tmpl", "data");
  b.endpoint = "http://elsewhere:9";
  b.auth_env = "OTHER_KEY";
  EXPECT_EQ(config_fingerprint(cfg, spec, b, "tmpl", "data"), f);
  EXPECT_NE(config_fingerprint(cfg, spec, b, "tmpl2", "data"), f);
  cfg.selection.seed = 1;
  EXPECT_NE(config_fingerprint(cfg, spec, b, "tmpl", "data"), f);
}

TEST(Runner, RecordsRoundTrip) {
  PredictionRecord r;
  r.sample_id = "a";
  r.matched = "x";
  r.valid = true;
  r.candidate_scores = {{"x", -1.0}};
  auto text = serialize_records({r, r});
  EXPECT_EQ(parse_records(text), (std::vector<PredictionRecord>{r, r}));
  EXPECT_THROW(parse_records("{}\n"), ParseError);
}

TEST(Runner, EmitRefusesEmptyRun) {
  RunResult empty;
  auto dir = fx::scratch_dir("emit");
  EXPECT_THROW(emit_report(empty, ReportFormat::table, dir), Error);
  std::filesystem::remove_all(dir);
}
