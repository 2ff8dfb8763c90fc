// ticl: ingest datasets, verbalize images, embed samples, run experiments and
// tabulate reports.

#include <filesystem>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "ticl/error.hpp"
#include "ticl/metrics.hpp"
#include "ticl/prompt.hpp"
#include "ticl/runner.hpp"
#include "ticl/store.hpp"
#include "ticl/verbalizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ticl::TaskRegistry registry_with(const std::string& tasks_file) {
  auto registry = ticl::TaskRegistry::builtin();
  if (!tasks_file.empty()) {
    for (const auto& t : json::parse(ticl::read_file(tasks_file))) {
      registry.register_task(ticl::task_spec_from_json(t));
    }
  }
  return registry;
}

ticl::BackendDescriptor load_backend(const std::string& path, const std::string& id) {
  auto j = json::parse(ticl::read_file(path));
  if (j.is_object() && j.contains("backends")) j = j.at("backends");
  if (j.is_object()) return ticl::descriptor_from_json(j);
  for (const auto& b : j) {
    if (id.empty() || b.at("backend_id") == id) return ticl::descriptor_from_json(b);
  }
  throw ticl::Error("backend '" + id + "' not found in " + path);
}

struct IngestArgs {
  std::string task, dataset, out, tasks_file, verbalizations, embeddings, method;
};

int ingest(const IngestArgs& a) {
  auto registry = registry_with(a.tasks_file);
  const auto& spec = registry.get(a.task);
  auto samples = ticl::load_dataset(a.dataset, spec);

  std::map<std::string, int> per_split, per_label, per_fold;
  for (const auto& s : samples) {
    ++per_split[std::string(ticl::to_string(s.split))];
    if (s.gold_label) ++per_label[*s.gold_label];
    if (s.fold) ++per_fold[std::to_string(*s.fold)];
  }
  json summary = {{"task_id", spec.task_id}, {"samples", samples.size()}, {"splits", per_split}};
  if (!per_label.empty()) summary["labels"] = per_label;
  if (!per_fold.empty()) summary["folds"] = per_fold;

  if (!a.verbalizations.empty()) {
    auto vstore = ticl::load_verbalizations(a.verbalizations);
    summary["verbalizations"] = vstore.size();
    if (!a.method.empty()) {
      auto missing = ticl::missing_verbalizations(samples, vstore, a.method);
      summary["missing_verbalizations"] = missing;
    }
  }
  if (!a.embeddings.empty()) {
    auto estore = ticl::load_embeddings(a.embeddings);
    summary["embeddings"] = estore.size();
    summary["embedding_dim"] = estore.dim() ? json(*estore.dim()) : json(nullptr);
    summary["missing_embeddings"] = ticl::missing_embeddings(samples, estore);
  }
  if (!a.out.empty()) ticl::write_file_atomic(a.out, ticl::serialize_dataset(samples));
  std::cout << summary.dump(2) << "\n";
  return 0;
}

struct VerbalizeArgs {
  std::string task, dataset, tasks_file, fixtures, service, image_root, out;
  std::vector<std::string> methods;
};

int verbalize(const VerbalizeArgs& a) {
  auto registry = registry_with(a.tasks_file);
  auto samples = ticl::load_dataset(a.dataset, registry.get(a.task));
  std::vector<std::string> image_ids;
  std::set<std::string> seen;
  for (const auto& s : samples) {
    for (const auto& id : s.image_ids) {
      if (seen.insert(id).second) image_ids.push_back(id);
    }
  }
  std::vector<std::string> methods = a.methods;
  if (methods.empty()) methods.assign(ticl::kVerbalizationMethods.begin(), ticl::kVerbalizationMethods.end());

  std::map<std::string, ticl::VerbalizeResponse> responses;
  if (!a.fixtures.empty()) {
    for (auto& r : ticl::parse_verbalize_fixtures(ticl::read_file(a.fixtures), a.fixtures)) {
      responses.emplace(r.image_id, std::move(r));
    }
  }
  std::optional<ticl::VerbalizerClient> client;
  if (!a.service.empty()) client.emplace(ticl::VerbalizerClient::http(a.service));

  ticl::VerbalizationStore store;
  if (fs::exists(a.out)) store = ticl::load_verbalizations(a.out);
  int errors = 0;
  for (const auto& id : image_ids) {
    ticl::VerbalizeRequest request{id, a.image_root.empty() ? id : (fs::path(a.image_root) / id).string(),
                                   methods};
    ticl::VerbalizeResponse response;
    if (auto it = responses.find(id); it != responses.end()) {
      response = it->second;
    } else if (client) {
      response = client->verbalize(request);
    } else {
      std::cerr << "no fixture for image '" << id << "'\n";
      ++errors;
      continue;
    }
    for (const auto& [method, message] : response.errors) {
      std::cerr << id << " " << method << ": " << message << "\n";
    }
    for (auto& entry : ticl::to_verbalizations(response)) {
      if (std::find(methods.begin(), methods.end(), entry.method_id) == methods.end()) continue;
      if (store.find(entry.image_id, entry.method_id)) continue;
      store.add(std::move(entry));
    }
  }
  ticl::write_file_atomic(a.out, ticl::serialize_verbalizations(store));
  std::cout << "wrote " << store.size() << " verbalizations for " << image_ids.size() << " images to "
            << a.out << "\n";
  return errors == 0 ? 0 : 1;
}

struct EmbedArgs {
  std::string task, dataset, tasks_file, verbalizations, method = "tags", backend, backend_id, out;
};

int embed(const EmbedArgs& a) {
  auto registry = registry_with(a.tasks_file);
  auto samples = ticl::load_dataset(a.dataset, registry.get(a.task));
  auto vstore = ticl::load_verbalizations(a.verbalizations);
  if (auto missing = ticl::missing_verbalizations(samples, vstore, a.method); !missing.empty()) {
    throw ticl::Error("missing '" + a.method + "' verbalization for " + missing.front());
  }
  auto client = ticl::ModelClient::create(load_backend(a.backend, a.backend_id));
  auto store = ticl::compute_embeddings(samples, vstore, a.method, *client);
  ticl::write_file_atomic(a.out, ticl::serialize_embeddings(store));
  std::cout << "wrote " << store.size() << " embeddings (dim " << store.dim().value_or(0) << ") to "
            << a.out << "\n";
  return 0;
}

int run(const json& flags, const std::string& config_path, bool quiet) {
  json merged = flags;
  fs::path base;
  if (!config_path.empty()) {
    merged.merge_patch(json::parse(ticl::read_file(config_path)));
    base = fs::path(config_path).parent_path();
  }
  auto cfg = ticl::config_from_json(merged, base);
  if (cfg.output_dir.empty()) throw ticl::Error("output_dir is required");
  ticl::RunOptions options;
  options.log = [](const std::string& m) { std::cerr << m << "\n"; };
  auto result = ticl::run_experiment(cfg, options);
  if (!quiet) {
    std::cout << ticl::render_table({result.report});
    std::cout << "metric " << ticl::to_string(result.report.metric) << " = " << result.report.value
              << " over " << result.report.n_samples << " samples; backend calls "
              << result.backend_calls << ", cache hits " << result.cache_hits << "\n";
  }
  return 0;
}

int report(const std::vector<std::string>& paths, const std::string& format, const std::string& out) {
  std::vector<ticl::MetricsReport> reports;
  for (const auto& p : paths) {
    fs::path path = p;
    if (fs::is_directory(path)) path /= "report.json";
    reports.push_back(ticl::report_from_json(json::parse(ticl::read_file(path))));
  }
  std::string text;
  if (format == "table") {
    text = ticl::render_table(reports);
  } else {
    if (reports.empty()) throw ticl::Error("no reports given");
    json all = json::array();
    for (const auto& r : reports) all.push_back(ticl::to_json(r));
    text = all.dump(2) + "\n";
  }
  if (out.empty()) std::cout << text;
  else ticl::write_file_atomic(out, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-visual in-context learning harness"};
  app.require_subcommand(1);

  IngestArgs ia;
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate a dataset (and optional stores); print a summary");
  ingest_cmd->add_option("--task", ia.task, "Task id")->required();
  ingest_cmd->add_option("--dataset", ia.dataset, "Dataset JSON-lines file")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--tasks-file", ia.tasks_file, "JSON array of extra task specs");
  ingest_cmd->add_option("--verbalizations", ia.verbalizations, "Verbalization store to check");
  ingest_cmd->add_option("--method", ia.method, "Verbalization method to check completeness for");
  ingest_cmd->add_option("--embeddings", ia.embeddings, "Embedding store to check");
  ingest_cmd->add_option("--out", ia.out, "Write the canonical dataset here");

  VerbalizeArgs va;
  auto* verbalize_cmd = app.add_subcommand("verbalize", "Produce image-as-text records from fixtures or the service");
  verbalize_cmd->add_option("--task", va.task, "Task id")->required();
  verbalize_cmd->add_option("--dataset", va.dataset, "Dataset file")->required()->check(CLI::ExistingFile);
  verbalize_cmd->add_option("--tasks-file", va.tasks_file, "JSON array of extra task specs");
  auto* fixtures_opt = verbalize_cmd->add_option("--fixtures", va.fixtures, "Recorded service responses (JSON lines)");
  auto* service_opt = verbalize_cmd->add_option("--service", va.service, "Verbalizer base URL, e.g. http://127.0.0.1:8000");
  verbalize_cmd->add_option("--image-root", va.image_root, "Directory holding the image files");
  verbalize_cmd->add_option("--methods", va.methods, "Methods to keep (default: all)");
  verbalize_cmd->add_option("--out", va.out, "Verbalization store to write or extend")->required();
  verbalize_cmd->callback([&] {
    if (fixtures_opt->count() == 0 && service_opt->count() == 0) {
      throw CLI::ValidationError("verbalize", "one of --fixtures or --service is required");
    }
  });

  EmbedArgs ea;
  auto* embed_cmd = app.add_subcommand("embed", "Embed the text and image-as-text channel of every sample");
  embed_cmd->add_option("--task", ea.task, "Task id")->required();
  embed_cmd->add_option("--dataset", ea.dataset, "Dataset file")->required()->check(CLI::ExistingFile);
  embed_cmd->add_option("--tasks-file", ea.tasks_file, "JSON array of extra task specs");
  embed_cmd->add_option("--verbalizations", ea.verbalizations, "Verbalization store")->required();
  embed_cmd->add_option("--method", ea.method, "Verbalization method for the image channel");
  embed_cmd->add_option("--backend", ea.backend, "Backend descriptor file (object, array or config)")->required();
  embed_cmd->add_option("--backend-id", ea.backend_id, "Backend to pick from a list");
  embed_cmd->add_option("--out", ea.out, "Embedding store to write")->required();

  std::string config_path;
  json flags = json::object();
  std::string task, backend_id, method, selection, prediction_path, output_dir, dataset, verbalizations,
      embeddings, embed_backend, template_path, backends_file, tasks_file, cache_dir;
  int n = 0, repeats = 1, max_new_tokens = 10, num_beams = 10;
  std::uint64_t seed = 0;
  std::size_t token_budget = 0;
  double temperature = 0.0, chars_per_token = 4.0;
  bool no_balance = false, reverse = false, exact_tokens = false, quiet = false;
  auto* run_cmd = app.add_subcommand("run", "Run one experiment; the config file overrides flags");
  run_cmd->add_option("--config", config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  auto* o_task = run_cmd->add_option("--task", task, "Task id");
  auto* o_backend = run_cmd->add_option("--backend-id", backend_id, "Completion backend id");
  auto* o_backends = run_cmd->add_option("--backends", backends_file, "File with backend descriptors");
  auto* o_tasks = run_cmd->add_option("--tasks-file", tasks_file, "JSON array of extra task specs");
  auto* o_embed = run_cmd->add_option("--embed-backend-id", embed_backend, "Embedding backend id");
  auto* o_method = run_cmd->add_option("--method", method, "Verbalization method id");
  auto* o_sel = run_cmd->add_option("--selection", selection, "adaptive|random (a|r)");
  auto* o_n = run_cmd->add_option("-n,--n", n, "In-context samples");
  auto* o_seed = run_cmd->add_option("--seed", seed, "Run seed");
  auto* o_nobal = run_cmd->add_flag("--no-balance", no_balance, "Disable class balancing");
  auto* o_rev = run_cmd->add_flag("--reverse-order", reverse, "Most similar sample closest to the question");
  auto* o_budget = run_cmd->add_option("--token-budget", token_budget, "Prompt token budget");
  auto* o_path = run_cmd->add_option("--prediction-path", prediction_path, "generate-parse|candidate-scores");
  auto* o_rep = run_cmd->add_option("--repeats", repeats, "Prompts per sample");
  auto* o_mnt = run_cmd->add_option("--max-new-tokens", max_new_tokens, "Generation length");
  auto* o_beams = run_cmd->add_option("--num-beams", num_beams, "Beams");
  auto* o_temp = run_cmd->add_option("--temperature", temperature, "Sampling temperature");
  auto* o_cpt = run_cmd->add_option("--chars-per-token", chars_per_token, "Approximate tokenizer ratio");
  auto* o_exact = run_cmd->add_flag("--exact-tokens", exact_tokens, "Count tokens with the backend tokenizer");
  auto* o_out = run_cmd->add_option("--output-dir", output_dir, "Output directory");
  auto* o_cache = run_cmd->add_option("--cache-dir", cache_dir, "Cache directory");
  auto* o_data = run_cmd->add_option("--dataset", dataset, "Dataset file");
  auto* o_verb = run_cmd->add_option("--verbalizations", verbalizations, "Verbalization store");
  auto* o_emb = run_cmd->add_option("--embeddings", embeddings, "Embedding store");
  auto* o_tmpl = run_cmd->add_option("--template", template_path, "Template file");
  run_cmd->add_flag("-q,--quiet", quiet, "Print nothing on success");

  std::vector<std::string> report_paths;
  std::string report_format = "table", report_out;
  auto* report_cmd = app.add_subcommand("report", "Tabulate report.json files");
  report_cmd->add_option("reports", report_paths, "report.json files or run directories")->required();
  report_cmd->add_option("--format", report_format, "table|json")->check(CLI::IsMember({"table", "json"}));
  report_cmd->add_option("--out", report_out, "Write to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*ingest_cmd) return ingest(ia);
    if (*verbalize_cmd) return verbalize(va);
    if (*embed_cmd) return embed(ea);
    if (*report_cmd) return report(report_paths, report_format, report_out);

    auto set = [&](CLI::Option* opt, const json::json_pointer& ptr, json value) {
      if (opt->count()) flags[ptr] = std::move(value);
    };
    set(o_task, "/task_id"_json_pointer, task);
    set(o_backend, "/backend_id"_json_pointer, backend_id);
    set(o_embed, "/embed_backend_id"_json_pointer, embed_backend);
    set(o_method, "/method_id"_json_pointer, method);
    set(o_sel, "/selection/method"_json_pointer, selection);
    set(o_n, "/selection/n"_json_pointer, n);
    set(o_seed, "/selection/seed"_json_pointer, seed);
    set(o_nobal, "/selection/balance"_json_pointer, !no_balance);
    set(o_rev, "/selection/reverse_order"_json_pointer, reverse);
    set(o_budget, "/selection/token_budget"_json_pointer, token_budget);
    set(o_path, "/prediction_path"_json_pointer, prediction_path);
    set(o_rep, "/repeats_per_sample"_json_pointer, repeats);
    set(o_mnt, "/generation/max_new_tokens"_json_pointer, max_new_tokens);
    set(o_beams, "/generation/num_beams"_json_pointer, num_beams);
    set(o_temp, "/generation/temperature"_json_pointer, temperature);
    set(o_cpt, "/tokens/chars_per_token"_json_pointer, chars_per_token);
    set(o_exact, "/tokens/exact"_json_pointer, exact_tokens);
    auto absolute = [](const std::string& p) { return p.empty() ? p : fs::absolute(p).string(); };
    set(o_out, "/output_dir"_json_pointer, absolute(output_dir));
    set(o_cache, "/cache_dir"_json_pointer, absolute(cache_dir));
    set(o_data, "/dataset"_json_pointer, absolute(dataset));
    set(o_verb, "/verbalizations"_json_pointer, absolute(verbalizations));
    set(o_emb, "/embeddings"_json_pointer, absolute(embeddings));
    set(o_tmpl, "/template"_json_pointer, absolute(template_path));
    if (o_backends->count()) {
      auto b = json::parse(ticl::read_file(backends_file));
      flags["backends"] = b.is_object() && b.contains("backends") ? b.at("backends") : b;
    }
    if (o_tasks->count()) flags["tasks"] = json::parse(ticl::read_file(tasks_file));
    return run(flags, config_path, quiet);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
