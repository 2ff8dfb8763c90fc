#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ticl/client.hpp"
#include "ticl/core.hpp"
#include "ticl/metrics.hpp"
#include "ticl/record.hpp"
#include "ticl/selection.hpp"

namespace ticl {

enum class PredictionPath { generate_parse, candidate_scores };
std::string_view to_string(PredictionPath p);
PredictionPath parse_prediction_path(std::string_view s);

TaskSpec task_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TaskSpec& spec);

struct ExperimentConfig {
  std::string task_id;
  std::string backend_id;
  std::string embed_backend_id;  // used only when no embedding file exists
  std::string method_id = "tags";
  SelectionConfig selection;
  bool token_budget_set = false;  // false: budget follows the backend context limit
  bool reverse_order = false;     // render the least similar / last drawn sample first
  GenerationParams generation;
  PredictionPath prediction_path = PredictionPath::generate_parse;
  int repeats_per_sample = 1;
  std::filesystem::path output_dir;
  std::filesystem::path cache_dir;  // default: output_dir/cache
  std::filesystem::path dataset;
  std::filesystem::path verbalizations;
  std::filesystem::path embeddings;
  std::filesystem::path template_path;  // default: the task's built-in template
  double chars_per_token = 4.0;
  bool exact_tokens = false;  // count with the backend's tokenizer endpoint
  std::vector<BackendDescriptor> backends;
  std::vector<TaskSpec> tasks;  // registered on top of the built-in tasks
};

/// Relative paths are resolved against `base_dir`.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunOptions {
  /// Overrides ModelClient::create, e.g. to attach a scripted MockServer.
  std::function<std::unique_ptr<ModelClient>(const BackendDescriptor&)> client_factory;
  /// Receives cache corruption and other non-fatal notices.
  std::function<void(const std::string&)> log;
  bool write_outputs = true;
};

struct RunResult {
  MetricsReport report;
  std::vector<PredictionRecord> records;  // one per (eval sample, repeat), in job order
  std::size_t backend_calls = 0;
  std::size_t cache_hits = 0;
  std::vector<std::string> prompts;  // rendered prompt per record, same order
};

/// selection -> prompt -> completion -> parse -> metrics for every evaluation
/// sample, reusing cached predictions. Throws on incomplete stores, backend
/// capability mismatches and infeasible budgets before any backend call.
RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

/// Stable hash over every field that can change a prediction.
std::string config_fingerprint(const ExperimentConfig& cfg, const TaskSpec& spec,
                               const BackendDescriptor& backend, const std::string& template_text,
                               const std::string& data_digest);

enum class ReportFormat { table, records };

/// table: report.json + table.txt; records: records.jsonl. Returns written paths.
std::vector<std::filesystem::path> emit_report(const RunResult& result, ReportFormat format,
                                               const std::filesystem::path& dir);

std::vector<PredictionRecord> parse_records(std::string_view content,
                                            const std::string& source = "<records>");
std::string serialize_records(const std::vector<PredictionRecord>& records);

/// Embeds the text and image-as-text channel of every sample.
EmbeddingStore compute_embeddings(const std::vector<Sample>& samples,
                                  const VerbalizationStore& verbalizations,
                                  std::string_view method_id, ModelClient& client);

}  // namespace ticl
