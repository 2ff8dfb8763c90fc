#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ticl/core.hpp"
#include "ticl/record.hpp"

namespace ticl {

struct ParsedAnswer {
  std::string parsed;
  std::optional<std::string> matched;
  bool valid = false;
};

/// First line of the trimmed output, trimmed and lowercased. Classification
/// matching tries an exact label, then a unique label prefix, then a unique
/// label contained in the answer.
ParsedAnswer parse_answer(std::string_view raw, const TaskSpec& spec);

/// Majority vote over valid records; ties go to the record with the highest
/// context similarity, then to the earliest. Throws on empty input.
PredictionRecord aggregate_answers(const std::vector<PredictionRecord>& records);

/// Gold side of one evaluation sample.
struct Gold {
  std::string sample_id;
  std::optional<std::string> label;
  std::vector<std::string> answers;
};

Gold gold_of(const Sample& s);

/// All metrics align records to golds by sample_id and count invalid
/// predictions as incorrect. Empty input throws.
double accuracy(const std::vector<PredictionRecord>& records, const std::vector<Gold>& golds);
double macro_f1(const std::vector<PredictionRecord>& records, const std::vector<Gold>& golds,
                const std::vector<std::string>& label_set);
double vqa_exact_match(const std::vector<PredictionRecord>& records, const std::vector<Gold>& golds);
/// Throws when `expected_folds` is set and differs from the number of values.
double kfold_mean(const std::vector<double>& per_fold, std::optional<std::size_t> expected_folds = {});

/// Rows: gold labels in label_set order. Columns: predicted labels, then "invalid".
std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<PredictionRecord>& records,
                                                       const std::vector<Gold>& golds,
                                                       const std::vector<std::string>& label_set);

struct MetricsReport {
  std::string task_id;
  MetricKind metric = MetricKind::accuracy;
  double value = 0.0;
  std::vector<double> per_fold;
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<std::string> confusion_labels;
  std::size_t n_samples = 0;
  std::string fingerprint;
  std::string backend_id;
  std::string method_id;
  std::string selection_method;
  int n = 0;
  std::map<std::string, double> extra;  // secondary metrics, e.g. accuracy for macro-F1 tasks
  nlohmann::json run;                   // run metadata (beam mapping, prediction path, ...)
};

nlohmann::json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);
/// Pretty, key-sorted JSON with a trailing newline; byte-stable.
std::string serialize_report(const MetricsReport& r);

/// Grid in the layout of the results tables: one row per dataset, model and
/// verbalization; one column per (n, selection). Values are percentages with
/// one decimal. Throws on an empty report list.
std::string render_table(const std::vector<MetricsReport>& reports);

}  // namespace ticl
