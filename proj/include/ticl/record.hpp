#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace ticl {

/// One model call for one evaluation sample, from raw output to parsed answer.
struct PredictionRecord {
  std::string sample_id;
  int repeat = 0;
  std::string prompt_hash;
  std::string raw_generation;
  std::string parsed_answer;
  std::optional<std::string> matched;  // label (classification) or gold answer (QA)
  bool valid = false;
  std::int64_t latency_ms = 0;
  std::optional<double> context_similarity;  // mean similarity of the in-context samples
  std::vector<std::pair<std::string, double>> candidate_scores;

  bool operator==(const PredictionRecord&) const = default;
};

nlohmann::json to_json(const PredictionRecord& r);
PredictionRecord record_from_json(const nlohmann::json& j);

}  // namespace ticl
