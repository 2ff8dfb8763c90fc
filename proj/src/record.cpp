#include "ticl/record.hpp"

#include "ticl/error.hpp"

namespace ticl {

nlohmann::json to_json(const PredictionRecord& r) {
  nlohmann::json j = {{"sample_id", r.sample_id},
                      {"repeat", r.repeat},
                      {"prompt_hash", r.prompt_hash},
                      {"raw_generation", r.raw_generation},
                      {"parsed_answer", r.parsed_answer},
                      {"valid", r.valid},
                      {"latency_ms", r.latency_ms}};
  if (r.matched) j["matched"] = *r.matched;
  if (r.context_similarity) j["context_similarity"] = *r.context_similarity;
  if (!r.candidate_scores.empty()) {
    auto scores = nlohmann::json::array();
    for (const auto& [candidate, score] : r.candidate_scores) {
      scores.push_back({{"candidate", candidate}, {"score", score}});
    }
    j["candidate_scores"] = std::move(scores);
  }
  return j;
}

PredictionRecord record_from_json(const nlohmann::json& j) {
  try {
    PredictionRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.repeat = j.at("repeat").get<int>();
    r.prompt_hash = j.at("prompt_hash").get<std::string>();
    r.raw_generation = j.at("raw_generation").get<std::string>();
    r.parsed_answer = j.at("parsed_answer").get<std::string>();
    r.valid = j.at("valid").get<bool>();
    r.latency_ms = j.at("latency_ms").get<std::int64_t>();
    if (j.contains("matched")) r.matched = j.at("matched").get<std::string>();
    if (j.contains("context_similarity")) {
      r.context_similarity = j.at("context_similarity").get<double>();
    }
    if (j.contains("candidate_scores")) {
      for (const auto& s : j.at("candidate_scores")) {
        r.candidate_scores.emplace_back(s.at("candidate").get<std::string>(),
                                        s.at("score").get<double>());
      }
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed prediction record: ") + e.what());
  }
}

}  // namespace ticl
