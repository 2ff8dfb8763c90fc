// Shared test helpers: fixture locations, random instance generators and
// brute-force oracles written independently of the library code.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ticl/core.hpp"
#include "ticl/record.hpp"
#include "ticl/store.hpp"
#include "ticl/tags.hpp"

namespace ticl::fx {

inline std::filesystem::path fixture_dir() { return TICL_FIXTURE_DIR; }
inline std::filesystem::path golden_dir() { return TICL_GOLDEN_DIR; }

/// Fresh, empty scratch directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}
inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

tags::RawTagBundle random_bundle(std::mt19937_64& rng);

// ---- selection ------------------------------------------------------------

struct RandomPool {
  TaskSpec spec;
  Sample eval;
  std::vector<Sample> pool;
  EmbeddingStore store;
};

/// Pool of up to `max_size` samples over up to `max_labels` labels, with
/// random embeddings; some samples have empty text and, with `ties`, some
/// share vectors so that similarity ties occur.
RandomPool random_pool(std::mt19937_64& rng, int max_size, int max_labels, bool classification = true,
                       bool ties = true);

/// Multiplies every stored vector by a random positive factor: one per
/// vector, or one shared factor when `per_vector` is false.
EmbeddingStore rescaled(const EmbeddingStore& store, std::mt19937_64& rng, bool per_vector = true);

/// Direct evaluation of the similarity definition.
double oracle_similarity(const Sample& a, const Sample& b, const EmbeddingStore& store);

/// Exhaustive search: among all n-subsets with the required per-label counts,
/// the one whose (similarity desc, id asc) sequence is lexicographically best.
std::vector<std::string> oracle_select_adaptive(const Sample& eval, const std::vector<Sample>& pool,
                                                int n, bool balance, const TaskSpec& spec,
                                                const EmbeddingStore& store);

// ---- metrics --------------------------------------------------------------

struct MetricInstance {
  std::vector<std::string> labels;
  std::vector<std::string> gold;                    // per sample
  std::vector<std::optional<std::string>> pred;     // nullopt = invalid
};

MetricInstance random_metric_instance(std::mt19937_64& rng);
double oracle_accuracy(const MetricInstance& m);
/// Precision/recall form of F1, averaged over labels.
double oracle_macro_f1(const MetricInstance& m);

std::vector<PredictionRecord> records_of(const MetricInstance& m);

// ---- synthetic runs -------------------------------------------------------

struct SyntheticTask {
  std::filesystem::path dir;
  std::filesystem::path dataset;
  std::filesystem::path verbalizations;
  std::vector<Sample> samples;
  std::map<std::string, std::string> gold_by_text;
};

/// 60-sample three-class task "synth3" (36 train, 24 test; test golds 12
/// positive, 8 negative, 4 neutral) written under `dir`.
SyntheticTask make_synthetic_task(const std::filesystem::path& dir);
TaskSpec synthetic_spec();

/// Answer for the evaluation block of a rendered synth3 prompt.
std::string gold_for_prompt(const SyntheticTask& task, const std::string& prompt);

}  // namespace ticl::fx
