#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ticl/core.hpp"
#include "ticl/store.hpp"

namespace ticl {

enum class SelectionMethod { random, adaptive };
std::string_view to_string(SelectionMethod m);
SelectionMethod parse_selection_method(std::string_view s);

struct SelectionConfig {
  SelectionMethod method = SelectionMethod::adaptive;
  int n = 0;
  std::uint64_t seed = 0;
  bool balance = true;
  std::size_t token_budget = 512;
  int max_n = 3;
};

/// Throws ValidationError for n outside [0, max_n] or a zero budget.
void validate(const SelectionConfig& cfg);

struct RankedCandidate {
  std::string sample_id;
  double similarity = 0.0;
};

/// In-context samples in canonical order: descending similarity for adaptive,
/// draw order for random. `similarities` is parallel to `samples` when known.
struct Selection {
  std::vector<Sample> samples;
  std::vector<double> similarities;
  bool pool_too_small = false;
  bool balance_infeasible = false;
};

/// dot(a, b) / (|a| |b|). Throws on dimension mismatch or a zero vector.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Mean of the text-channel and image-as-text-channel similarities. When
/// either sample has empty text, the image-as-text channel alone is used.
double sample_similarity(const Sample& eval, const Sample& candidate, const EmbeddingStore& store);

/// Pool ranked by descending similarity, ties by sample_id; `eval` itself is skipped.
std::vector<RankedCandidate> rank_candidates(const Sample& eval, std::span<const Sample> pool,
                                             const EmbeddingStore& store);

Selection select_random(std::span<const Sample> pool, const SelectionConfig& cfg,
                        const TaskSpec& spec);

Selection select_adaptive(const Sample& eval, std::span<const Sample> pool,
                          const SelectionConfig& cfg, const TaskSpec& spec,
                          const EmbeddingStore& store);

/// Token count of the full prompt built from the given in-context samples.
using PromptMeasure = std::function<std::size_t(std::span<const Sample>)>;

struct BudgetFit {
  Selection kept;
  std::size_t dropped = 0;
  std::size_t prompt_tokens = 0;
};

/// Drops samples from the back of the canonical order (lowest similarity for
/// adaptive, last drawn for random) until the prompt fits. Throws BudgetError
/// when the prompt without any in-context sample already exceeds the budget.
BudgetFit fit_to_budget(Selection selected, std::size_t token_budget, const PromptMeasure& measure);

/// Deterministic permutation of [0, size) from `seed`; identical on every platform.
std::vector<std::size_t> seeded_permutation(std::size_t size, std::uint64_t seed);

}  // namespace ticl
