#include "ticl/selection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "ticl/error.hpp"
#include "ticl/text.hpp"

namespace ticl {

std::string_view to_string(SelectionMethod m) {
  return m == SelectionMethod::random ? "random" : "adaptive";
}

SelectionMethod parse_selection_method(std::string_view s) {
  if (s == "random" || s == "r") return SelectionMethod::random;
  if (s == "adaptive" || s == "a") return SelectionMethod::adaptive;
  throw Error("unknown selection method '" + std::string(s) + "'");
}

void validate(const SelectionConfig& cfg) {
  if (cfg.n < 0 || cfg.n > cfg.max_n) {
    throw ValidationError("n=" + std::to_string(cfg.n) + " outside [0, " +
                          std::to_string(cfg.max_n) + "]");
  }
  if (cfg.token_budget == 0) throw ValidationError("token_budget must be positive");
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw ValidationError("dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                          std::to_string(b.dim()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  const auto& x = a.values();
  const auto& y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    na += x[i] * x[i];
    nb += y[i] * y[i];
  }
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine similarity of a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

const EmbeddingVector& require(const EmbeddingStore& store, const Sample& s, Channel c) {
  if (const auto* v = store.find(s.sample_id, c)) return *v;
  throw Error("missing " + std::string(to_string(c)) + " embedding for sample '" + s.sample_id +
              "'");
}

bool has_text(const Sample& s) { return !text::trim(s.text).empty(); }

// Unbiased draw from [0, bound) using raw engine output only, so results do
// not depend on the standard library's distribution implementation.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
  std::uint64_t x;
  do {
    x = rng();
  } while (x < threshold);
  return x % bound;
}

bool unbalanced(const std::vector<Sample>& chosen, const TaskSpec& spec) {
  std::map<std::string, int> counts;
  for (const auto& label : spec.label_set) counts[label] = 0;
  for (const auto& s : chosen) ++counts[*s.gold_label];
  auto [lo, hi] = std::minmax_element(counts.begin(), counts.end(),
                                      [](auto& a, auto& b) { return a.second < b.second; });
  return hi->second - lo->second > 1;
}

// Takes one item per label per round, visiting labels in `label_order`,
// until `n` items are taken or every queue is empty.
std::vector<std::size_t> round_robin(const std::vector<std::vector<std::size_t>>& queues,
                                     std::size_t n) {
  std::vector<std::size_t> taken;
  for (std::size_t round = 0; taken.size() < n; ++round) {
    bool any = false;
    for (const auto& q : queues) {
      if (round < q.size() && taken.size() < n) {
        taken.push_back(q[round]);
        any = true;
      }
    }
    if (!any) break;
  }
  return taken;
}

bool balancing(const SelectionConfig& cfg, const TaskSpec& spec) {
  return cfg.balance && spec.is_classification();
}

}  // namespace

double sample_similarity(const Sample& eval, const Sample& candidate, const EmbeddingStore& store) {
  double image_sim = cosine_similarity(require(store, eval, Channel::image_as_text),
                                       require(store, candidate, Channel::image_as_text));
  if (!has_text(eval) || !has_text(candidate)) return image_sim;
  double text_sim = cosine_similarity(require(store, eval, Channel::text),
                                      require(store, candidate, Channel::text));
  return (text_sim + image_sim) / 2.0;
}

std::vector<RankedCandidate> rank_candidates(const Sample& eval, std::span<const Sample> pool,
                                             const EmbeddingStore& store) {
  std::vector<RankedCandidate> ranked;
  ranked.reserve(pool.size());
  for (const auto& c : pool) {
    if (c.sample_id == eval.sample_id) continue;
    ranked.push_back({c.sample_id, sample_similarity(eval, c, store)});
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.sample_id < b.sample_id;
  });
  return ranked;
}

std::vector<std::size_t> seeded_permutation(std::size_t size, std::uint64_t seed) {
  std::vector<std::size_t> order(size);
  for (std::size_t i = 0; i < size; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = size; i > 1; --i) {
    std::swap(order[i - 1], order[bounded(rng, i)]);
  }
  return order;
}

Selection select_random(std::span<const Sample> pool, const SelectionConfig& cfg,
                        const TaskSpec& spec) {
  validate(cfg);
  Selection out;
  const auto n = static_cast<std::size_t>(cfg.n);
  out.pool_too_small = pool.size() < n;
  if (n == 0) return out;

  auto order = seeded_permutation(pool.size(), cfg.seed);
  std::vector<std::size_t> taken;
  if (balancing(cfg, spec)) {
    // Labels are visited in order of their first appearance in the shuffle.
    std::vector<std::string> label_order;
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (auto i : order) {
      const auto& label = *pool[i].gold_label;
      if (!by_label.count(label)) label_order.push_back(label);
      by_label[label].push_back(i);
    }
    std::vector<std::vector<std::size_t>> queues;
    for (const auto& label : label_order) queues.push_back(by_label[label]);
    taken = round_robin(queues, n);
  } else {
    taken.assign(order.begin(), order.begin() + std::min(n, order.size()));
  }
  for (auto i : taken) out.samples.push_back(pool[i]);
  if (balancing(cfg, spec)) out.balance_infeasible = unbalanced(out.samples, spec);
  return out;
}

Selection select_adaptive(const Sample& eval, std::span<const Sample> pool,
                          const SelectionConfig& cfg, const TaskSpec& spec,
                          const EmbeddingStore& store) {
  validate(cfg);
  Selection out;
  const auto n = static_cast<std::size_t>(cfg.n);
  std::map<std::string, const Sample*> by_id;
  for (const auto& s : pool) by_id.emplace(s.sample_id, &s);
  auto ranked = rank_candidates(eval, pool, store);
  out.pool_too_small = ranked.size() < n;
  if (n == 0) return out;

  std::vector<std::size_t> taken;  // indices into `ranked`
  if (balancing(cfg, spec)) {
    // Label queues in ranked order; labels ordered by their best candidate,
    // which is the order their first candidate appears in `ranked`.
    std::vector<std::string> label_order;
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      const auto& label = *by_id.at(ranked[i].sample_id)->gold_label;
      if (!by_label.count(label)) label_order.push_back(label);
      by_label[label].push_back(i);
    }
    std::vector<std::vector<std::size_t>> queues;
    for (const auto& label : label_order) queues.push_back(by_label[label]);
    taken = round_robin(queues, n);
    std::sort(taken.begin(), taken.end());
  } else {
    for (std::size_t i = 0; i < std::min(n, ranked.size()); ++i) taken.push_back(i);
  }
  for (auto i : taken) {
    out.samples.push_back(*by_id.at(ranked[i].sample_id));
    out.similarities.push_back(ranked[i].similarity);
  }
  if (balancing(cfg, spec)) out.balance_infeasible = unbalanced(out.samples, spec);
  return out;
}

BudgetFit fit_to_budget(Selection selected, std::size_t token_budget,
                        const PromptMeasure& measure) {
  const std::size_t bare = measure({});
  if (bare > token_budget) {
    throw BudgetError("task description and evaluation block need " + std::to_string(bare) +
                      " tokens, budget is " + std::to_string(token_budget));
  }
  BudgetFit fit;
  fit.prompt_tokens = measure(selected.samples);
  while (fit.prompt_tokens > token_budget && !selected.samples.empty()) {
    selected.samples.pop_back();
    if (!selected.similarities.empty()) selected.similarities.pop_back();
    ++fit.dropped;
    fit.prompt_tokens = measure(selected.samples);
  }
  fit.kept = std::move(selected);
  return fit;
}

}  // namespace ticl
