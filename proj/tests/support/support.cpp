#include "support.hpp"

#include <functional>

#include "ticl/error.hpp"

namespace ticl::fx {

std::filesystem::path scratch_dir(const std::string& name) {
  static std::mt19937_64 rng{std::random_device{}()};
  auto dir = std::filesystem::temp_directory_path() /
             ("ticl-" + name + "-" + std::to_string(rng() % 1000000000));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

namespace {

tags::ScoredLabel scored(std::mt19937_64& rng, std::string label) {
  // A fifth of the probabilities land exactly on a threshold.
  static const double kEdges[] = {0.5, 0.8, 0.9};
  double p = uniform_int(rng, 0, 4) == 0 ? kEdges[uniform_int(rng, 0, 2)] : uniform(rng, 0.0, 1.0);
  return {std::move(label), p};
}

}  // namespace

tags::RawTagBundle random_bundle(std::mt19937_64& rng) {
  static const std::vector<std::string> objects = {"person", "dog", "cat", "car", "cup", "tree"};
  static const std::vector<std::string> scenes = {"kitchen", "office", "beach", "street", "forest"};
  tags::RawTagBundle b;
  for (auto t : tags::kImageTypes) {
    if (uniform_int(rng, 0, 3) > 0) b.image_type_scores.push_back(scored(rng, std::string(t)));
  }
  for (int i = uniform_int(rng, 0, 6); i > 0; --i) {
    b.object_detections.push_back(scored(rng, objects[uniform_int(rng, 0, 5)]));
  }
  for (int i = uniform_int(rng, 0, 3); i > 0; --i) {
    b.scene_scores_indoor.push_back(scored(rng, scenes[uniform_int(rng, 0, 4)]));
  }
  for (int i = uniform_int(rng, 0, 3); i > 0; --i) {
    b.scene_scores_outdoor.push_back(scored(rng, scenes[uniform_int(rng, 0, 4)]));
  }
  for (int i = uniform_int(rng, 0, 3); i > 0; --i) {
    tags::FaceDetection f;
    f.face_probability = scored(rng, "face").probability;
    for (auto e : tags::kEmotions) {
      if (uniform_int(rng, 0, 1)) f.emotion_scores.push_back(scored(rng, std::string(e)));
    }
    b.face_detections.push_back(std::move(f));
  }
  return b;
}

namespace {

EmbeddingVector random_vector(std::mt19937_64& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = uniform(rng, -1.0, 1.0);
  v[0] += 0.01;  // never all zero
  return EmbeddingVector(std::move(v));
}

}  // namespace

RandomPool random_pool(std::mt19937_64& rng, int max_size, int max_labels, bool classification,
                       bool ties) {
  RandomPool r;
  const int labels = uniform_int(rng, 1, max_labels);
  r.spec.task_id = "rand";
  r.spec.template_id = "mvsa";
  if (classification) {
    r.spec.kind = TaskKind::classification;
    for (int i = 0; i < labels; ++i) r.spec.label_set.push_back("l" + std::to_string(i));
  } else {
    r.spec.kind = TaskKind::question_answering;
    r.spec.metric = MetricKind::vqa_exact_match;
  }
  const std::size_t dim = 6;
  auto make = [&](const std::string& id) {
    Sample s;
    s.sample_id = id;
    s.task_id = "rand";
    s.text = uniform_int(rng, 0, 6) == 0 ? "" : "text of " + id;
    s.image_ids = {id + ".jpg"};
    if (classification) s.gold_label = r.spec.label_set[uniform_int(rng, 0, labels - 1)];
    else s.gold_answers = std::vector<std::string>{"answer"};
    return s;
  };

  r.eval = make("eval");
  r.store.add("eval", Channel::text, random_vector(rng, dim));
  r.store.add("eval", Channel::image_as_text, random_vector(rng, dim));
  const int size = uniform_int(rng, 0, max_size);
  for (int i = 0; i < size; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "s%03d", i);
    auto s = make(id);
    if (ties && i > 0 && uniform_int(rng, 0, 4) == 0) {
      // Copy an earlier sample's vectors (and text presence) to force a tie.
      const auto& src = r.pool[uniform_int(rng, 0, i - 1)];
      s.text = src.text.empty() ? "" : "text of " + std::string(id);
      for (auto c : {Channel::text, Channel::image_as_text}) {
        if (const auto* v = r.store.find(src.sample_id, c)) r.store.add(id, c, *v);
      }
      if (!r.store.find(id, Channel::text)) r.store.add(id, Channel::text, random_vector(rng, dim));
    } else {
      r.store.add(id, Channel::text, random_vector(rng, dim));
      r.store.add(id, Channel::image_as_text, random_vector(rng, dim));
    }
    r.pool.push_back(std::move(s));
  }
  return r;
}

EmbeddingStore rescaled(const EmbeddingStore& store, std::mt19937_64& rng, bool per_vector) {
  EmbeddingStore out;
  const double shared = std::exp(uniform(rng, -7.0, 7.0));
  for (const auto& [id, channel, v] : store.entries()) {
    double factor = per_vector ? std::exp(uniform(rng, -7.0, 7.0)) : shared;
    std::vector<double> values = v.values();
    for (auto& x : values) x *= factor;
    out.add(id, channel, EmbeddingVector(std::move(values)));
  }
  return out;
}

namespace {

double cos_of(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double oracle_similarity(const Sample& a, const Sample& b, const EmbeddingStore& store) {
  double image = cos_of(store.find(a.sample_id, Channel::image_as_text)->values(),
                        store.find(b.sample_id, Channel::image_as_text)->values());
  if (a.text.empty() || b.text.empty()) return image;
  double txt = cos_of(store.find(a.sample_id, Channel::text)->values(),
                      store.find(b.sample_id, Channel::text)->values());
  return (txt + image) / 2.0;
}

std::vector<std::string> oracle_select_adaptive(const Sample& eval, const std::vector<Sample>& pool,
                                                int n, bool balance, const TaskSpec& spec,
                                                const EmbeddingStore& store) {
  struct Cand {
    std::string id;
    std::string label;
    double sim;
  };
  std::vector<Cand> cands;
  for (const auto& s : pool) {
    if (s.sample_id == eval.sample_id) continue;
    cands.push_back({s.sample_id, s.gold_label.value_or(""), oracle_similarity(eval, s, store)});
  }
  auto better = [](const Cand& a, const Cand& b) {
    return a.sim != b.sim ? a.sim > b.sim : a.id < b.id;
  };

  const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(n), cands.size());
  const bool balanced = balance && spec.is_classification();

  // Required per-label counts: labels ordered by their best candidate, one
  // slot per label per round, skipping exhausted labels.
  std::map<std::string, std::size_t> required;
  if (balanced) {
    std::map<std::string, const Cand*> best;
    std::map<std::string, std::size_t> available;
    for (const auto& c : cands) {
      ++available[c.label];
      if (!best.count(c.label) || better(c, *best[c.label])) best[c.label] = &c;
    }
    std::vector<std::string> order;
    for (const auto& [label, _] : best) order.push_back(label);
    std::sort(order.begin(), order.end(),
              [&](const auto& a, const auto& b) { return better(*best[a], *best[b]); });
    std::size_t left = m;
    while (left > 0) {
      for (const auto& label : order) {
        if (left > 0 && required[label] < available[label]) {
          ++required[label];
          --left;
        }
      }
    }
  }

  // Labels as small integers so the exhaustive leaf check stays cheap.
  std::map<std::string, std::size_t> label_index;
  for (const auto& c : cands) label_index.emplace(c.label, label_index.size());
  std::vector<std::size_t> label_of(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) label_of[i] = label_index[cands[i].label];
  std::vector<std::size_t> need(label_index.size(), 0);
  for (const auto& [label, c] : required) need[label_index[label]] = c;

  std::vector<Cand> best_set;
  bool found = false;
  std::vector<std::size_t> idx;
  std::vector<std::size_t> counts(label_index.size(), 0);
  std::function<void(std::size_t)> search = [&](std::size_t start) {
    if (idx.size() == m) {
      if (balanced && counts != need) return;
      std::vector<const Cand*> chosen;
      for (auto i : idx) chosen.push_back(&cands[i]);
      std::sort(chosen.begin(), chosen.end(), [&](const Cand* a, const Cand* b) { return better(*a, *b); });
      bool wins = !found;
      for (std::size_t k = 0; !wins && k < m; ++k) {
        if (better(*chosen[k], best_set[k])) wins = true;
        else if (better(best_set[k], *chosen[k])) break;
      }
      if (wins) {
        best_set.clear();
        for (const auto* c : chosen) best_set.push_back(*c);
        found = true;
      }
      return;
    }
    for (std::size_t i = start; i < cands.size(); ++i) {
      if (balanced && counts[label_of[i]] >= need[label_of[i]]) continue;
      idx.push_back(i);
      ++counts[label_of[i]];
      search(i + 1);
      --counts[label_of[i]];
      idx.pop_back();
    }
  };
  search(0);

  std::vector<std::string> ids;
  for (const auto& c : best_set) ids.push_back(c.id);
  return ids;
}

MetricInstance random_metric_instance(std::mt19937_64& rng) {
  MetricInstance m;
  const int labels = uniform_int(rng, 2, 4);
  for (int i = 0; i < labels; ++i) m.labels.push_back("label" + std::to_string(i));
  const int size = uniform_int(rng, 1, 40);
  for (int i = 0; i < size; ++i) {
    auto gold = m.labels[uniform_int(rng, 0, labels - 1)];
    m.gold.push_back(gold);
    int roll = uniform_int(rng, 0, 9);
    if (roll == 0) m.pred.push_back(std::nullopt);
    else if (roll < 6) m.pred.push_back(gold);
    else m.pred.push_back(m.labels[uniform_int(rng, 0, labels - 1)]);
  }
  return m;
}

double oracle_accuracy(const MetricInstance& m) {
  int hits = 0;
  for (std::size_t i = 0; i < m.gold.size(); ++i) {
    if (m.pred[i] && *m.pred[i] == m.gold[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(m.gold.size());
}

double oracle_macro_f1(const MetricInstance& m) {
  double total = 0.0;
  for (const auto& label : m.labels) {
    double predicted = 0, actual = 0, both = 0;
    for (std::size_t i = 0; i < m.gold.size(); ++i) {
      bool p = m.pred[i] && *m.pred[i] == label;
      bool g = m.gold[i] == label;
      predicted += p;
      actual += g;
      both += p && g;
    }
    double precision = predicted > 0 ? both / predicted : 0.0;
    double recall = actual > 0 ? both / actual : 0.0;
    total += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
  return total / static_cast<double>(m.labels.size());
}

std::vector<PredictionRecord> records_of(const MetricInstance& m) {
  std::vector<PredictionRecord> out;
  for (std::size_t i = 0; i < m.gold.size(); ++i) {
    PredictionRecord r;
    r.sample_id = "x" + std::to_string(i);
    r.valid = m.pred[i].has_value();
    r.matched = m.pred[i];
    r.parsed_answer = m.pred[i].value_or("garbage");
    out.push_back(std::move(r));
  }
  return out;
}

TaskSpec synthetic_spec() {
  TaskSpec s;
  s.task_id = "synth3";
  s.kind = TaskKind::classification;
  s.label_set = {"positive", "negative", "neutral"};
  s.metric = MetricKind::accuracy;
  s.template_id = "mvsa";
  return s;
}

SyntheticTask make_synthetic_task(const std::filesystem::path& dir) {
  static const char* kLabels[] = {"positive", "negative", "neutral"};
  static const char* kTopics[] = {"the weather", "a new phone", "the match", "dinner", "the train",
                                  "a concert"};
  SyntheticTask t;
  t.dir = dir;
  std::filesystem::create_directories(dir);
  VerbalizationStore vstore;
  for (int i = 0; i < 60; ++i) {
    Sample s;
    char id[16];
    std::snprintf(id, sizeof id, "syn-%02d", i);
    s.sample_id = id;
    s.task_id = "synth3";
    s.text = "Post " + std::to_string(i) + " about " + kTopics[i % 6];
    s.image_ids = {std::string(id) + ".jpg"};
    if (i < 36) {
      s.split = Split::train;
      s.gold_label = kLabels[i % 3];
    } else {
      const int k = i - 36;  // 12 positive, 8 negative, 4 neutral
      s.split = Split::test;
      s.gold_label = k < 12 ? "positive" : k < 20 ? "negative" : "neutral";
    }
    vstore.add({s.image_ids[0], "tags", "image; object " + std::to_string(i % 7) + "; scene " +
                                            std::to_string(i % 5)});
    t.gold_by_text[s.text] = *s.gold_label;
    t.samples.push_back(std::move(s));
  }
  t.dataset = dir / "synth3.jsonl";
  t.verbalizations = dir / "synth3-verbalizations.jsonl";
  write_file_atomic(t.dataset, serialize_dataset(t.samples));
  write_file_atomic(t.verbalizations, serialize_verbalizations(vstore));
  return t;
}

std::string gold_for_prompt(const SyntheticTask& task, const std::string& prompt) {
  auto eval = prompt.substr(prompt.rfind("\n\n") + 2);
  auto start = eval.find("Tweet: ");
  if (start == std::string::npos) throw Error("no tweet line in the evaluation block");
  start += 7;
  auto text = eval.substr(start, eval.find('\n', start) - start);
  return task.gold_by_text.at(text);
}

}  // namespace ticl::fx
