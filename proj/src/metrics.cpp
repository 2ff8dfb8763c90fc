#include "ticl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <tuple>

#include "ticl/error.hpp"
#include "ticl/text.hpp"

namespace ticl {
namespace {

std::optional<std::string> unique_match(const std::vector<std::string>& hits) {
  if (hits.size() == 1) return hits.front();
  return std::nullopt;
}

// Drops hits that only occur as part of a longer hit ("misogynous" inside
// "not misogynous").
std::vector<std::string> maximal(std::vector<std::string> hits) {
  std::vector<std::string> out;
  for (const auto& h : hits) {
    bool subsumed = std::any_of(hits.begin(), hits.end(), [&](const std::string& other) {
      return other.size() > h.size() && other.find(h) != std::string::npos;
    });
    if (!subsumed) out.push_back(h);
  }
  return out;
}

std::map<std::string, const Gold*> index_golds(const std::vector<PredictionRecord>& records,
                                               const std::vector<Gold>& golds) {
  if (records.empty() || golds.empty()) throw Error("metric over an empty set");
  if (records.size() != golds.size()) {
    throw Error("metric needs one record per gold (" + std::to_string(records.size()) +
                " records, " + std::to_string(golds.size()) + " golds)");
  }
  std::map<std::string, const Gold*> by_id;
  for (const auto& g : golds) {
    if (!by_id.emplace(g.sample_id, &g).second) throw Error("duplicate gold for '" + g.sample_id + "'");
  }
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!by_id.count(r.sample_id)) throw Error("no gold for record '" + r.sample_id + "'");
    if (!seen.insert(r.sample_id).second) throw Error("duplicate record for '" + r.sample_id + "'");
  }
  return by_id;
}

bool label_correct(const PredictionRecord& r, const Gold& g) {
  return r.valid && r.matched && g.label && text::normalize(*r.matched) == text::normalize(*g.label);
}

bool answer_correct(const PredictionRecord& r, const Gold& g) {
  if (!r.valid) return false;
  auto pred = text::normalize(r.parsed_answer);
  return std::any_of(g.answers.begin(), g.answers.end(),
                     [&](const std::string& a) { return text::normalize(a) == pred; });
}

bool correct(const PredictionRecord& r, const Gold& g) {
  return g.label ? label_correct(r, g) : answer_correct(r, g);
}

}  // namespace

ParsedAnswer parse_answer(std::string_view raw, const TaskSpec& spec) {
  auto trimmed = text::trim(raw);
  auto line = trimmed.substr(0, trimmed.find('\n'));
  ParsedAnswer out;
  out.parsed = text::normalize(line);
  if (out.parsed.empty()) return out;
  if (!spec.is_classification()) {
    out.valid = true;
    return out;
  }

  std::vector<std::string> labels;
  for (const auto& l : spec.label_set) labels.push_back(text::normalize(l));
  const auto& p = out.parsed;

  if (std::find(labels.begin(), labels.end(), p) != labels.end()) {
    out.matched = p;
  } else {
    std::vector<std::string> prefix, contained;
    for (const auto& l : labels) {
      if (l.starts_with(p) || p.starts_with(l)) prefix.push_back(l);
      if (p.find(l) != std::string::npos) contained.push_back(l);
    }
    out.matched = unique_match(maximal(prefix));
    if (!out.matched) out.matched = unique_match(maximal(contained));
  }
  out.valid = out.matched.has_value();
  return out;
}

PredictionRecord aggregate_answers(const std::vector<PredictionRecord>& records) {
  if (records.empty()) throw Error("aggregate_answers needs at least one record");
  for (const auto& r : records) {
    if (r.sample_id != records.front().sample_id) {
      throw Error("aggregate_answers mixes samples '" + records.front().sample_id + "' and '" +
                  r.sample_id + "'");
    }
  }
  auto answer_of = [](const PredictionRecord& r) { return r.matched.value_or(r.parsed_answer); };
  std::map<std::string, std::size_t> votes;
  for (const auto& r : records) {
    if (r.valid) ++votes[answer_of(r)];
  }
  if (votes.empty()) return records.front();

  std::size_t top = 0;
  for (const auto& [_, c] : votes) top = std::max(top, c);
  const PredictionRecord* best = nullptr;
  constexpr double kNone = -std::numeric_limits<double>::infinity();
  for (const auto& r : records) {
    if (!r.valid || votes[answer_of(r)] != top) continue;
    if (!best || r.context_similarity.value_or(kNone) > best->context_similarity.value_or(kNone)) {
      best = &r;
    }
  }
  return *best;
}

Gold gold_of(const Sample& s) {
  Gold g;
  g.sample_id = s.sample_id;
  g.label = s.gold_label;
  if (s.gold_answers) g.answers = *s.gold_answers;
  return g;
}

double accuracy(const std::vector<PredictionRecord>& records, const std::vector<Gold>& golds) {
  auto by_id = index_golds(records, golds);
  std::size_t hits = 0;
  for (const auto& r : records) hits += correct(r, *by_id.at(r.sample_id)) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<PredictionRecord>& records,
                                                       const std::vector<Gold>& golds,
                                                       const std::vector<std::string>& label_set) {
  auto by_id = index_golds(records, golds);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < label_set.size(); ++i) index[text::normalize(label_set[i])] = i;
  std::vector<std::vector<std::size_t>> m(label_set.size(),
                                          std::vector<std::size_t>(label_set.size() + 1, 0));
  for (const auto& r : records) {
    const Gold& g = *by_id.at(r.sample_id);
    if (!g.label) throw Error("confusion matrix needs gold labels ('" + g.sample_id + "')");
    auto row = index.find(text::normalize(*g.label));
    if (row == index.end()) throw Error("gold label '" + *g.label + "' is not in the label set");
    std::size_t col = label_set.size();
    if (r.valid && r.matched) {
      auto it = index.find(text::normalize(*r.matched));
      if (it != index.end()) col = it->second;
    }
    ++m[row->second][col];
  }
  return m;
}

double macro_f1(const std::vector<PredictionRecord>& records, const std::vector<Gold>& golds,
                const std::vector<std::string>& label_set) {
  if (label_set.empty()) throw Error("macro_f1 needs a label set");
  auto m = confusion_matrix(records, golds, label_set);
  const std::size_t k = label_set.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t tp = m[i][i], fp = 0, fn = 0;
    for (std::size_t j = 0; j <= k; ++j) {
      if (j != i) fn += m[i][j];
    }
    for (std::size_t r = 0; r < k; ++r) {
      if (r != i) fp += m[r][i];
    }
    if (tp > 0) sum += 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
  }
  return sum / static_cast<double>(k);
}

double vqa_exact_match(const std::vector<PredictionRecord>& records, const std::vector<Gold>& golds) {
  auto by_id = index_golds(records, golds);
  std::size_t hits = 0;
  for (const auto& r : records) hits += answer_correct(r, *by_id.at(r.sample_id)) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double kfold_mean(const std::vector<double>& per_fold, std::optional<std::size_t> expected_folds) {
  if (per_fold.empty()) throw Error("kfold_mean of no folds");
  if (expected_folds && per_fold.size() != *expected_folds) {
    throw Error("expected " + std::to_string(*expected_folds) + " fold values, got " +
                std::to_string(per_fold.size()));
  }
  double sum = 0.0;
  for (double v : per_fold) sum += v;
  return sum / static_cast<double>(per_fold.size());
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j = {{"task_id", r.task_id},
                      {"metric", std::string(to_string(r.metric))},
                      {"value", r.value},
                      {"n_samples", r.n_samples},
                      {"fingerprint", r.fingerprint},
                      {"backend_id", r.backend_id},
                      {"method_id", r.method_id},
                      {"selection_method", r.selection_method},
                      {"n", r.n},
                      {"extra", r.extra},
                      {"run", r.run.is_null() ? nlohmann::json::object() : r.run}};
  if (!r.per_fold.empty()) j["per_fold"] = r.per_fold;
  if (!r.confusion.empty()) {
    j["confusion"] = {{"labels", r.confusion_labels}, {"matrix", r.confusion}};
  }
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.task_id = j.at("task_id");
  r.metric = parse_metric_kind(j.at("metric").get<std::string>());
  r.value = j.at("value");
  r.n_samples = j.at("n_samples");
  r.fingerprint = j.value("fingerprint", "");
  r.backend_id = j.value("backend_id", "");
  r.method_id = j.value("method_id", "");
  r.selection_method = j.value("selection_method", "");
  r.n = j.value("n", 0);
  if (j.contains("extra")) r.extra = j.at("extra").get<std::map<std::string, double>>();
  if (j.contains("run")) r.run = j.at("run");
  if (j.contains("per_fold")) r.per_fold = j.at("per_fold").get<std::vector<double>>();
  if (j.contains("confusion")) {
    r.confusion_labels = j.at("confusion").at("labels").get<std::vector<std::string>>();
    r.confusion = j.at("confusion").at("matrix").get<std::vector<std::vector<std::size_t>>>();
  }
  return r;
}

std::string serialize_report(const MetricsReport& r) { return to_json(r).dump(2) + "\n"; }

std::string render_table(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw Error("no reports to tabulate");

  using Row = std::tuple<std::string, std::string, std::string>;
  using Col = std::pair<int, std::string>;
  auto abbrev = [](const std::string& method) {
    return method == "adaptive" ? std::string("a") : method == "random" ? std::string("r") : method;
  };
  std::map<Row, std::map<Col, double>> cells;
  std::set<Col> cols;
  for (const auto& r : reports) {
    Row row{r.task_id, r.backend_id, r.method_id};
    Col col{r.n, abbrev(r.selection_method)};
    if (!cells[row].emplace(col, r.value).second) {
      throw Error("two reports for " + r.task_id + "/" + r.backend_id + "/" + r.method_id +
                  " n=" + std::to_string(r.n) + " " + r.selection_method);
    }
    cols.insert(col);
  }

  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header = {"dataset", "model", "verbalization"};
  for (const auto& [n, m] : cols) header.push_back("n=" + std::to_string(n) + " (" + m + ")");
  grid.push_back(header);
  for (const auto& [row, values] : cells) {
    std::vector<std::string> line = {std::get<0>(row), std::get<1>(row), std::get<2>(row)};
    for (const auto& col : cols) {
      auto it = values.find(col);
      if (it == values.end()) {
        line.push_back("-");
      } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", it->second * 100.0);
        line.push_back(buf);
      }
    }
    grid.push_back(std::move(line));
  }

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : grid) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::string out;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    std::string line;
    for (std::size_t i = 0; i < grid[r].size(); ++i) {
      if (i) line += "  ";
      const auto& cell = grid[r][i];
      if (i < 3) line += cell + std::string(width[i] - cell.size(), ' ');
      else line += std::string(width[i] - cell.size(), ' ') + cell;
    }
    while (line.ends_with(' ')) line.pop_back();
    out += line + "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    }
  }
  return out;
}

}  // namespace ticl
