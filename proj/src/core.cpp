#include "ticl/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ticl/error.hpp"
#include "ticl/text.hpp"

namespace ticl {

std::string_view to_string(TaskKind k) {
  return k == TaskKind::classification ? "classification" : "question-answering";
}

std::string_view to_string(MetricKind m) {
  switch (m) {
    case MetricKind::macro_f1: return "macro-f1";
    case MetricKind::accuracy: return "accuracy";
    case MetricKind::kfold_accuracy: return "kfold-accuracy";
    case MetricKind::vqa_exact_match: return "vqa-exact-match";
  }
  return "?";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::dev: return "dev";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view s) {
  if (s == "classification") return TaskKind::classification;
  if (s == "question-answering") return TaskKind::question_answering;
  throw Error("unknown task kind '" + std::string(s) + "'");
}

MetricKind parse_metric_kind(std::string_view s) {
  for (auto m : {MetricKind::macro_f1, MetricKind::accuracy, MetricKind::kfold_accuracy,
                 MetricKind::vqa_exact_match}) {
    if (to_string(m) == s) return m;
  }
  throw Error("unknown metric '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  for (auto v : {Split::train, Split::test, Split::dev}) {
    if (to_string(v) == s) return v;
  }
  throw Error("unknown split '" + std::string(s) + "'");
}

CandidateAnswerSet candidates_for(const TaskSpec& spec) {
  return CandidateAnswerSet{spec.is_classification() ? spec.label_set
                                                     : std::vector<std::string>{}};
}

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  for (double v : values_) {
    if (!std::isfinite(v)) throw ValidationError("embedding contains a non-finite value");
  }
}

bool EmbeddingVector::is_zero() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
}

TaskSpec normalized(TaskSpec spec) {
  for (auto& label : spec.label_set) label = text::normalize(label);
  return spec;
}

void validate_task_spec(const TaskSpec& spec) {
  if (spec.task_id.empty()) throw ValidationError("task_id must not be empty");
  const std::string where = "task '" + spec.task_id + "': ";
  if (spec.is_classification()) {
    if (spec.label_set.empty()) throw ValidationError(where + "classification needs labels");
    std::set<std::string> seen;
    for (const auto& label : spec.label_set) {
      if (label.empty()) throw ValidationError(where + "empty label");
      if (!seen.insert(label).second) throw ValidationError(where + "duplicate label '" + label + "'");
    }
    if (spec.metric == MetricKind::vqa_exact_match) {
      throw ValidationError(where + "vqa-exact-match requires a QA task");
    }
  } else {
    if (!spec.label_set.empty()) throw ValidationError(where + "QA tasks carry no labels");
    if (spec.metric == MetricKind::macro_f1) {
      throw ValidationError(where + "macro-f1 requires a classification task");
    }
  }
  if (spec.images_per_sample != 1 && spec.images_per_sample != 2) {
    throw ValidationError(where + "images_per_sample must be 1 or 2");
  }
  if (spec.is_kfold() != (spec.folds > 0)) {
    throw ValidationError(where + "folds must be set exactly for kfold-accuracy tasks");
  }
  if (spec.answers_per_sample && *spec.answers_per_sample < 1) {
    throw ValidationError(where + "answers_per_sample must be positive");
  }
  if (spec.template_id.empty()) throw ValidationError(where + "template_id must not be empty");
}

std::vector<Violation> validate_sample(const Sample& s, const TaskSpec& spec) {
  std::vector<Violation> out;
  auto add = [&](std::string invariant, std::string message) {
    out.push_back({std::move(invariant), std::move(message)});
  };

  if (s.sample_id.empty()) add("sample_id", "sample_id is empty");
  if (s.task_id != spec.task_id) {
    add("task_id", "task_id '" + s.task_id + "' does not match '" + spec.task_id + "'");
  }
  if (static_cast<int>(s.image_ids.size()) != spec.images_per_sample) {
    add("images_per_sample", "expected " + std::to_string(spec.images_per_sample) +
                                 " image ids, got " + std::to_string(s.image_ids.size()));
  }
  if (std::any_of(s.image_ids.begin(), s.image_ids.end(),
                  [](const std::string& id) { return id.empty(); })) {
    add("image_ids", "empty image id");
  }

  if (spec.is_classification()) {
    if (!s.gold_label) {
      add("gold_label", "classification sample has no gold_label");
    } else if (std::find(spec.label_set.begin(), spec.label_set.end(), *s.gold_label) ==
               spec.label_set.end()) {
      add("gold_label", "gold_label '" + *s.gold_label + "' is not in the label set");
    }
    if (s.gold_answers) add("gold_answers", "classification sample carries gold_answers");
  } else {
    if (s.gold_label) add("gold_label", "QA sample carries a gold_label");
    if (!s.gold_answers || s.gold_answers->empty()) {
      add("gold_answers", "QA sample needs at least one gold answer");
    } else if (spec.answers_per_sample &&
               static_cast<int>(s.gold_answers->size()) != *spec.answers_per_sample) {
      add("gold_answers", "expected " + std::to_string(*spec.answers_per_sample) +
                              " gold answers, got " + std::to_string(s.gold_answers->size()));
    }
  }

  if (spec.is_kfold()) {
    if (!s.fold) {
      add("fold", "kfold task sample has no fold");
    } else if (*s.fold < 0 || *s.fold >= spec.folds) {
      add("fold", "fold " + std::to_string(*s.fold) + " outside [0, " +
                      std::to_string(spec.folds) + ")");
    }
  } else if (s.fold) {
    add("fold", "fold is only allowed for kfold tasks");
  }
  return out;
}

const TaskSpec& TaskRegistry::register_task(TaskSpec spec) {
  spec = normalized(std::move(spec));
  validate_task_spec(spec);
  if (tasks_.count(spec.task_id)) {
    throw ValidationError("task '" + spec.task_id + "' is already registered");
  }
  auto id = spec.task_id;
  return tasks_.emplace(std::move(id), std::move(spec)).first->second;
}

const TaskSpec& TaskRegistry::get(std::string_view task_id) const {
  auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw Error("unknown task '" + std::string(task_id) + "'");
  return it->second;
}

bool TaskRegistry::contains(std::string_view task_id) const {
  return tasks_.find(task_id) != tasks_.end();
}

std::vector<std::string> TaskRegistry::task_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : tasks_) ids.push_back(id);
  return ids;
}

TaskRegistry TaskRegistry::builtin() {
  TaskRegistry r;
  r.register_task({.task_id = "mami",
                   .kind = TaskKind::classification,
                   .label_set = {"misogynous", "not misogynous"},
                   .metric = MetricKind::macro_f1,
                   .images_per_sample = 1,
                   .template_id = "mami"});
  // The test split is closed, evaluation runs on dev.
  r.register_task({.task_id = "hf",
                   .kind = TaskKind::classification,
                   .label_set = {"hateful", "not hateful"},
                   .metric = MetricKind::accuracy,
                   .images_per_sample = 1,
                   .template_id = "hf",
                   .eval_split = Split::dev});
  r.register_task({.task_id = "mvsa",
                   .kind = TaskKind::classification,
                   .label_set = {"positive", "negative", "neutral"},
                   .metric = MetricKind::kfold_accuracy,
                   .images_per_sample = 1,
                   .template_id = "mvsa",
                   .folds = 10});
  r.register_task({.task_id = "okvqa",
                   .kind = TaskKind::question_answering,
                   .label_set = {},
                   .metric = MetricKind::vqa_exact_match,
                   .images_per_sample = 1,
                   .template_id = "okvqa",
                   .answers_per_sample = 5});
  // Evaluated on test-public, ingested as split "test".
  r.register_task({.task_id = "nlvr2",
                   .kind = TaskKind::classification,
                   .label_set = {"true", "false"},
                   .metric = MetricKind::accuracy,
                   .images_per_sample = 2,
                   .template_id = "nlvr2"});
  return r;
}

}  // namespace ticl
