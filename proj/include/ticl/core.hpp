#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ticl {

enum class TaskKind { classification, question_answering };
enum class MetricKind { macro_f1, accuracy, kfold_accuracy, vqa_exact_match };
enum class Split { train, test, dev };

std::string_view to_string(TaskKind k);
std::string_view to_string(MetricKind m);
std::string_view to_string(Split s);
TaskKind parse_task_kind(std::string_view s);
MetricKind parse_metric_kind(std::string_view s);
Split parse_split(std::string_view s);

/// Per-dataset settings: label vocabulary, metric and prompt template.
struct TaskSpec {
  std::string task_id;
  TaskKind kind = TaskKind::classification;
  std::vector<std::string> label_set;  // registry order; empty for QA
  MetricKind metric = MetricKind::accuracy;
  int images_per_sample = 1;
  std::string template_id;
  Split eval_split = Split::test;
  int folds = 0;                             // > 0 only for kfold tasks
  std::optional<int> answers_per_sample;     // fixed gold-answer count for QA, if any

  bool is_classification() const { return kind == TaskKind::classification; }
  bool is_kfold() const { return metric == MetricKind::kfold_accuracy; }
};

struct Sample {
  std::string sample_id;
  std::string task_id;
  std::string text;
  std::vector<std::string> image_ids;
  std::optional<std::string> gold_label;
  std::optional<std::vector<std::string>> gold_answers;
  Split split = Split::train;
  std::optional<int> fold;

  bool operator==(const Sample&) const = default;
};

struct CandidateAnswerSet {
  std::vector<std::string> candidates;  // empty means free generation
};

CandidateAnswerSet candidates_for(const TaskSpec& spec);

/// Fixed-dimension real vector. Construction rejects non-finite values.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values);

  std::size_t dim() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  bool is_zero() const;

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

/// One violated invariant. `invariant` is a stable identifier usable in tests.
struct Violation {
  std::string invariant;
  std::string message;
};

std::vector<Violation> validate_sample(const Sample& s, const TaskSpec& spec);

/// Throws ValidationError when the spec itself is malformed.
void validate_task_spec(const TaskSpec& spec);

/// Lowercases labels in place; labels are case-insensitive identifiers.
TaskSpec normalized(TaskSpec spec);

class TaskRegistry {
 public:
  /// Normalizes and validates `spec`; rejects duplicate ids.
  const TaskSpec& register_task(TaskSpec spec);

  /// Throws Error for unknown ids.
  const TaskSpec& get(std::string_view task_id) const;
  bool contains(std::string_view task_id) const;
  std::vector<std::string> task_ids() const;

  /// Registry preloaded with the five evaluation datasets
  /// (mami, hf, mvsa, okvqa, nlvr2).
  static TaskRegistry builtin();

 private:
  std::map<std::string, TaskSpec, std::less<>> tasks_;
};

}  // namespace ticl
