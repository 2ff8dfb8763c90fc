#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ticl/core.hpp"
#include "ticl/store.hpp"

namespace ticl {

/// Prompt layout for one task. Blocks use `{{slot}}` placeholders:
///   task_description: {{labels}}
///   sample_block:     {{text}} {{image_context}} {{question}} {{answer}}
///   eval_block:       the sample_block slots except {{answer}}
/// `question` is the fixed task question; when empty, the sample text fills
/// {{question}} (free-form QA).
struct PromptTemplate {
  std::string template_id;
  int version = 1;
  std::string task_description;
  std::string question;
  std::string sample_block;
  std::string eval_block;
  std::string joiner = "\n\n";
};

inline constexpr std::string_view kAnswerCue = "Answer:";
inline constexpr std::string_view kImageContextJoiner = " | ";

/// Throws ValidationError listing the first violated template invariant.
void validate(const PromptTemplate& t);

/// Parses the `@@ section` text format (see templates/README.md).
PromptTemplate parse_template(std::string_view content, const std::string& source = "<template>");
PromptTemplate load_template(const std::filesystem::path& path);
std::string serialize_template(const PromptTemplate& t);

/// Built-in templates: mami, hf, mvsa, okvqa, nlvr2.
const PromptTemplate& default_template(std::string_view template_id);
std::vector<std::string> default_template_ids();

/// Deterministic token counter. The default approximation is
/// ceil(byte_length / chars_per_token); an external counter (e.g. a backend
/// tokenizer endpoint) can be plugged in instead.
class TokenCounter {
 public:
  using Fn = std::function<std::size_t(std::string_view)>;

  TokenCounter() = default;
  static TokenCounter approximate(double chars_per_token = 4.0);
  static TokenCounter external(Fn fn, std::string id);

  std::size_t count(std::string_view text) const;
  const std::string& id() const { return id_; }

 private:
  double chars_per_token_ = 4.0;
  Fn external_;
  std::string id_ = "approx:4";
};

std::size_t count_tokens(std::string_view text, double chars_per_token = 4.0);

struct RenderedPrompt {
  std::string text;
  std::string task_description;
  std::vector<std::string> sample_blocks;
  std::string eval_block;
  std::size_t token_count = 0;
};

/// Renders task description, the in-context samples in the given order, and
/// the evaluation block ending at "Answer:".
RenderedPrompt build_prompt(const TaskSpec& spec, const PromptTemplate& tmpl,
                            std::span<const Sample> samples, const Sample& eval,
                            const VerbalizationStore& verbalizations, std::string_view method_id,
                            const TokenCounter& counter = {});

/// Verbalizations of the sample's images in image_ids order, joined by " | ".
std::string image_context(const Sample& s, const VerbalizationStore& verbalizations,
                          std::string_view method_id);

/// Gold answer shown in an in-context block: the label, or the most frequent
/// gold answer (first on ties) for QA.
std::string demonstration_answer(const Sample& s);

/// Answer text from a backend output. Echoed outputs are cut after the last
/// "Answer:"; the result is trimmed either way.
std::string extract_generation(std::string_view output, bool echoed);

}  // namespace ticl
