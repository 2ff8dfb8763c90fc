#include "ticl/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ticl/error.hpp"
#include "ticl/text.hpp"

namespace ticl {
namespace {

constexpr std::string_view kSlotOpen = "{{";
constexpr std::string_view kSlotClose = "}}";
const std::set<std::string, std::less<>> kBlockSlots = {"text", "image_context", "question",
                                                        "answer"};

std::map<std::string, int> slot_counts(std::string_view block, const std::string& where) {
  std::map<std::string, int> counts;
  for (auto pos = block.find(kSlotOpen); pos != std::string_view::npos;
       pos = block.find(kSlotOpen, pos)) {
    auto end = block.find(kSlotClose, pos + kSlotOpen.size());
    if (end == std::string_view::npos) throw ValidationError(where + ": unterminated slot");
    ++counts[std::string(block.substr(pos + kSlotOpen.size(), end - pos - kSlotOpen.size()))];
    pos = end + kSlotClose.size();
  }
  return counts;
}

std::string fill(std::string_view block, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto open = block.find(kSlotOpen, pos);
    if (open == std::string_view::npos) break;
    auto close = block.find(kSlotClose, open + kSlotOpen.size());
    auto name = std::string(block.substr(open + kSlotOpen.size(), close - open - kSlotOpen.size()));
    auto it = values.find(name);
    if (it == values.end()) throw ValidationError("no value for slot '" + name + "'");
    out.append(block.substr(pos, open - pos));
    out += it->second;
    pos = close + kSlotClose.size();
  }
  out.append(block.substr(pos));
  return out;
}

std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      char c = s[++i];
      out += c == 'n' ? '\n' : c == 't' ? '\t' : c;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '\n') out += "\\n";
    else if (c == '\t') out += "\\t";
    else if (c == '\\') out += "\\\\";
    else out += c;
  }
  return out;
}

bool has_section_marker(std::string_view block) {
  return block.starts_with("@@ ") || block.find("\n@@ ") != std::string_view::npos;
}

}  // namespace

void validate(const PromptTemplate& t) {
  const std::string where = "template '" + t.template_id + "'";
  if (t.template_id.empty()) throw ValidationError("template_id must not be empty");

  auto task_slots = slot_counts(t.task_description, where + " task_description");
  for (const auto& [name, n] : task_slots) {
    if (name != "labels") throw ValidationError(where + ": unknown slot '" + name + "' in task_description");
    if (n != 1) throw ValidationError(where + ": {{labels}} must appear at most once");
  }
  if (!slot_counts(t.question, where).empty()) {
    throw ValidationError(where + ": the question must not contain slots");
  }

  auto sample_slots = slot_counts(t.sample_block, where + " sample_block");
  auto eval_slots = slot_counts(t.eval_block, where + " eval_block");
  for (const auto* slots : {&sample_slots, &eval_slots}) {
    for (const auto& [name, n] : *slots) {
      if (!kBlockSlots.count(name)) throw ValidationError(where + ": unknown slot '" + name + "'");
      if (n != 1) throw ValidationError(where + ": slot '" + name + "' appears more than once");
    }
  }
  if (!sample_slots.count("answer")) throw ValidationError(where + ": sample_block lacks {{answer}}");
  if (!sample_slots.count("image_context")) {
    throw ValidationError(where + ": sample_block lacks {{image_context}}");
  }
  if (eval_slots.count("answer")) throw ValidationError(where + ": eval_block must not contain {{answer}}");
  auto expected = sample_slots;
  expected.erase("answer");
  if (eval_slots != expected) {
    throw ValidationError(where + ": eval_block slots differ from sample_block slots");
  }

  if (!t.eval_block.ends_with(kAnswerCue)) {
    throw ValidationError(where + ": eval_block must end with \"Answer:\"");
  }
  if (text::count_occurrences(t.eval_block, kAnswerCue) != 1 ||
      text::count_occurrences(t.sample_block, kAnswerCue) != 1) {
    throw ValidationError(where + ": each block must contain \"Answer:\" exactly once");
  }
  if (text::count_occurrences(t.task_description, kAnswerCue) != 0 ||
      text::count_occurrences(t.question, kAnswerCue) != 0) {
    throw ValidationError(where + ": \"Answer:\" is reserved for the blocks");
  }
  if (t.joiner.empty()) throw ValidationError(where + ": empty joiner");
  for (const auto* block : {&t.task_description, &t.question, &t.sample_block, &t.eval_block}) {
    if (has_section_marker(*block)) throw ValidationError(where + ": line starting with '@@ '");
  }
}

PromptTemplate parse_template(std::string_view content, const std::string& source) {
  std::map<std::string, std::string> sections;
  std::string current;
  std::vector<std::string> lines;
  auto flush = [&]() {
    if (current.empty()) return;
    std::string body = text::join(lines, "\n");
    while (body.ends_with('\n')) body.pop_back();
    if (!sections.emplace(current, body).second) {
      throw ParseError(source, 0, "duplicate section '" + current + "'");
    }
    lines.clear();
  };

  std::size_t pos = 0, line_no = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string line(content.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.starts_with("@@ ")) {
      flush();
      current = std::string(text::trim(std::string_view(line).substr(3)));
      continue;
    }
    if (current.empty()) {
      if (text::trim(line).empty() || line.starts_with("#")) continue;
      throw ParseError(source, line_no, "text before the first section");
    }
    lines.push_back(std::move(line));
  }
  flush();

  auto take = [&](const char* name, bool required) -> std::string {
    auto it = sections.find(name);
    if (it == sections.end()) {
      if (required) throw ParseError(source, 0, std::string("missing section '") + name + "'");
      return {};
    }
    auto v = std::move(it->second);
    sections.erase(it);
    return v;
  };

  PromptTemplate t;
  t.template_id = std::string(text::trim(take("id", true)));
  try {
    t.version = std::stoi(take("version", true));
  } catch (const std::logic_error&) {
    throw ParseError(source, 0, "version must be an integer");
  }
  t.task_description = take("task_description", true);
  t.question = take("question", false);
  t.sample_block = take("sample_block", true);
  t.eval_block = take("eval_block", true);
  t.joiner = unescape(text::trim(take("joiner", true)));
  if (!sections.empty()) {
    throw ParseError(source, 0, "unknown section '" + sections.begin()->first + "'");
  }
  try {
    validate(t);
  } catch (const ValidationError& e) {
    throw ParseError(source, 0, e.what());
  }
  return t;
}

PromptTemplate load_template(const std::filesystem::path& path) {
  return parse_template(read_file(path), path.string());
}

std::string serialize_template(const PromptTemplate& t) {
  std::string out = "@@ id\n" + t.template_id + "\n@@ version\n" + std::to_string(t.version) +
                    "\n@@ task_description\n" + t.task_description + "\n";
  if (!t.question.empty()) out += "@@ question\n" + t.question + "\n";
  out += "@@ sample_block\n" + t.sample_block + "\n@@ eval_block\n" + t.eval_block +
         "\n@@ joiner\n" + escape(t.joiner) + "\n";
  return out;
}

namespace {

struct EmbeddedTemplate {
  std::string_view id;
  std::string_view content;
};

constexpr EmbeddedTemplate kEmbedded[] = {
#include "ticl/default_templates.inc"
};

const std::map<std::string, PromptTemplate, std::less<>>& defaults() {
  static const auto table = [] {
    std::map<std::string, PromptTemplate, std::less<>> m;
    for (const auto& e : kEmbedded) {
      auto t = parse_template(e.content, std::string(e.id) + ".tmpl");
      m.emplace(t.template_id, std::move(t));
    }
    return m;
  }();
  return table;
}

}  // namespace

const PromptTemplate& default_template(std::string_view template_id) {
  const auto& table = defaults();
  auto it = table.find(template_id);
  if (it == table.end()) throw Error("no default template '" + std::string(template_id) + "'");
  return it->second;
}

std::vector<std::string> default_template_ids() {
  std::vector<std::string> ids;
  for (const auto& [id, _] : defaults()) ids.push_back(id);
  return ids;
}

TokenCounter TokenCounter::approximate(double chars_per_token) {
  if (!(chars_per_token > 0.0)) throw ValidationError("chars_per_token must be positive");
  TokenCounter c;
  c.chars_per_token_ = chars_per_token;
  std::string cpt = std::to_string(chars_per_token);
  while (cpt.ends_with('0')) cpt.pop_back();
  if (cpt.ends_with('.')) cpt.pop_back();
  c.id_ = "approx:" + cpt;
  return c;
}

TokenCounter TokenCounter::external(Fn fn, std::string id) {
  TokenCounter c;
  c.external_ = std::move(fn);
  c.id_ = std::move(id);
  return c;
}

std::size_t TokenCounter::count(std::string_view text) const {
  if (external_) return external_(text);
  return count_tokens(text, chars_per_token_);
}

std::size_t count_tokens(std::string_view text, double chars_per_token) {
  if (text.empty()) return 0;
  return static_cast<std::size_t>(std::ceil(static_cast<double>(text.size()) / chars_per_token));
}

std::string image_context(const Sample& s, const VerbalizationStore& verbalizations,
                          std::string_view method_id) {
  std::vector<std::string> parts;
  for (const auto& id : s.image_ids) parts.push_back(verbalizations.text(id, method_id));
  return text::join(parts, kImageContextJoiner);
}

std::string demonstration_answer(const Sample& s) {
  if (s.gold_label) return *s.gold_label;
  if (!s.gold_answers || s.gold_answers->empty()) {
    throw ValidationError("sample '" + s.sample_id + "' has no gold answer");
  }
  const auto& answers = *s.gold_answers;
  std::string best;
  long best_count = 0;
  for (const auto& a : answers) {
    long c = std::count(answers.begin(), answers.end(), a);
    if (c > best_count) {
      best = a;
      best_count = c;
    }
  }
  return best;
}

RenderedPrompt build_prompt(const TaskSpec& spec, const PromptTemplate& tmpl,
                            std::span<const Sample> samples, const Sample& eval,
                            const VerbalizationStore& verbalizations, std::string_view method_id,
                            const TokenCounter& counter) {
  validate(tmpl);
  if (spec.is_classification() && tmpl.task_description.find("{{labels}}") == std::string::npos) {
    throw ValidationError("template '" + tmpl.template_id +
                          "' must list the labels of classification task '" + spec.task_id + "'");
  }

  auto slots_for = [&](const Sample& s) {
    return std::map<std::string, std::string>{
        {"text", s.text},
        {"image_context", image_context(s, verbalizations, method_id)},
        {"question", tmpl.question.empty() ? s.text : tmpl.question}};
  };

  RenderedPrompt p;
  p.task_description = fill(tmpl.task_description, {{"labels", text::join(spec.label_set, ", ")}});
  for (const auto& s : samples) {
    auto values = slots_for(s);
    values["answer"] = demonstration_answer(s);
    p.sample_blocks.push_back(fill(tmpl.sample_block, values));
  }
  p.eval_block = fill(tmpl.eval_block, slots_for(eval));

  p.text = p.task_description;
  for (const auto& block : p.sample_blocks) p.text += tmpl.joiner + block;
  p.text += tmpl.joiner + p.eval_block;
  p.token_count = counter.count(p.text);
  return p;
}

std::string extract_generation(std::string_view output, bool echoed) {
  if (echoed) {
    auto pos = output.rfind(kAnswerCue);
    if (pos != std::string_view::npos) output = output.substr(pos + kAnswerCue.size());
  }
  return std::string(text::trim(output));
}

}  // namespace ticl
