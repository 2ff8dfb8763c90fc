#include "ticl/store.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "ticl/error.hpp"
#include "ticl/text.hpp"

namespace ticl {
namespace {

void require_known_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ValidationError("record is not a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError("unknown field '" + key + "'");
    }
  }
}

std::string describe(const std::vector<Violation>& violations) {
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += "; ";
    out += v.invariant + ": " + v.message;
  }
  return out;
}

}  // namespace

// ---- shared ---------------------------------------------------------------

void for_each_jsonl(std::string_view content, const std::string& source,
                    const std::function<void(const nlohmann::json&, std::size_t)>& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    auto line = content.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
    }
    try {
      fn(j, line_no);
    } catch (const ParseError&) {
      throw;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, e.what());
    } catch (const Error& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  static std::atomic<unsigned> counter{0};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

// ---- datasets -------------------------------------------------------------

Sample sample_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"sample_id", "task_id", "text", "image_ids", "gold_label",
                         "gold_answers", "split", "fold"});
  Sample s;
  s.sample_id = j.at("sample_id").get<std::string>();
  s.task_id = j.at("task_id").get<std::string>();
  s.text = j.at("text").get<std::string>();
  s.image_ids = j.at("image_ids").get<std::vector<std::string>>();
  if (j.contains("gold_label")) s.gold_label = text::normalize(j.at("gold_label").get<std::string>());
  if (j.contains("gold_answers")) {
    s.gold_answers = j.at("gold_answers").get<std::vector<std::string>>();
  }
  s.split = parse_split(j.at("split").get<std::string>());
  if (j.contains("fold")) s.fold = j.at("fold").get<int>();
  return s;
}

nlohmann::json to_json(const Sample& s) {
  nlohmann::json j = {{"sample_id", s.sample_id},
                      {"task_id", s.task_id},
                      {"text", s.text},
                      {"image_ids", s.image_ids},
                      {"split", std::string(to_string(s.split))}};
  if (s.gold_label) j["gold_label"] = *s.gold_label;
  if (s.gold_answers) j["gold_answers"] = *s.gold_answers;
  if (s.fold) j["fold"] = *s.fold;
  return j;
}

std::vector<Sample> parse_dataset(std::string_view content, const TaskSpec& spec,
                                  const std::string& source) {
  std::vector<Sample> out;
  std::set<std::string> ids;
  for_each_jsonl(content, source, [&](const nlohmann::json& j, std::size_t line) {
    Sample s = sample_from_json(j);
    if (auto violations = validate_sample(s, spec); !violations.empty()) {
      throw ParseError(source, line, "sample '" + s.sample_id + "': " + describe(violations));
    }
    if (!ids.insert(s.sample_id).second) {
      throw ParseError(source, line, "duplicate sample_id '" + s.sample_id + "'");
    }
    out.push_back(std::move(s));
  });
  return out;
}

std::vector<Sample> load_dataset(const std::filesystem::path& path, const TaskSpec& spec) {
  return parse_dataset(read_file(path), spec, path.string());
}

std::string serialize_dataset(const std::vector<Sample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    out += to_json(s).dump();
    out += '\n';
  }
  return out;
}

// ---- verbalizations -------------------------------------------------------

bool is_known_method(std::string_view method_id) {
  return std::find(kVerbalizationMethods.begin(), kVerbalizationMethods.end(), method_id) !=
         kVerbalizationMethods.end();
}

void VerbalizationStore::add(ImageAsText entry) {
  if (entry.image_id.empty()) throw ValidationError("verbalization with empty image_id");
  if (!is_known_method(entry.method_id)) {
    throw ValidationError("unknown method_id '" + entry.method_id + "'");
  }
  if (text::trim(entry.text).empty()) {
    throw ValidationError("empty text for (" + entry.image_id + ", " + entry.method_id + ")");
  }
  auto key = std::make_pair(entry.image_id, entry.method_id);
  if (entries_.count(key)) {
    throw ValidationError("duplicate verbalization (" + entry.image_id + ", " + entry.method_id +
                          ")");
  }
  entries_.emplace(std::move(key), std::move(entry));
}

const ImageAsText* VerbalizationStore::find(std::string_view image_id,
                                            std::string_view method_id) const {
  auto it = entries_.find({std::string(image_id), std::string(method_id)});
  return it == entries_.end() ? nullptr : &it->second;
}

const std::string& VerbalizationStore::text(std::string_view image_id,
                                            std::string_view method_id) const {
  if (const auto* e = find(image_id, method_id)) return e->text;
  throw Error("no verbalization for (" + std::string(image_id) + ", " + std::string(method_id) +
              ")");
}

std::vector<ImageAsText> VerbalizationStore::entries() const {
  std::vector<ImageAsText> out;
  out.reserve(entries_.size());
  for (const auto& [_, e] : entries_) out.push_back(e);
  return out;
}

VerbalizationStore parse_verbalizations(std::string_view content, const std::string& source) {
  VerbalizationStore store;
  for_each_jsonl(content, source, [&](const nlohmann::json& j, std::size_t) {
    require_known_keys(j, {"image_id", "method_id", "text"});
    store.add({j.at("image_id").get<std::string>(), j.at("method_id").get<std::string>(),
               j.at("text").get<std::string>()});
  });
  return store;
}

VerbalizationStore load_verbalizations(const std::filesystem::path& path) {
  return parse_verbalizations(read_file(path), path.string());
}

std::string serialize_verbalizations(const VerbalizationStore& store) {
  std::string out;
  for (const auto& e : store.entries()) {
    out += nlohmann::json{{"image_id", e.image_id}, {"method_id", e.method_id}, {"text", e.text}}
               .dump();
    out += '\n';
  }
  return out;
}

std::vector<std::string> missing_verbalizations(const std::vector<Sample>& samples,
                                                const VerbalizationStore& store,
                                                std::string_view method_id) {
  std::set<std::string> missing;
  for (const auto& s : samples) {
    for (const auto& id : s.image_ids) {
      if (!store.find(id, method_id)) missing.insert(id);
    }
  }
  return {missing.begin(), missing.end()};
}

// ---- embeddings -----------------------------------------------------------

std::string_view to_string(Channel c) {
  return c == Channel::text ? "text" : "image-as-text";
}

Channel parse_channel(std::string_view s) {
  if (s == "text") return Channel::text;
  if (s == "image-as-text") return Channel::image_as_text;
  throw ValidationError("unknown channel '" + std::string(s) + "'");
}

void EmbeddingStore::add(std::string sample_id, Channel channel, EmbeddingVector v) {
  if (v.dim() == 0) throw ValidationError("empty embedding for '" + sample_id + "'");
  if (dim_ && *dim_ != v.dim()) {
    throw ValidationError("dimension mismatch for '" + sample_id + "': store has " +
                          std::to_string(*dim_) + ", got " + std::to_string(v.dim()));
  }
  auto key = std::make_pair(sample_id, channel);
  if (entries_.count(key)) {
    throw ValidationError("duplicate embedding (" + sample_id + ", " +
                          std::string(to_string(channel)) + ")");
  }
  dim_ = v.dim();
  entries_.emplace(std::move(key), std::move(v));
}

const EmbeddingVector* EmbeddingStore::find(std::string_view sample_id, Channel channel) const {
  auto it = entries_.find({std::string(sample_id), channel});
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::tuple<std::string, Channel, EmbeddingVector>> EmbeddingStore::entries() const {
  std::vector<std::tuple<std::string, Channel, EmbeddingVector>> out;
  out.reserve(entries_.size());
  for (const auto& [key, v] : entries_) out.emplace_back(key.first, key.second, v);
  return out;
}

EmbeddingStore parse_embeddings(std::string_view content, const std::string& source) {
  EmbeddingStore store;
  for_each_jsonl(content, source, [&](const nlohmann::json& j, std::size_t) {
    require_known_keys(j, {"sample_id", "channel", "values"});
    const auto& values = j.at("values");
    if (!values.is_array()) throw ValidationError("values must be an array");
    std::vector<double> v;
    v.reserve(values.size());
    for (const auto& x : values) {
      if (!x.is_number()) throw ValidationError("non-numeric embedding value");
      v.push_back(x.get<double>());
    }
    store.add(j.at("sample_id").get<std::string>(),
              parse_channel(j.at("channel").get<std::string>()), EmbeddingVector(std::move(v)));
  });
  return store;
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  return parse_embeddings(read_file(path), path.string());
}

std::string serialize_embeddings(const EmbeddingStore& store) {
  std::string out;
  for (const auto& [id, channel, v] : store.entries()) {
    out += nlohmann::json{{"sample_id", id},
                          {"channel", std::string(to_string(channel))},
                          {"values", v.values()}}
               .dump();
    out += '\n';
  }
  return out;
}

std::vector<std::string> missing_embeddings(const std::vector<Sample>& samples,
                                            const EmbeddingStore& store) {
  std::vector<std::string> missing;
  for (const auto& s : samples) {
    if (!store.find(s.sample_id, Channel::image_as_text)) {
      missing.push_back(s.sample_id + "/image-as-text");
    }
    if (!text::trim(s.text).empty() && !store.find(s.sample_id, Channel::text)) {
      missing.push_back(s.sample_id + "/text");
    }
  }
  return missing;
}

}  // namespace ticl
