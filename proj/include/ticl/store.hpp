#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ticl/core.hpp"

namespace ticl {

// ---- datasets -------------------------------------------------------------

/// Parses one dataset record. Labels are lowercased. Does not validate
/// against a task; see load_dataset.
Sample sample_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Sample& s);

/// Reads a JSON-lines dataset file. Order-preserving; every sample is
/// validated against `spec`. Throws ParseError naming the offending line.
std::vector<Sample> load_dataset(const std::filesystem::path& path, const TaskSpec& spec);
std::vector<Sample> parse_dataset(std::string_view content, const TaskSpec& spec,
                                  const std::string& source = "<dataset>");

/// Canonical byte form: one compact JSON object per line, sorted keys.
std::string serialize_dataset(const std::vector<Sample>& samples);

// ---- verbalizations -------------------------------------------------------

inline constexpr std::array<std::string_view, 4> kVerbalizationMethods = {
    "caption:blip", "caption:ofa", "caption:vit-gpt2", "tags"};

bool is_known_method(std::string_view method_id);

struct ImageAsText {
  std::string image_id;
  std::string method_id;
  std::string text;

  bool operator==(const ImageAsText&) const = default;
};

class VerbalizationStore {
 public:
  /// Rejects duplicate keys, unknown methods and empty text.
  void add(ImageAsText entry);

  const ImageAsText* find(std::string_view image_id, std::string_view method_id) const;
  /// Throws Error when absent.
  const std::string& text(std::string_view image_id, std::string_view method_id) const;

  std::size_t size() const { return entries_.size(); }
  std::vector<ImageAsText> entries() const;

 private:
  std::map<std::pair<std::string, std::string>, ImageAsText> entries_;
};

VerbalizationStore load_verbalizations(const std::filesystem::path& path);
VerbalizationStore parse_verbalizations(std::string_view content,
                                        const std::string& source = "<verbalizations>");
std::string serialize_verbalizations(const VerbalizationStore& store);

/// Image ids referenced by `samples` that lack a verbalization for `method_id`.
std::vector<std::string> missing_verbalizations(const std::vector<Sample>& samples,
                                                const VerbalizationStore& store,
                                                std::string_view method_id);

// ---- embeddings -----------------------------------------------------------

enum class Channel { text, image_as_text };
std::string_view to_string(Channel c);
Channel parse_channel(std::string_view s);

class EmbeddingStore {
 public:
  /// Rejects duplicate keys and dimension mismatches.
  void add(std::string sample_id, Channel channel, EmbeddingVector v);

  const EmbeddingVector* find(std::string_view sample_id, Channel channel) const;
  std::optional<std::size_t> dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }

  /// Entries in canonical (sample_id, channel) order.
  std::vector<std::tuple<std::string, Channel, EmbeddingVector>> entries() const;

 private:
  std::map<std::pair<std::string, Channel>, EmbeddingVector> entries_;
  std::optional<std::size_t> dim_;
};

EmbeddingStore load_embeddings(const std::filesystem::path& path);
EmbeddingStore parse_embeddings(std::string_view content,
                                const std::string& source = "<embeddings>");
std::string serialize_embeddings(const EmbeddingStore& store);

/// (sample_id, channel) pairs that similarity ranking needs but the store lacks.
/// The text channel is required only for samples with non-empty text.
std::vector<std::string> missing_embeddings(const std::vector<Sample>& samples,
                                            const EmbeddingStore& store);

// ---- shared ---------------------------------------------------------------

/// Calls `fn(record, line_number)` for each non-blank line of JSON-lines content.
void for_each_jsonl(std::string_view content, const std::string& source,
                    const std::function<void(const nlohmann::json&, std::size_t)>& fn);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace ticl
