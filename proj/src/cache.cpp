#include "ticl/cache.hpp"

#include <mutex>

#include "ticl/error.hpp"
#include "ticl/hash.hpp"
#include "ticl/store.hpp"

namespace ticl {

std::string make_cache_key(const CacheKeyParts& p) {
  // Length-prefixed fields so no two distinct tuples serialize identically.
  std::string buf;
  for (const auto* field : {&p.sample_id, &p.prompt, &p.backend_id, &p.generation_params,
                            &p.scope}) {
    buf += std::to_string(field->size());
    buf += ':';
    buf += *field;
  }
  return sha256_hex(buf);
}

PredictionCache::PredictionCache(std::filesystem::path dir, CorruptionReporter reporter)
    : dir_(std::move(dir)), reporter_(std::move(reporter)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path PredictionCache::path_for(const std::string& key) const {
  if (key.size() < 3) throw Error("cache key too short");
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<PredictionRecord> PredictionCache::get(const std::string& key) const {
  auto path = path_for(key);
  std::string content;
  {
    std::shared_lock lock(mutex_);
    if (!std::filesystem::exists(path)) return std::nullopt;
    content = read_file(path);
  }
  auto corrupt = [&](const std::string& why) -> std::optional<PredictionRecord> {
    ++corrupt_;
    if (reporter_) reporter_(key, why);
    return std::nullopt;
  };
  try {
    auto j = nlohmann::json::parse(content);
    if (j.at("key").get<std::string>() != key) return corrupt("key mismatch");
    const auto& rec = j.at("record");
    if (sha256_hex(rec.dump()) != j.at("checksum").get<std::string>()) {
      return corrupt("checksum mismatch");
    }
    return record_from_json(rec);
  } catch (const std::exception& e) {
    return corrupt(e.what());
  }
}

void PredictionCache::put(const std::string& key, const PredictionRecord& record) {
  auto rec = to_json(record);
  nlohmann::json entry = {{"key", key}, {"record", rec}, {"checksum", sha256_hex(rec.dump())}};
  std::unique_lock lock(mutex_);
  write_file_atomic(path_for(key), entry.dump() + "\n");
}

}  // namespace ticl
