#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>

#include "ticl/record.hpp"

namespace ticl {

/// Inputs that identify one cached generation. The key is content-addressed:
/// any change to the prompt bytes yields a different key.
struct CacheKeyParts {
  std::string sample_id;
  std::string prompt;
  std::string backend_id;
  std::string generation_params;  // canonical serialization
  std::string scope;              // config fingerprint, prediction path, repeat index
};

std::string make_cache_key(const CacheKeyParts& parts);

/// On-disk prediction cache, one file per key. Survives restarts.
/// Concurrent readers; writers are serialized and publish via atomic rename.
class PredictionCache {
 public:
  using CorruptionReporter = std::function<void(const std::string& key, const std::string& why)>;

  explicit PredictionCache(std::filesystem::path dir, CorruptionReporter reporter = {});

  /// Corrupt entries are reported and treated as absent.
  std::optional<PredictionRecord> get(const std::string& key) const;
  void put(const std::string& key, const PredictionRecord& record);

  std::size_t corrupt_entries_seen() const { return corrupt_.load(); }
  std::filesystem::path path_for(const std::string& key) const;

 private:
  std::filesystem::path dir_;
  CorruptionReporter reporter_;
  mutable std::shared_mutex mutex_;
  mutable std::atomic<std::size_t> corrupt_{0};
};

}  // namespace ticl
