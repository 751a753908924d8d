#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>

#include <nlohmann/json.hpp>

namespace hedge {

/// Content-addressed JSON store. Entries live at dir/<namespace>/<xx>/<key>.json
/// and are published by atomic rename, so concurrent readers never observe a
/// partial entry. An empty directory keeps everything in memory.
class ContentCache {
 public:
  ContentCache() = default;
  explicit ContentCache(std::filesystem::path dir);

  std::optional<nlohmann::json> get(const std::string& ns, const std::string& key) const;
  void put(const std::string& ns, const std::string& key, const nlohmann::json& value);

  const std::filesystem::path& directory() const noexcept { return dir_; }

 private:
  std::filesystem::path entry_path(const std::string& ns, const std::string& key) const;

  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, nlohmann::json> memory_;
};

/// `flag` if non-empty, else HEDGE_CACHE_DIR, else empty (in-memory).
std::filesystem::path resolve_cache_dir(const std::string& flag);

}  // namespace hedge
