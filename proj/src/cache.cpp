#include "hedge/cache.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "hedge/error.hpp"

namespace hedge {

namespace fs = std::filesystem;
using nlohmann::json;

ContentCache::ContentCache(fs::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create cache directory " + dir_.string() + ": " + ec.message());
  }
}

fs::path ContentCache::entry_path(const std::string& ns, const std::string& key) const {
  const std::string shard = key.size() >= 2 ? key.substr(0, 2) : std::string("__");
  return dir_ / ns / shard / (key + ".json");
}

std::optional<json> ContentCache::get(const std::string& ns, const std::string& key) const {
  {
    std::shared_lock lock(mutex_);
    if (const auto it = memory_.find(ns + '/' + key); it != memory_.end()) {
      return std::optional<json>(std::in_place, it->second);
    }
  }
  if (dir_.empty()) return std::nullopt;
  std::ifstream in(entry_path(ns, key), std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return std::optional<json>(std::in_place, json::parse(buffer.str()));
  } catch (const json::parse_error&) {
    return std::nullopt;
  }
}

void ContentCache::put(const std::string& ns, const std::string& key, const json& value) {
  std::unique_lock lock(mutex_);
  memory_[ns + '/' + key] = value;
  if (dir_.empty()) return;

  static std::atomic<unsigned long long> counter{0};
  const fs::path target = entry_path(ns, key);
  std::error_code ec;
  fs::create_directories(target.parent_path(), ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + target.parent_path().string() + ": " + ec.message());
  std::ostringstream suffix;
  suffix << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '.' << counter++;
  const fs::path tmp = target.string() + suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write cache entry " + tmp.string());
    out << value.dump();
    if (!out) throw Error(ErrorCode::IoError, "cannot write cache entry " + tmp.string());
  }
  fs::rename(tmp, target, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot publish cache entry " + target.string() + ": " + ec.message());
}

fs::path resolve_cache_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("HEDGE_CACHE_DIR"); env && *env) return env;
  return {};
}

}  // namespace hedge
