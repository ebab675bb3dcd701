#pragma once

// Append-only response store keyed by a 256-bit content hash.
//
// Each entry is one JSON line {"k": <hex key>, "v": <text>}. Appends take an
// exclusive flock so several processes can share one file; a miss re-reads
// whatever other writers appended since the last scan. Lines that fail to
// parse are skipped and counted.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

namespace gvc {

class ResponseCache {
 public:
  // Creates the file (and parent directories) if needed. Throws ConfigError
  // when the path cannot be opened for appending.
  static std::shared_ptr<ResponseCache> open(const std::filesystem::path& path);

  explicit ResponseCache(std::filesystem::path path);
  ResponseCache(const ResponseCache&) = delete;
  ResponseCache& operator=(const ResponseCache&) = delete;

  std::optional<std::string> get(const std::string& key);
  void put(const std::string& key, const std::string& value);

  std::size_t size() const;
  std::size_t corrupt_entries() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  void scan_locked();

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
  std::uintmax_t scanned_bytes_ = 0;
  std::size_t corrupt_ = 0;
};

}  // namespace gvc
