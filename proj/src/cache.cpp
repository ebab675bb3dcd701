#include "gvc/cache.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "gvc/errors.hpp"

namespace gvc {

namespace {

// Holds an flock for the lifetime of the object.
class FileLock {
 public:
  FileLock(int fd, int op) : fd_(fd) {
    while (::flock(fd_, op) != 0 && errno == EINTR) {
    }
  }
  ~FileLock() { ::flock(fd_, LOCK_UN); }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_;
};

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }

 private:
  int fd_;
};

}  // namespace

std::shared_ptr<ResponseCache> ResponseCache::open(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  Fd fd(::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644));
  if (fd.get() < 0)
    throw ConfigError("cannot open cache " + path.string() + ": " + std::strerror(errno));
  auto cache = std::make_shared<ResponseCache>(path);
  std::lock_guard lock(cache->mu_);
  cache->scan_locked();
  return cache;
}

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {}

void ResponseCache::scan_locked() {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  in.seekg(static_cast<std::streamoff>(scanned_bytes_));
  std::string line;
  while (true) {
    const auto start = in.tellg();
    if (!std::getline(in, line)) break;
    if (in.eof()) {
      // Partial trailing line from a writer still appending; retry later.
      scanned_bytes_ = static_cast<std::uintmax_t>(start);
      return;
    }
    scanned_bytes_ = static_cast<std::uintmax_t>(in.tellg());
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      entries_.insert_or_assign(j.at("k").get<std::string>(), j.at("v").get<std::string>());
    } catch (const nlohmann::json::exception&) {
      ++corrupt_;
      std::cerr << "gvc: skipping corrupt cache entry in " << path_.string() << "\n";
    }
  }
}

std::optional<std::string> ResponseCache::get(const std::string& key) {
  std::lock_guard lock(mu_);
  if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  scan_locked();
  if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  return std::nullopt;
}

void ResponseCache::put(const std::string& key, const std::string& value) {
  const std::string line = nlohmann::json{{"k", key}, {"v", value}}.dump() + "\n";
  std::lock_guard lock(mu_);
  Fd fd(::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644));
  if (fd.get() < 0) throw ConfigError("cannot append to cache " + path_.string());
  {
    FileLock file_lock(fd.get(), LOCK_EX);
    std::size_t written = 0;
    while (written < line.size()) {
      const auto n = ::write(fd.get(), line.data() + written, line.size() - written);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error("cache write failed: " + std::string(std::strerror(errno)));
      }
      written += static_cast<std::size_t>(n);
    }
  }
  entries_.insert_or_assign(key, value);
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::size_t ResponseCache::corrupt_entries() const {
  std::lock_guard lock(mu_);
  return corrupt_;
}

}  // namespace gvc
