#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "mosaic/common.hpp"

namespace mosaic {

/// Flat key-value run configuration ("key = value" lines, '#' comments).
/// CLI flags override file keys.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig load(const std::filesystem::path& path) {
    std::ifstream f(path);
    require(f.is_open(), "config: cannot open " + path.string());
    KeyValueConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto strip = [](std::string s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
      };
      line = strip(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      require(eq != std::string::npos,
              "config: expected 'key = value' at " + path.string() + ":" + std::to_string(lineno));
      cfg.values_[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
    }
    return cfg;
  }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Content digest of a canonical JSON document (stamped into manifests so
/// runs can be reproduced and outputs matched to their configuration).
inline std::string config_digest(const nlohmann::json& config) {
  std::string canonical = config.dump();
  return hex64(fnv1a64(canonical.data(), canonical.size()));
}

inline std::string file_digest(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.is_open(), "digest: cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0)
    h = fnv1a64(buf, static_cast<std::size_t>(f.gcount()), h);
  return hex64(h);
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream f(path);
  require(f.is_open(), "cannot open " + path.string());
  f << doc.dump(2) << "\n";
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  require(f.is_open(), "cannot open " + path.string());
  nlohmann::json doc = nlohmann::json::parse(f, nullptr, false);
  require(!doc.is_discarded(), "malformed JSON in " + path.string());
  return doc;
}

}  // namespace mosaic
