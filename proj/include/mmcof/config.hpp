#pragma once

#include <map>
#include <string>

namespace mmcof {

// Flat `key = value` text file; '#' starts a comment. Lookups fall back to
// the given default, so precedence is CLI flag > file entry > default.
class Config {
  public:
    Config() = default;
    static Config from_file(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get(const std::string& key, const std::string& fallback) const;
    double get(const std::string& key, double fallback) const;
    long get(const std::string& key, long fallback) const;
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace mmcof
