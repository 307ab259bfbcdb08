#pragma once

// Flat key=value configuration files.
//
//   # comment
//   beta = 0.96
//   variant = irreducible
//
// Keys are case-sensitive; later assignments override earlier ones.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>

namespace dpreach {

class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::string_view text);
    static KeyValueConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    // Accepts "key=value"; throws ConfigError if there is no '='.
    void apply_override(std::string_view assignment);

    bool has(const std::string& key) const { return entries_.contains(key); }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;

    // Throws ConfigError naming the first key not in `allowed`.
    void require_known(std::span<const std::string_view> allowed) const;

    // FNV-1a over the sorted "key=value\n" lines; stable across runs.
    std::uint64_t hash() const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

}  // namespace dpreach
