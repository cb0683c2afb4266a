// config.hpp — line-based `key = value` configuration with `#` comments,
// typed lookups, and a canonical content hash for artifact manifests.
#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace qcsurf {

struct Config {
    std::map<std::string, std::string> values;

    bool has(const std::string& key) const { return values.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values[key] = value; }
    std::string get(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;
};

Config parse_config(const std::string& text);   // throws on malformed lines
Config load_config(const std::string& path);

// FNV-1a over the sorted canonical `key=value` lines, so formatting and key
// order do not change the hash.
uint64_t config_hash(const Config& cfg);

}  // namespace qcsurf
