#pragma once
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ets/errors.hpp"

namespace ets::harness {

// Plain-text run configuration: `[section]` headers, `key = value` entries,
// `#` comments, blank lines ignored.  Keys are unique within a section.
//
// Typed getters take the caller's default and record the value actually in
// effect, so a run can write back the exact configuration it executed with,
// defaults materialized.  Lookups are case-sensitive.
class Config {
 public:
  Config() = default;

  static Config parse_file(const std::string& path);
  static Config parse_text(const std::string& text,
                           const std::string& origin = "<text>");

  bool has(const std::string& section, const std::string& key) const;

  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& fallback) const;
  long long get_int(const std::string& section, const std::string& key,
                    long long fallback) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;
  // comma-separated values, outer whitespace trimmed, empties dropped
  std::vector<std::string> get_list(const std::string& section,
                                    const std::string& key,
                                    const std::string& fallback) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& section,
                                          const std::string& key,
                                          const std::string& fallback) const;

  // Every key the run asked for, with the value in effect: sections and
  // keys sorted, one `key = value` line each under its `[section]`.
  std::string materialized() const;

  // FNV-1a 64 over the materialized text; stable across platforms.
  std::uint64_t hash() const;

  // Keys present in the file but never queried (likely typos).
  std::vector<std::string> unused_keys() const;

 private:
  std::string record(const std::string& section, const std::string& key,
                     std::string value) const;

  std::map<std::string, std::map<std::string, std::string>> values_;
  mutable std::map<std::string, std::map<std::string, std::string>> used_;
};

std::uint64_t fnv1a64(const std::string& text);

}  // namespace ets::harness
