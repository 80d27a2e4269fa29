#include "ets/harness/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ets::harness {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void bad_value(const std::string& section, const std::string& key,
                            const std::string& value, const char* want) {
  throw usage_error("config: [" + section + "] " + key + ": expected " +
                    want + ", got '" + value + "'");
}

}  // namespace

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

Config Config::parse_text(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw usage_error("config: " + origin + ":" +
                          std::to_string(lineno) + ": malformed section '" +
                          line + "'");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw usage_error("config: " + origin + ":" + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty())
      throw usage_error("config: " + origin + ":" + std::to_string(lineno) +
                        ": empty key");
    auto [it, fresh] = cfg.values_[section].emplace(key, value);
    if (!fresh)
      throw usage_error("config: " + origin + ":" + std::to_string(lineno) +
                        ": duplicate key '" + key + "' in [" + section + "]");
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw usage_error("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

bool Config::has(const std::string& section, const std::string& key) const {
  const auto s = values_.find(section);
  return s != values_.end() && s->second.count(key) > 0;
}

std::string Config::record(const std::string& section, const std::string& key,
                           std::string value) const {
  used_[section][key] = value;
  return value;
}

std::string Config::get_str(const std::string& section, const std::string& key,
                            const std::string& fallback) const {
  const auto s = values_.find(section);
  if (s != values_.end())
    if (const auto k = s->second.find(key); k != s->second.end())
      return record(section, key, k->second);
  return record(section, key, fallback);
}

long long Config::get_int(const std::string& section, const std::string& key,
                          long long fallback) const {
  const auto raw = get_str(section, key, std::to_string(fallback));
  char* end = nullptr;
  const long long v = std::strtoll(raw.c_str(), &end, 10);
  if (end == raw.c_str() || *end != '\0')
    bad_value(section, key, raw, "an integer");
  return v;
}

double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
  if (!has(section, key)) {
    std::ostringstream os;
    os.precision(17);
    os << fallback;
    record(section, key, os.str());
    return fallback;
  }
  const auto raw = get_str(section, key, "");
  char* end = nullptr;
  const double v = std::strtod(raw.c_str(), &end);
  if (end == raw.c_str() || *end != '\0')
    bad_value(section, key, raw, "a number");
  return v;
}

bool Config::get_bool(const std::string& section, const std::string& key,
                      bool fallback) const {
  const auto raw = get_str(section, key, fallback ? "true" : "false");
  if (raw == "true" || raw == "yes" || raw == "1") return true;
  if (raw == "false" || raw == "no" || raw == "0") return false;
  bad_value(section, key, raw, "a boolean");
}

std::vector<std::string> Config::get_list(const std::string& section,
                                          const std::string& key,
                                          const std::string& fallback) const {
  const auto raw = get_str(section, key, fallback);
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(raw);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::uint64_t> Config::get_u64_list(
    const std::string& section, const std::string& key,
    const std::string& fallback) const {
  std::vector<std::uint64_t> out;
  for (const auto& item : get_list(section, key, fallback)) {
    char* end = nullptr;
    const auto v = std::strtoull(item.c_str(), &end, 10);
    if (end == item.c_str() || *end != '\0')
      bad_value(section, key, item, "an unsigned integer");
    out.push_back(v);
  }
  return out;
}

std::string Config::materialized() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& [section, keys] : used_) {
    if (!first) os << '\n';
    first = false;
    os << '[' << section << "]\n";
    for (const auto& [key, value] : keys) os << key << " = " << value << '\n';
  }
  return os.str();
}

std::uint64_t Config::hash() const { return fnv1a64(materialized()); }

std::vector<std::string> Config::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [section, keys] : values_) {
    const auto u = used_.find(section);
    for (const auto& [key, value] : keys) {
      if (u == used_.end() || u->second.count(key) == 0)
        out.push_back(section + "." + key);
    }
  }
  return out;
}

}  // namespace ets::harness
