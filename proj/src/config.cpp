#include "samlab/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

extern char** environ;

namespace samlab {

std::vector<std::string> split(const std::string& text, char delimiter) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, delimiter)) parts.push_back(part);
  return parts;
}

std::string trim(const std::string& text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  return text.substr(begin, end - begin);
}

KeyValueConfig KeyValueConfig::parse_text(const std::string& text, const std::string& origin) {
  KeyValueConfig config;
  config.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected 'key = value', found '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    if (config.entries_.count(key)) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    config.entries_[key] = value;
  }
  return config;
}

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_text(text.str(), path);
}

void KeyValueConfig::apply_env_overrides(const char* prefix) {
  const std::string wanted(prefix);
  for (char** env = environ; *env != nullptr; ++env) {
    const std::string entry(*env);
    if (entry.rfind(wanted, 0) != 0) continue;
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string name = entry.substr(wanted.size(), eq - wanted.size());
    const std::string value = entry.substr(eq + 1);
    // SAMLAB_OPTIM__RHO -> optim.rho
    std::string key;
    for (std::size_t i = 0; i < name.size(); ++i) {
      if (name[i] == '_' && i + 1 < name.size() && name[i + 1] == '_') {
        key += '.';
        ++i;
      } else {
        key += static_cast<char>(std::tolower(static_cast<unsigned char>(name[i])));
      }
    }
    entries_[key] = value;
  }
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

bool KeyValueConfig::has(const std::string& key) const { return entries_.count(key) != 0; }

std::string KeyValueConfig::raw(const std::string& key) {
  consumed_.insert(key);
  return entries_.at(key);
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) {
  if (!has(key)) return fallback;
  return raw(key);
}

std::string KeyValueConfig::require_string(const std::string& key) {
  if (!has(key)) throw ConfigError(origin_ + ": missing required key '" + key + "'");
  return raw(key);
}

namespace {

double parse_double(const std::string& origin, const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(value)) throw std::invalid_argument("bad");
    return value;
  } catch (const std::exception&) {
    throw ConfigError(origin + ": key '" + key + "' expects a finite real, found '" + text + "'");
  }
}

std::int64_t parse_int(const std::string& origin, const std::string& key,
                       const std::string& text) {
  try {
    std::size_t used = 0;
    const long long value = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument("bad");
    return value;
  } catch (const std::exception&) {
    throw ConfigError(origin + ": key '" + key + "' expects an integer, found '" + text + "'");
  }
}

}  // namespace

double KeyValueConfig::get_double(const std::string& key, double fallback) {
  if (!has(key)) return fallback;
  return parse_double(origin_, key, raw(key));
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) {
  if (!has(key)) return fallback;
  return parse_int(origin_, key, raw(key));
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) {
  if (!has(key)) return fallback;
  const std::string text = raw(key);
  try {
    std::size_t used = 0;
    const unsigned long long value = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument("bad");
    return value;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + key + "' expects an unsigned integer, found '" +
                      text + "'");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) {
  if (!has(key)) return fallback;
  const std::string text = raw(key);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(origin_ + ": key '" + key + "' expects a boolean, found '" + text + "'");
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key,
                                                    std::vector<double> fallback) {
  if (!has(key)) return fallback;
  const std::string text = raw(key);
  std::vector<double> values;
  for (const std::string& part : split(text, ',')) {
    const std::string item = trim(part);
    if (item.empty()) continue;
    values.push_back(parse_double(origin_, key, item));
  }
  if (values.empty()) {
    throw ConfigError(origin_ + ": key '" + key + "' expects a comma-separated list of reals");
  }
  return values;
}

std::vector<std::int64_t> KeyValueConfig::get_int_list(const std::string& key,
                                                       std::vector<std::int64_t> fallback) {
  if (!has(key)) return fallback;
  const std::string text = raw(key);
  std::vector<std::int64_t> values;
  for (const std::string& part : split(text, ',')) {
    const std::string item = trim(part);
    if (item.empty()) continue;
    values.push_back(parse_int(origin_, key, item));
  }
  return values;
}

std::vector<std::string> KeyValueConfig::unconsumed() const {
  std::vector<std::string> keys;
  for (const auto& [key, value] : entries_) {
    if (!consumed_.count(key)) keys.push_back(key);
  }
  return keys;
}

std::vector<std::string> KeyValueConfig::keys_with_prefix(const std::string& prefix) const {
  std::vector<std::string> keys;
  for (const auto& [key, value] : entries_) {
    if (key.rfind(prefix, 0) == 0) keys.push_back(key);
  }
  return keys;
}

std::string KeyValueConfig::canonical_text() const {
  std::ostringstream out;
  for (const auto& [key, value] : entries_) out << key << " = " << value << '\n';
  return out.str();
}

}  // namespace samlab
