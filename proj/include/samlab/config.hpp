#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace samlab {

/// Raised for malformed or invalid run configuration; the CLI maps it to
/// exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat key = value configuration text with dotted section names.
/// '#' starts a comment; blank lines are ignored. Typed getters mark keys as
/// consumed so unknown keys can be rejected exhaustively after parsing.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_text(const std::string& text, const std::string& origin = "config");
  static KeyValueConfig parse_file(const std::string& path);

  /// Applies SAMLAB_* environment overrides. A key like optim.rho maps to
  /// the variable SAMLAB_OPTIM__RHO: uppercase, '.' becomes '__'.
  void apply_env_overrides(const char* prefix = "SAMLAB_");

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback);
  std::string require_string(const std::string& key);
  double get_double(const std::string& key, double fallback);
  std::int64_t get_int(const std::string& key, std::int64_t fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback);
  std::vector<std::int64_t> get_int_list(const std::string& key,
                                         std::vector<std::int64_t> fallback);

  /// Keys never consumed by a getter; non-empty means the config holds
  /// unknown entries.
  std::vector<std::string> unconsumed() const;

  /// Keys (consumed or not) that start with the given dotted prefix.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  /// Canonical sorted key = value rendering; reparsing reproduces the same
  /// configuration.
  std::string canonical_text() const;

  const std::string& origin() const { return origin_; }

 private:
  std::string raw(const std::string& key);  // consumes

  std::map<std::string, std::string> entries_;
  std::set<std::string> consumed_;
  std::string origin_;
};

std::vector<std::string> split(const std::string& text, char delimiter);
std::string trim(const std::string& text);

}  // namespace samlab
