#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "echosim/experiments.hpp"

namespace echosim {

/// Parse or validation problem in a manifest. `line`/`column` are 1-based and
/// zero when the error is not tied to a position.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& msg, int line = 0, int column = 0, std::string key = {});
  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& key() const { return key_; }

 private:
  int line_;
  int column_;
  std::string key_;
};

struct ManifestEntry {
  std::string value;
  int line = 0;
  int column = 0;
};

/// Flat sectioned key-value manifest:
///
///   [section]
///   key = value   ; comment
///
/// Keys are addressed as "section.key".
class Manifest {
 public:
  static Manifest parse(std::string_view text);
  static Manifest load(const std::string& path);

  bool has(std::string_view key) const;
  bool has_section(std::string_view section) const;
  const ManifestEntry& entry(std::string_view key) const;
  std::string get_string(std::string_view key, std::string_view fallback = {}) const;
  double get_double(std::string_view key, double fallback) const;
  std::optional<double> get_optional(std::string_view key) const;
  long get_int(std::string_view key, long fallback) const;
  std::vector<double> get_list(std::string_view key) const;
  void set(std::string_view key, std::string value);

  const std::map<std::string, ManifestEntry>& entries() const { return entries_; }
  /// The manifest re-emitted with sections and keys sorted; parses back to
  /// an equal manifest.
  std::string canonical() const;
  /// FNV-1a 64 of canonical(); independent of key order in the source.
  std::uint64_t hash() const;
  std::string hash_hex() const;

  /// Throws ConfigError naming the first key not in the schema.
  void check_known_keys() const;

 private:
  std::map<std::string, ManifestEntry> entries_;
  std::vector<std::string> sections_;
};

/// Starts from ProtocolConfig::baseline() and applies the manifest.
ProtocolConfig protocol_from_manifest(const Manifest& m);

/// Built-in preset manifests keyed by figure id.
std::vector<std::string> preset_ids();
std::string preset_manifest(std::string_view id);

} // namespace echosim
