#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gsgw::cli {

enum class ValueType { integer, real, boolean, text, path, int_list, real_list, text_list, path_list, choice };

struct KeySpec {
  ValueType type;
  std::string default_value;
  /// Allowed values for `choice`.
  std::vector<std::string> choices = {};
  /// Empty means "inherit" (e.g. from a solver preset) and skips type checks.
  bool optional = false;
};

using Schema = std::map<std::string, KeySpec>;

/// Keys accepted by a command; throws ConfigError for unknown commands.
const Schema& schema_for(const std::string& command);

/// "section.key = value" configuration bound to a command schema. Unknown or
/// duplicate keys are errors; missing keys take the schema default.
class RunConfig {
 public:
  static RunConfig parse(const std::string& text, const std::string& command, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path, const std::string& command);
  /// Schema defaults only.
  static RunConfig defaults(const std::string& command, const std::filesystem::path& base_dir = ".");

  const std::string& command() const { return command_; }
  const std::filesystem::path& base_dir() const { return base_dir_; }

  void set(const std::string& key, const std::string& value);
  bool is_set(const std::string& key) const;

  const std::string& raw(const std::string& key) const;
  long long get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_text(const std::string& key) const;
  /// Resolved against the config file's directory; empty stays empty.
  std::filesystem::path get_path(const std::string& key) const;
  std::vector<long long> get_ints(const std::string& key) const;
  std::vector<double> get_reals(const std::string& key) const;
  std::vector<std::string> get_texts(const std::string& key) const;
  std::vector<std::filesystem::path> get_paths(const std::string& key) const;

  /// Sorted keys, normalised values, one "key = value" per line.
  std::string canonical() const;
  /// FNV-1a 64 of the command name plus canonical(), as 16 hex digits.
  std::string hash() const;

 private:
  RunConfig(std::string command, std::filesystem::path base_dir);
  const KeySpec& spec(const std::string& key) const;

  std::string command_;
  std::filesystem::path base_dir_;
  std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace gsgw::cli
