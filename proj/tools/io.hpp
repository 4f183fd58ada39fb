#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace gsgw::cli {

/// Writes to a sibling temp file, then renames over the target.
void write_atomic(const std::filesystem::path& path, const std::string& bytes);
/// Append-only log; rewritten atomically with the new line at the end.
void append_line(const std::filesystem::path& path, const std::string& line);
std::string read_file(const std::filesystem::path& path);

/// Shortest decimal that parses back to the same double.
std::string format_double(double x);

/// Comma separated, header first, LF line endings, no quoting (fields never
/// contain commas).
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<std::string> row);
  std::size_t rows() const { return rows_.size(); }
  std::string str() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct ResultRecord {
  std::string run_id;
  std::string command;
  std::uint64_t seed = 0;
  std::string config_hash;
  /// Deterministic values; reruns reproduce them bitwise.
  std::map<std::string, double> metrics;
  /// Wall-clock times in ms and ratios derived from them; excluded from the
  /// determinism contract.
  std::map<std::string, double> timings;
  std::map<std::string, std::string> artifacts;
  std::map<std::string, std::string> notes;

  nlohmann::json to_json() const;
};

/// Binary parameter file: "GSGW", u32 version, u32 array count, then per array
/// a u32 name length, the name, a u64 element count and float64 values, all
/// little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::vector<std::pair<std::string, std::vector<double>>> arrays;

  void put(const std::string& name, std::vector<double> values);
  /// Throws ParseError when absent.
  const std::vector<double>& get(const std::string& name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gsgw::cli
