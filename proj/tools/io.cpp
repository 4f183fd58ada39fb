#include "io.hpp"

#include "gsgw/errors.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gsgw::cli {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoError, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void append_line(const std::filesystem::path& path, const std::string& line) {
  std::string body = std::filesystem::exists(path) ? read_file(path) : std::string();
  if (!body.empty() && body.back() != '\n') body += '\n';
  write_atomic(path, body + line + "\n");
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

void CsvTable::add(std::vector<std::string> row) {
  require(row.size() == header_.size(), ErrorKind::InternalError, "csv row width mismatch");
  rows_.push_back(std::move(row));
}

std::string CsvTable::str() const {
  std::string out;
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

nlohmann::json ResultRecord::to_json() const {
  nlohmann::json j;
  j["run_id"] = run_id;
  j["command"] = command;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  // Non-finite values have no JSON literal; they are written as strings.
  auto numbers = [](const std::map<std::string, double>& m) {
    nlohmann::json o = nlohmann::json::object();
    for (const auto& [k, v] : m) {
      if (std::isfinite(v))
        o[k] = v;
      else
        o[k] = format_double(v);
    }
    return o;
  };
  j["metrics"] = numbers(metrics);
  j["timings"] = numbers(timings);
  j["artifacts"] = artifacts;
  j["notes"] = notes;
  return j;
}

void Checkpoint::put(const std::string& name, std::vector<double> values) {
  arrays.emplace_back(name, std::move(values));
}

const std::vector<double>& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, v] : arrays)
    if (n == name) return v;
  fail(ErrorKind::ParseError, "checkpoint has no array '" + name + "'");
}

namespace {

template <typename T>
void put_raw(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

struct Reader {
  std::string_view bytes;
  std::size_t pos = 0;

  template <typename T>
  T take() {
    if (bytes.size() - pos < sizeof(T))
      fail(ErrorKind::ParseError, "checkpoint truncated at byte " + std::to_string(pos));
    T value;
    std::memcpy(&value, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return value;
  }
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out = "GSGW";
  put_raw<std::uint32_t>(out, Checkpoint::kVersion);
  put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& [name, values] : ckpt.arrays) {
    put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_raw<std::uint64_t>(out, values.size());
    for (double v : values) put_raw<double>(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, 4) != "GSGW") fail(ErrorKind::ParseError, "checkpoint magic missing at byte 0");
  Reader r{bytes, 4};
  const auto version = r.take<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    fail(ErrorKind::ParseError, "unsupported checkpoint version " + std::to_string(version));
  const auto count = r.take<std::uint32_t>();
  Checkpoint ckpt;
  for (std::uint32_t a = 0; a < count; ++a) {
    const auto len = r.take<std::uint32_t>();
    if (bytes.size() - r.pos < len) fail(ErrorKind::ParseError, "checkpoint truncated at byte " + std::to_string(r.pos));
    std::string name(bytes.substr(r.pos, len));
    r.pos += len;
    const auto n = r.take<std::uint64_t>();
    if ((bytes.size() - r.pos) / sizeof(double) < n)
      fail(ErrorKind::ParseError, "checkpoint truncated at byte " + std::to_string(r.pos));
    std::vector<double> values(n);
    for (auto& v : values) v = r.take<double>();
    ckpt.put(name, std::move(values));
  }
  if (r.pos != bytes.size()) fail(ErrorKind::ParseError, "trailing data at byte " + std::to_string(r.pos));
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ParseError) throw;
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

}  // namespace gsgw::cli
