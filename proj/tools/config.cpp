#include "config.hpp"

#include "gsgw/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gsgw::cli {

namespace {

using VT = ValueType;

KeySpec choice(std::string def, std::vector<std::string> options) { return {VT::choice, std::move(def), std::move(options)}; }
KeySpec opt(ValueType t) { return {t, "", {}, true}; }
KeySpec opt_choice(std::vector<std::string> options) { return {VT::choice, "", std::move(options), true}; }

void add_run(Schema& s) { s["run.seeds"] = {VT::int_list, "42,7,77"}; }

void add_solver(Schema& s, const std::string& preset) {
  s["solver.preset"] = choice(preset, {"matching_desk", "interpolation_desk", "matching_full", "interpolation_full"});
  s["solver.steps"] = opt(VT::integer);
  s["solver.lr"] = opt(VT::real);
  s["solver.restarts"] = opt(VT::integer);
  s["solver.tau_start"] = opt(VT::real);
  s["solver.tau_end"] = opt(VT::real);
  s["solver.width"] = opt(VT::integer);
  s["solver.depth"] = opt(VT::integer);
  s["solver.rff"] = opt(VT::integer);
  s["solver.warmup"] = opt(VT::integer);
  s["solver.weight_decay"] = opt(VT::real);
  s["solver.grad_clip"] = opt(VT::real);
  s["solver.kind"] = opt_choice({"nonlinear", "linear"});
  s["solver.relation"] = opt_choice({"dependent", "independent"});
  s["solver.optimizer"] = opt_choice({"adam", "adamw"});
  s["solver.activation"] = opt_choice({"gelu", "relu", "tanh"});
  s["solver.lifting_init"] = opt_choice({"pca", "identity"});
}

void add_input(Schema& s) {
  s["input.x"] = opt(VT::path);
  s["input.y"] = opt(VT::path);
  s["input.fixture"] = choice("none", {"none", "two_point", "self", "random", "toy_2d3d"});
  s["input.n"] = {VT::integer, "6"};
  s["input.m"] = {VT::integer, "6"};
  s["input.p"] = {VT::integer, "2"};
  s["input.q"] = {VT::integer, "3"};
  s["input.instance_seed"] = {VT::integer, "0"};
  s["input.normalize"] = {VT::boolean, "false"};
  s["cost.convention"] = choice("distance", {"distance", "squared_distance"});
  s["cost.kind"] = choice("euclidean", {"euclidean", "geodesic"});
  s["cost.k"] = {VT::integer, "20"};
}

Schema build(const std::string& command) {
  Schema s;
  add_run(s);
  if (command == "solve") {
    add_input(s);
    add_solver(s, "matching_desk");
  } else if (command == "baseline") {
    add_input(s);
    add_solver(s, "matching_desk");
    s["baseline.methods"] = {VT::text_list, "brute_force,frank_wolfe,sinkhorn,sgw_shared,gsgw"};
    s["baseline.fw_iters"] = {VT::integer, "200"};
    s["baseline.sinkhorn_outer"] = {VT::integer, "50"};
    s["baseline.sinkhorn_inner"] = {VT::integer, "500"};
    s["baseline.epsilons"] = {VT::real_list, "0.05,0.5,1"};
    s["baseline.sgw_directions"] = {VT::integer, "500"};
  } else if (command == "mesh-match") {
    add_solver(s, "matching_desk");
    s["input.source"] = opt(VT::path);
    s["input.target"] = opt(VT::path);
    s["input.truth"] = opt(VT::path);
    s["input.fixture"] = choice("none", {"none", "ellipsoid"});
    s["input.fixture_n"] = {VT::integer, "120"};
    s["input.rotate"] = {VT::boolean, "false"};
    s["input.instance_seed"] = {VT::integer, "0"};
    s["geodesic.k"] = {VT::integer, "20"};
    s["geodesic.graph"] = choice("auto", {"auto", "knn", "mesh"});
    s["mesh.normalize"] = {VT::boolean, "true"};
    s["mesh.methods"] = {VT::text_list, "gsgw,frank_wolfe"};
    s["mesh.fw_iters"] = {VT::integer, "100"};
    s["mesh.landmarks"] = {VT::integer, "18"};
    s["mesh.repetitions"] = {VT::integer, "4"};
  } else if (command == "interpolate") {
    add_solver(s, "interpolation_desk");
    s["input.clouds"] = opt(VT::path_list);
    s["input.fixture"] = choice("none", {"none", "toy"});
    s["input.fixture_n"] = {VT::integer, "60"};
    s["input.instance_seed"] = {VT::integer, "0"};
    s["input.normalize"] = {VT::boolean, "true"};
    s["interpolate.ts"] = {VT::real_list, "0.33,0.67"};
  } else if (command == "bench") {
    s["bench.plan_sizes"] = {VT::int_list, "10000,100000,1000000"};
    s["bench.soft_sizes"] = {VT::int_list, "64,128,256"};
    s["bench.gw_sizes"] = {VT::int_list, "100,200,400,800"};
    s["bench.baseline_sizes"] = {VT::int_list, "20,40"};
    s["bench.reps"] = {VT::integer, "10"};
    s["bench.warmup"] = {VT::integer, "2"};
  } else if (command == "amortized") {
    add_solver(s, "matching_desk");
    s["dataset.train_shapes"] = {VT::integer, "60"};
    s["dataset.eval_shapes"] = {VT::integer, "30"};
    s["dataset.eval_pairs"] = {VT::integer, "50"};
    s["dataset.sizes"] = {VT::int_list, "64,128"};
    s["matcher.k"] = {VT::integer, "16"};
    s["matcher.latent"] = {VT::integer, "32"};
    s["matcher.attention"] = {VT::boolean, "false"};
    s["train.epochs"] = {VT::integer, "30"};
    s["train.batches"] = {VT::integer, "10"};
    s["train.batch_size"] = {VT::integer, "8"};
    s["train.lr"] = {VT::real, "0.003"};
    s["train.lambda"] = {VT::real, "0.5"};
    s["train.tau_start"] = {VT::real, "0.3"};
    s["train.tau_end"] = {VT::real, "0.01"};
    s["amortized.checkpoint"] = opt(VT::path);
    s["amortized.solver_pairs"] = {VT::integer, "3"};
  } else {
    fail(ErrorKind::ConfigError, "unknown command '" + command + "'");
  }
  return s;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  fail(ErrorKind::ConfigError, key + " = '" + value + "': " + why);
}

std::string norm_int(const std::string& key, const std::string& v) {
  long long x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "expected an integer");
  return std::to_string(x);
}

std::string norm_real(const std::string& key, const std::string& v) {
  double x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(x)) bad_value(key, v, "expected a finite number");
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

std::string norm_bool(const std::string& key, const std::string& v) {
  std::string l = v;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "true" || l == "1" || l == "yes") return "true";
  if (l == "false" || l == "0" || l == "no") return "false";
  bad_value(key, v, "expected true or false");
}

std::string normalize(const std::string& key, const KeySpec& spec, const std::string& value) {
  const std::string v = trim(value);
  if (v.empty() && spec.optional) return v;
  auto each = [&](auto fn) {
    std::string out;
    for (const auto& item : split_list(v)) {
      if (item.empty()) bad_value(key, v, "empty list item");
      out += (out.empty() ? "" : ",") + fn(key, item);
    }
    return out;
  };
  auto keep = [](const std::string&, const std::string& s) { return s; };
  switch (spec.type) {
    case VT::integer:
      return norm_int(key, v);
    case VT::real:
      return norm_real(key, v);
    case VT::boolean:
      return norm_bool(key, v);
    case VT::text:
    case VT::path:
      return v;
    case VT::int_list:
      return each(norm_int);
    case VT::real_list:
      return each(norm_real);
    case VT::text_list:
    case VT::path_list:
      return each(keep);
    case VT::choice:
      if (std::find(spec.choices.begin(), spec.choices.end(), v) == spec.choices.end()) {
        std::string allowed;
        for (const auto& c : spec.choices) allowed += (allowed.empty() ? "" : "|") + c;
        bad_value(key, v, "expected one of " + allowed);
      }
      return v;
  }
  return v;
}

}  // namespace

const Schema& schema_for(const std::string& command) {
  static const std::map<std::string, Schema> all = [] {
    std::map<std::string, Schema> m;
    for (const char* c : {"solve", "baseline", "mesh-match", "interpolate", "bench", "amortized"}) m[c] = build(c);
    return m;
  }();
  const auto it = all.find(command);
  if (it == all.end()) fail(ErrorKind::ConfigError, "unknown command '" + command + "'");
  return it->second;
}

RunConfig::RunConfig(std::string command, std::filesystem::path base_dir)
    : command_(std::move(command)), base_dir_(std::move(base_dir)) {
  for (const auto& [key, spec] : schema_for(command_)) values_[key] = normalize(key, spec, spec.default_value);
}

RunConfig RunConfig::defaults(const std::string& command, const std::filesystem::path& base_dir) {
  return RunConfig(command, base_dir);
}

RunConfig RunConfig::parse(const std::string& text, const std::string& command, const std::filesystem::path& base_dir) {
  RunConfig cfg(command, base_dir);
  std::istringstream in(text);
  std::string line;
  std::size_t ln = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++ln;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(ln) + ": ";
    if (eq == std::string::npos) fail(ErrorKind::ConfigError, where + "expected 'section.key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.find('.') == std::string::npos) fail(ErrorKind::ConfigError, where + "key '" + key + "' lacks a section");
    if (const auto it = seen.find(key); it != seen.end())
      fail(ErrorKind::ConfigError, where + "duplicate key '" + key + "' (first on line " + std::to_string(it->second) + ")");
    seen[key] = ln;
    try {
      cfg.set(key, line.substr(eq + 1));
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, where + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path, const std::string& command) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  std::filesystem::path base = path.parent_path();
  if (base.empty()) base = ".";
  return parse(ss.str(), command, base);
}

const KeySpec& RunConfig::spec(const std::string& key) const {
  const Schema& s = schema_for(command_);
  const auto it = s.find(key);
  if (it == s.end()) fail(ErrorKind::ConfigError, "unknown key '" + key + "' for command " + command_);
  return it->second;
}

void RunConfig::set(const std::string& key, const std::string& value) { values_[key] = normalize(key, spec(key), value); }

bool RunConfig::is_set(const std::string& key) const { return !raw(key).empty(); }

const std::string& RunConfig::raw(const std::string& key) const {
  spec(key);
  return values_.at(key);
}

long long RunConfig::get_int(const std::string& key) const {
  require(is_set(key), ErrorKind::ConfigError, key + " is not set");
  return std::stoll(raw(key));
}

double RunConfig::get_real(const std::string& key) const {
  require(is_set(key), ErrorKind::ConfigError, key + " is not set");
  double x = 0;
  const std::string& v = raw(key);
  std::from_chars(v.data(), v.data() + v.size(), x);
  return x;
}

bool RunConfig::get_bool(const std::string& key) const { return raw(key) == "true"; }

std::string RunConfig::get_text(const std::string& key) const { return raw(key); }

std::filesystem::path RunConfig::get_path(const std::string& key) const {
  const std::string& v = raw(key);
  if (v.empty()) return {};
  const std::filesystem::path p(v);
  return p.is_absolute() ? p : base_dir_ / p;
}

std::vector<long long> RunConfig::get_ints(const std::string& key) const {
  std::vector<long long> out;
  if (raw(key).empty()) return out;
  for (const auto& s : split_list(raw(key))) out.push_back(std::stoll(s));
  return out;
}

std::vector<double> RunConfig::get_reals(const std::string& key) const {
  std::vector<double> out;
  if (raw(key).empty()) return out;
  for (const auto& s : split_list(raw(key))) {
    double x = 0;
    std::from_chars(s.data(), s.data() + s.size(), x);
    out.push_back(x);
  }
  return out;
}

std::vector<std::string> RunConfig::get_texts(const std::string& key) const {
  if (raw(key).empty()) return {};
  return split_list(raw(key));
}

std::vector<std::filesystem::path> RunConfig::get_paths(const std::string& key) const {
  std::vector<std::filesystem::path> out;
  for (const auto& s : get_texts(key)) {
    const std::filesystem::path p(s);
    out.push_back(p.is_absolute() ? p : base_dir_ / p);
  }
  return out;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
  return out;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(command_ + "\n" + canonical())));
  return buf;
}

}  // namespace gsgw::cli
