#include "doctest.h"

#include "commands.hpp"
#include "config.hpp"
#include "io.hpp"

#include "gsgw/errors.hpp"
#include "gsgw/geometry.hpp"
#include "gsgw/rng.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

using namespace gsgw;
using namespace gsgw::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gsgw_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::InternalError;
}

std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

// Tiny networks so command tests finish quickly.
const char* kSmallSolver =
    "solver.width = 8\n"
    "solver.depth = 2\n"
    "solver.rff = 0\n"
    "solver.steps = 40\n"
    "solver.restarts = 1\n"
    "solver.lr = 0.01\n";

RunOptions options(const fs::path& out, std::uint64_t seed) {
  RunOptions o;
  o.out_dir = out;
  o.seed = seed;
  return o;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("config parses, defaults and canonicalizes") {
  const auto cfg = RunConfig::parse(
      "# comment\n"
      "input.fixture = random   # trailing comment\n"
      "input.n=7\n"
      "\n"
      "solver.lr = 1e-3\n"
      "run.seeds = 1, 2 ,3\n",
      "solve", "/data");
  CHECK(cfg.get_int("input.n") == 7);
  CHECK(cfg.get_real("solver.lr") == 0.001);
  CHECK(cfg.get_ints("run.seeds") == std::vector<long long>{1, 2, 3});
  CHECK(cfg.get_text("cost.convention") == "distance");
  CHECK_FALSE(cfg.is_set("solver.steps"));
  CHECK(cfg.get_ints("run.seeds").size() == 3);
  CHECK(RunConfig::defaults("solve").get_ints("run.seeds") == std::vector<long long>{42, 7, 77});

  // parse -> canonical -> parse is a fixed point, and spelling does not matter.
  const auto again = RunConfig::parse(cfg.canonical(), "solve", "/data");
  CHECK(again.canonical() == cfg.canonical());
  CHECK(again.hash() == cfg.hash());
  const auto respelled = RunConfig::parse("run.seeds=1,2,3\nsolver.lr = 0.001\ninput.n = 7\ninput.fixture=random\n", "solve", "/data");
  CHECK(respelled.hash() == cfg.hash());
  CHECK(RunConfig::parse("input.n = 8\n", "solve", "/data").hash() != RunConfig::defaults("solve").hash());
  CHECK(cfg.hash().size() == 16);
}

TEST_CASE("config rejects unknown keys, duplicates and bad values") {
  auto parse = [](const std::string& text) { return RunConfig::parse(text, "solve", "."); };
  CHECK(kind_of([&] { parse("input.nn = 3\n"); }) == ErrorKind::ConfigError);
  CHECK(error_text([&] { parse("input.n = 3\nsolver.setps = 3\n"); }).find("line 2") != std::string::npos);
  CHECK(error_text([&] { parse("input.n = 3\ninput.n = 4\n"); }).find("duplicate") != std::string::npos);
  CHECK(kind_of([&] { parse("input.n = three\n"); }) == ErrorKind::ConfigError);
  CHECK(kind_of([&] { parse("solver.lr = nan\n"); }) == ErrorKind::ConfigError);
  CHECK(kind_of([&] { parse("input.fixture = moon\n"); }) == ErrorKind::ConfigError);
  CHECK(kind_of([&] { parse("just words\n"); }) == ErrorKind::ConfigError);
  CHECK(kind_of([&] { parse("nosection = 1\n"); }) == ErrorKind::ConfigError);
  CHECK(kind_of([&] { RunConfig::defaults("teleport"); }) == ErrorKind::ConfigError);
  // Keys of another command are unknown here.
  CHECK(kind_of([&] { parse("bench.reps = 3\n"); }) == ErrorKind::ConfigError);
  CHECK(kind_of([&] { RunConfig::load("/nonexistent/run.cfg", "solve"); }) == ErrorKind::IoError);
}

TEST_CASE("config paths resolve against the config file") {
  const fs::path dir = scratch("paths");
  {
    std::ofstream f(dir / "run.cfg");
    f << "input.x = a.npy\ninput.y = /abs/b.npy\n";
  }
  const auto cfg = RunConfig::load(dir / "run.cfg", "solve");
  CHECK(cfg.get_path("input.x") == dir / "a.npy");
  CHECK(cfg.get_path("input.y") == fs::path("/abs/b.npy"));
  CHECK(cfg.get_path("solver.steps").empty());
}

TEST_CASE("fnv-1a 64 published vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("shortest round-trip doubles and csv layout") {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0}) CHECK(std::stod(format_double(x)) == x);
  CHECK(format_double(0.5) == "0.5");
  CsvTable t({"a", "b"});
  t.add({"1", "2"});
  CHECK(t.str() == "a,b\n1,2\n");
  CHECK(kind_of([&] { t.add({"only"}); }) == ErrorKind::InternalError);
}

TEST_CASE("checkpoint round trip and corruption") {
  Checkpoint c;
  c.put("alpha", {1.0, -2.5, 1e-300});
  c.put("", {});
  c.put("beta", {3.0});
  const std::string bytes = encode_checkpoint(c);
  // 4 magic + 8 header + (4 + 5 + 8 + 24) + (4 + 0 + 8) + (4 + 4 + 8 + 8)
  CHECK(bytes.size() == 4 + 8 + 41 + 12 + 24);
  CHECK(bytes.substr(0, 4) == "GSGW");
  const Checkpoint d = decode_checkpoint(bytes);
  REQUIRE(d.arrays.size() == 3);
  CHECK(d.get("alpha") == c.get("alpha"));
  CHECK(d.get("").empty());
  CHECK(kind_of([&] { d.get("gamma"); }) == ErrorKind::ParseError);

  CHECK(kind_of([&] { decode_checkpoint("GSGX" + bytes.substr(4)); }) == ErrorKind::ParseError);
  CHECK(error_text([&] { decode_checkpoint(bytes.substr(0, bytes.size() - 3)); }).find("truncated") != std::string::npos);
  CHECK(kind_of([&] { decode_checkpoint(bytes + "x"); }) == ErrorKind::ParseError);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  CHECK(kind_of([&] { decode_checkpoint(bad_version); }) == ErrorKind::ParseError);
}

TEST_CASE("matcher checkpoint reproduces scores") {
  MatcherSpec spec;
  spec.token_dim = 6;
  spec.latent = 8;
  spec.attention = true;
  const MatcherParams p = init_matcher(spec, 3);
  const fs::path dir = scratch("matcher");
  save_checkpoint(dir / "m.ckpt", matcher_checkpoint(p));
  const MatcherParams q = matcher_from_checkpoint(load_checkpoint(dir / "m.ckpt"));
  CHECK(q.flat() == p.flat());
  CHECK(q.spec.attention);
  const auto shapes = synthetic_shapes(2, 5, {24});
  CHECK(amortized_plan(p, shapes[0].cloud, shapes[1].cloud, 0.0).plan ==
        amortized_plan(q, shapes[0].cloud, shapes[1].cloud, 0.0).plan);
}

TEST_CASE("solve on the two-point fixture") {
  const fs::path out = scratch("solve2");
  const auto cfg = RunConfig::parse(std::string("input.fixture = two_point\n") + kSmallSolver, "solve", ".");
  const auto recs = run_command(cfg, options(out, 42));
  REQUIRE(recs.size() == 1);
  CHECK(std::abs(recs[0].metrics.at("best_loss") - 0.5) <= 1e-6);
  CHECK(recs[0].run_id == "solve-" + cfg.hash().substr(0, 8) + "-s42");
  const auto plan = read_csv(out / recs[0].run_id / "plan.csv");
  REQUIRE(plan.size() == 3);
  CHECK(plan[0] == std::vector<std::string>{"i", "j", "mass"});
  CHECK(std::stod(plan[1][2]) + std::stod(plan[2][2]) == 1.0);
  CHECK(read_csv(out / recs[0].run_id / "loss_trace.csv")[0] == std::vector<std::string>{"step", "loss"});
  const auto summary = nlohmann::json::parse(read_file(out / recs[0].run_id / "summary.json"));
  CHECK(summary.contains("train_ms"));
  CHECK(summary.contains("plan_extract_ms"));
}

TEST_CASE("solve self-match and rerun determinism") {
  const fs::path out = scratch("self");
  const auto cfg = RunConfig::parse(std::string("input.fixture = self\ninput.n = 7\nrun.seeds = 5,6\n") + kSmallSolver,
                                    "solve", ".");
  const auto a = run_command(cfg, RunOptions{out});
  const auto b = run_command(cfg, RunOptions{out});
  REQUIRE(a.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(a[k].metrics.at("best_loss") <= 1e-6);
    CHECK(a[k].metrics == b[k].metrics);
  }
  CHECK(read_file(out / a[0].run_id / "plan.csv") == read_file(out / b[0].run_id / "plan.csv"));
  // Four records appended, none overwritten.
  std::istringstream log(read_file(out / "results.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    CHECK(nlohmann::json::parse(line).contains("config_hash"));
    ++lines;
  }
  CHECK(lines == 4);
}

TEST_CASE("baseline table") {
  const fs::path out = scratch("baseline");
  const auto cfg = RunConfig::parse(std::string("input.fixture = random\ninput.n = 5\ninput.m = 5\n"
                                                "baseline.methods = brute_force,sinkhorn,frank_wolfe\n"
                                                "baseline.sinkhorn_outer = 10\n") +
                                        kSmallSolver,
                                    "baseline", ".");
  const auto rec = run_command(cfg, options(out, 1)).at(0);
  const auto rows = read_csv(out / rec.run_id / "baselines.csv");
  CHECK(rows[0] == std::vector<std::string>{"method", "seed", "loss", "feasibility_err", "time_ms", "status"});
  REQUIRE(rows.size() == 6);
  CHECK(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r[0].rfind("sinkhorn_", 0) == 0; }) == 3);

  // Enumeration oracle from the definition, on the same Gaussian draws as the
  // random fixture (instance seed 0, X filled row by row before Y).
  Rng r(0);
  Mat px(5, 2), py(5, 3);
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < 2; ++j) px(i, j) = r.normal();
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) py(i, j) = r.normal();
  std::vector<std::size_t> sigma(5);
  std::iota(sigma.begin(), sigma.end(), std::size_t{0});
  double best = 1e300;
  do {
    double s = 0.0;
    for (int i = 0; i < 5; ++i)
      for (int k = 0; k < 5; ++k) {
        const double dx = (px.row(i) - px.row(k)).norm();
        const double dy = (py.row(Eigen::Index(sigma[i])) - py.row(Eigen::Index(sigma[k]))).norm();
        s += (dx - dy) * (dx - dy) / 25.0;
      }
    best = std::min(best, s);
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  CHECK(rec.metrics.at("loss_brute_force") == doctest::Approx(best).epsilon(1e-12));
  CHECK(rec.metrics.at("loss_frank_wolfe") >= best - 1e-9);
}

TEST_CASE("baseline records unsupported marginals for Frank-Wolfe") {
  const fs::path out = scratch("baseline_nm");
  const auto cfg = RunConfig::parse("input.fixture = random\ninput.n = 5\ninput.m = 4\nbaseline.methods = frank_wolfe\n",
                                    "baseline", ".");
  const auto rec = run_command(cfg, options(out, 1)).at(0);
  const auto rows = read_csv(out / rec.run_id / "baselines.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1][0] == "frank_wolfe");
  CHECK(rows[1][5] == "UnsupportedMarginals");
  CHECK(rec.metrics.count("loss_frank_wolfe") == 0);
}

TEST_CASE("interpolation writes the normalised source at t = 0") {
  const fs::path out = scratch("interp");
  const auto cfg = RunConfig::parse(std::string("input.fixture = toy\ninput.fixture_n = 20\ninterpolate.ts = 0,0.33,0.67\n") +
                                        kSmallSolver,
                                    "interpolate", ".");
  const auto rec = run_command(cfg, options(out, 3)).at(0);
  const fs::path dir = out / rec.run_id;
  for (int k = 0; k < 2; ++k) {
    const std::string tag = std::to_string(k);
    CHECK(read_file(dir / ("interp_" + tag + "_t0.npy")) == read_file(dir / ("source_" + tag + ".npy")));
    CHECK(fs::exists(dir / ("interp_" + tag + "_t0.33.npy")));
    CHECK(read_npy(dir / ("interp_" + tag + "_t0.67.npy")).rows() == 20);
    CHECK(rec.metrics.count("gw_loss_" + tag) == 1);
  }
  CHECK(RunConfig::defaults("interpolate").get_reals("interpolate.ts") == std::vector<double>{0.33, 0.67});
}

TEST_CASE("mesh-match reports missing files with their path") {
  const fs::path out = scratch("mesh_missing");
  const auto cfg = RunConfig::parse("input.source = /nonexistent/a.off\ninput.target = /nonexistent/b.off\n", "mesh-match", ".");
  const std::string msg = error_text([&] { run_command(cfg, options(out, 1)); });
  CHECK(msg.find("/nonexistent/a.off") != std::string::npos);
}

TEST_CASE("mesh-match on a small fixture") {
  const fs::path out = scratch("mesh");
  const auto cfg = RunConfig::parse(std::string("input.fixture = ellipsoid\ninput.fixture_n = 40\nmesh.landmarks = 6\n"
                                                "mesh.fw_iters = 20\n") +
                                        kSmallSolver,
                                    "mesh-match", ".");
  const auto rec = run_command(cfg, options(out, 2)).at(0);
  CHECK(rec.metrics.count("geodesic_error_gsgw") == 1);
  CHECK(rec.metrics.count("landmark_error_frank_wolfe") == 1);
  const auto lm = read_csv(out / rec.run_id / "landmarks.csv");
  CHECK(lm[0] == std::vector<std::string>{"src_idx", "dst_idx"});
  CHECK(lm.size() == 7);
}

TEST_CASE("amortized constraints on an untrained checkpoint") {
  const fs::path out = scratch("amortized");
  const auto cfg = RunConfig::parse("dataset.eval_shapes = 4\ndataset.sizes = 24,32\nmatcher.k = 6\nmatcher.latent = 8\n",
                                    "amortized", ".");
  RunOptions o = options(out, 4);
  o.subcommand = "constraints";
  const auto rec = run_command(cfg, o).at(0);
  CHECK(rec.metrics.at("passed") == 1.0);
  CHECK(rec.metrics.at("identity_dev") <= 1e-10);
}

TEST_CASE("amortized train then eval") {
  const fs::path out = scratch("amortized_train");
  const auto cfg = RunConfig::parse(
      "dataset.train_shapes = 6\ndataset.eval_shapes = 6\ndataset.eval_pairs = 4\ndataset.sizes = 24\n"
      "matcher.k = 6\nmatcher.latent = 8\ntrain.epochs = 2\ntrain.batches = 2\ntrain.batch_size = 2\n"
      "amortized.solver_pairs = 0\n",
      "amortized", ".");
  RunOptions o = options(out, 4);
  o.subcommand = "train";
  const auto trained = run_command(cfg, o).at(0);
  CHECK(fs::exists(trained.artifacts.at("checkpoint")));
  o.subcommand = "eval";
  const auto eval = run_command(cfg, o).at(0);
  CHECK(eval.metrics.at("accuracy") >= 0.0);
  CHECK(eval.metrics.at("accuracy") <= 1.0);
  CHECK(eval.metrics.at("margin") == doctest::Approx(eval.metrics.at("accuracy") - eval.metrics.at("random_baseline")));
  o.subcommand = "bogus";
  CHECK(kind_of([&] { run_command(cfg, o); }) == ErrorKind::ConfigError);
}

TEST_CASE("executable exit codes") {
  const fs::path dir = scratch("exit");
  auto run = [&](const std::string& args) {
    const int status = std::system((std::string(GSGW_BIN) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  {
    std::ofstream(dir / "bad.cfg") << "input.nope = 1\n";
    std::ofstream(dir / "missing.cfg") << "input.x = nothere.npy\ninput.y = nothere.npy\n";
  }
  CHECK(run("solve --config " + (dir / "bad.cfg").string()) == 2);
  CHECK(run("solve --config " + (dir / "absent.cfg").string()) == 4);
  CHECK(run("solve --config " + (dir / "missing.cfg").string() + " --out " + (dir / "out").string()) == 4);
  CHECK(run("teleport --config x") == 2);
  CHECK(run("amortized --config x") == 2);
}
