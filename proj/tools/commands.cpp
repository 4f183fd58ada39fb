#include "commands.hpp"

#include "fixtures.hpp"

#include "gsgw/baselines.hpp"
#include "gsgw/errors.hpp"
#include "gsgw/geometry.hpp"
#include "gsgw/monotone_plan.hpp"
#include "gsgw/rigid.hpp"
#include "gsgw/rng.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <span>
#include <sstream>

namespace gsgw::cli {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// Runs fn `warmup` times untimed, then once timed.
template <typename F>
auto timed(int warmup, double& ms, F&& fn) {
  for (int w = 0; w < warmup; ++w) (void)fn();
  const auto t0 = Clock::now();
  auto result = fn();
  ms = ms_since(t0);
  return result;
}

struct Stats {
  double mean = 0.0;
  double stddev = 0.0;
};

template <typename F>
Stats repeat_timing(int warmup, int reps, F&& fn) {
  for (int w = 0; w < warmup; ++w) fn();
  std::vector<double> t(static_cast<std::size_t>(reps));
  for (auto& v : t) {
    const auto t0 = Clock::now();
    fn();
    v = ms_since(t0);
  }
  Stats s;
  s.mean = std::accumulate(t.begin(), t.end(), 0.0) / reps;
  for (double v : t) s.stddev += (v - s.mean) * (v - s.mean);
  s.stddev = reps > 1 ? std::sqrt(s.stddev / (reps - 1)) : 0.0;
  return s;
}

/// Least-squares slope of log(time) against log(n).
double loglog_slope(const std::vector<double>& n, const std::vector<double>& t) {
  const std::size_t k = n.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < k; ++i) {
    mx += std::log(n[i]) / k;
    my += std::log(t[i]) / k;
  }
  double num = 0, den = 0;
  for (std::size_t i = 0; i < k; ++i) {
    num += (std::log(n[i]) - mx) * (std::log(t[i]) - my);
    den += (std::log(n[i]) - mx) * (std::log(n[i]) - mx);
  }
  return num / den;
}

std::string fmt(double x) { return format_double(x); }

std::size_t as_size(long long v, const std::string& key) {
  require(v > 0, ErrorKind::ConfigError, key + " must be positive");
  return static_cast<std::size_t>(v);
}

std::vector<std::size_t> as_sizes(const std::vector<long long>& v, const std::string& key) {
  std::vector<std::size_t> out;
  for (long long x : v) out.push_back(as_size(x, key));
  return out;
}

ad::Activation parse_activation(const std::string& s) {
  if (s == "relu") return ad::Activation::relu;
  if (s == "tanh") return ad::Activation::tanh;
  return ad::Activation::gelu;
}

// ---------------------------------------------------------------- inputs

CloudPair load_pair(const RunConfig& cfg) {
  const std::string fixture = cfg.get_text("input.fixture");
  const std::uint64_t iseed = static_cast<std::uint64_t>(cfg.get_int("input.instance_seed"));
  const auto n = as_size(cfg.get_int("input.n"), "input.n");
  const auto m = as_size(cfg.get_int("input.m"), "input.m");
  const auto p = as_size(cfg.get_int("input.p"), "input.p");
  const auto q = as_size(cfg.get_int("input.q"), "input.q");
  CloudPair pair;
  if (fixture == "two_point") {
    pair = two_point_fixture();
  } else if (fixture == "self") {
    pair = self_fixture(n, p, iseed);
  } else if (fixture == "random") {
    pair = random_fixture(n, m, p, q, iseed);
  } else if (fixture == "toy_2d3d") {
    pair = toy_2d3d_fixture(n, iseed);
  } else {
    require(cfg.is_set("input.x") && cfg.is_set("input.y"), ErrorKind::ConfigError,
            "input.x and input.y are required without input.fixture");
    pair = {load_mesh(cfg.get_path("input.x")).vertices, load_mesh(cfg.get_path("input.y")).vertices};
  }
  if (cfg.get_bool("input.normalize")) pair = {normalize_cloud(pair.x), normalize_cloud(pair.y)};
  return pair;
}

CostMatrix make_cost(const PointCloud& c, const RunConfig& cfg) {
  const CostConvention conv =
      cfg.get_text("cost.convention") == "squared_distance" ? CostConvention::squared_distance : CostConvention::distance;
  if (cfg.get_text("cost.kind") == "euclidean") return build_cost_matrix(c, conv);
  CostMatrix g = geodesic_matrix(c, as_size(cfg.get_int("cost.k"), "cost.k"), false).cost;
  if (conv == CostConvention::squared_distance) {
    g.entries = g.entries.array().square().matrix();
    g.convention = conv;
  }
  return g;
}

std::vector<std::uint64_t> seeds_of(const RunConfig& cfg, const RunOptions& opts) {
  if (opts.seed) return {*opts.seed};
  std::vector<std::uint64_t> out;
  for (long long s : cfg.get_ints("run.seeds")) {
    require(s >= 0, ErrorKind::ConfigError, "run.seeds must be nonnegative");
    out.push_back(static_cast<std::uint64_t>(s));
  }
  require(!out.empty(), ErrorKind::ConfigError, "run.seeds is empty");
  return out;
}

std::string run_id(const RunConfig& cfg, const RunOptions& opts, std::uint64_t seed) {
  std::string name = cfg.command();
  if (!opts.subcommand.empty()) name += "-" + opts.subcommand;
  return name + "-" + cfg.hash().substr(0, 8) + "-s" + std::to_string(seed);
}

struct RunContext {
  const RunConfig& cfg;
  const RunOptions& opts;
  std::uint64_t seed;
  std::filesystem::path dir;
  ResultRecord rec;

  void artifact(const std::string& name, const std::string& bytes) {
    write_atomic(dir / name, bytes);
    rec.artifacts[name] = (dir / name).string();
  }
  void artifact_npy(const std::string& name, const Mat& m) { artifact(name, encode_npy(m)); }
  void log(const std::string& line) const {
    if (opts.verbose) std::cerr << "[" << rec.run_id << "] " << line << "\n";
  }
};

std::string plan_csv(const SparsePlan& plan) {
  CsvTable t({"i", "j", "mass"});
  for (const auto& e : plan) t.add({std::to_string(e.i), std::to_string(e.j), fmt(e.mass)});
  return t.str();
}

std::string trace_csv(const std::vector<double>& trace) {
  CsvTable t({"step", "loss"});
  for (std::size_t k = 0; k < trace.size(); ++k) t.add({std::to_string(k), fmt(trace[k])});
  return t.str();
}

// ---------------------------------------------------------------- solve

void cmd_solve(RunContext& ctx) {
  const CloudPair pair = load_pair(ctx.cfg);
  const CostMatrix cx = make_cost(pair.x, ctx.cfg), cy = make_cost(pair.y, ctx.cfg);
  const SolverConfig sc = solver_config(ctx.cfg, ctx.seed);
  const SolveResult r =
      solve(DiscreteMeasure::uniform(pair.x), DiscreteMeasure::uniform(pair.y), cx, cy, sc);

  ctx.rec.metrics["best_loss"] = r.best_loss;
  ctx.rec.metrics["best_restart"] = r.best_restart;
  ctx.rec.metrics["n"] = static_cast<double>(pair.x.size());
  ctx.rec.metrics["m"] = static_cast<double>(pair.y.size());
  ctx.rec.metrics["marginal_error"] = r.best_plan.uniform_marginal_error();
  ctx.rec.metrics["final_soft_loss"] = r.loss_trace.empty() ? NAN : r.loss_trace.back();
  for (std::size_t k = 0; k < r.restart_losses.size(); ++k)
    ctx.rec.metrics["restart_loss_" + std::to_string(k)] = r.restart_losses[k];
  ctx.rec.timings["train_ms"] = r.train_ms;
  ctx.rec.timings["plan_extract_ms"] = r.plan_extract_ms;
  ctx.rec.timings["wall_ms"] = r.wall_time_ms;

  ctx.artifact("plan.csv", plan_csv(r.best_sparse));
  ctx.artifact("loss_trace.csv", trace_csv(r.loss_trace));
  nlohmann::json summary;
  summary["best_loss"] = r.best_loss;
  summary["best_restart"] = r.best_restart;
  summary["restart_losses"] = r.restart_losses;
  summary["swapped"] = r.swapped;
  summary["train_ms"] = r.train_ms;
  summary["plan_extract_ms"] = r.plan_extract_ms;
  ctx.artifact("summary.json", summary.dump(2) + "\n");
  ctx.log("best_loss " + fmt(r.best_loss));
}

// ---------------------------------------------------------------- baseline

void cmd_baseline(RunContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const CloudPair pair = load_pair(cfg);
  const CostMatrix cx = make_cost(pair.x, cfg), cy = make_cost(pair.y, cfg);
  const auto mu = DiscreteMeasure::uniform(pair.x), nu = DiscreteMeasure::uniform(pair.y);
  const std::string seed_s = std::to_string(ctx.seed);

  CsvTable table({"method", "seed", "loss", "feasibility_err", "time_ms", "status"});
  auto record = [&](const std::string& method, double loss, double feas, double ms) {
    table.add({method, seed_s, fmt(loss), std::isnan(feas) ? "" : fmt(feas), fmt(ms), "ok"});
    ctx.rec.metrics["loss_" + method] = loss;
    if (!std::isnan(feas)) ctx.rec.metrics["feasibility_" + method] = feas;
    ctx.rec.timings[method + "_ms"] = ms;
  };
  auto guarded = [&](const std::string& method, auto&& body) {
    try {
      body();
    } catch (const Error& e) {
      table.add({method, seed_s, "", "", "", to_string(e.kind())});
      ctx.rec.notes[method] = e.what();
    }
  };

  for (const std::string& method : cfg.get_texts("baseline.methods")) {
    double ms = 0.0;
    if (method == "brute_force") {
      guarded(method, [&] {
        const auto r = timed(2, ms, [&] { return brute_force_gw(cx, cy); });
        record(method, r.best_loss, Coupling::from_plan(permutation_plan(r.best_perm)).uniform_marginal_error(), ms);
      });
    } else if (method == "frank_wolfe") {
      guarded(method, [&] {
        require(pair.x.size() == pair.y.size(), ErrorKind::UnsupportedMarginals,
                "Frank-Wolfe needs n = m, got " + std::to_string(pair.x.size()) + " and " + std::to_string(pair.y.size()));
        const int iters = static_cast<int>(cfg.get_int("baseline.fw_iters"));
        const auto r = timed(2, ms, [&] { return frank_wolfe_gw(cx, cy, iters); });
        record(method, gw_loss(cx, cy, r.coupling), r.coupling.uniform_marginal_error(), ms);
      });
    } else if (method == "sinkhorn") {
      const int outer = static_cast<int>(cfg.get_int("baseline.sinkhorn_outer"));
      const int inner = static_cast<int>(cfg.get_int("baseline.sinkhorn_inner"));
      for (double eps : cfg.get_reals("baseline.epsilons")) {
        const std::string name = "sinkhorn_" + fmt(eps);
        guarded(name, [&] {
          const auto r = timed(2, ms, [&] { return sinkhorn_gw(cx, cy, mu.weights, nu.weights, eps, outer, inner, ctx.seed); });
          record(name, gw_loss(cx, cy, r.coupling), r.coupling.uniform_marginal_error(), ms);
        });
      }
    } else if (method == "sgw_shared" || method == "sgw_independent" || method == "sgw_maxmin") {
      guarded(method, [&] {
        SgwConfig sc;
        sc.num_directions = static_cast<int>(cfg.get_int("baseline.sgw_directions"));
        sc.mode = method == "sgw_shared" ? SgwMode::shared : method == "sgw_independent" ? SgwMode::independent : SgwMode::maxmin;
        sc.seed = ctx.seed;
        const double v = timed(2, ms, [&] { return sgw(mu, nu, sc); });
        record(method, v, NAN, ms);
      });
    } else if (method == "gsgw") {
      guarded(method, [&] {
        const SolveResult r = solve(mu, nu, cx, cy, solver_config(cfg, ctx.seed));
        record(method, r.best_loss, r.best_plan.uniform_marginal_error(), r.wall_time_ms);
      });
    } else {
      fail(ErrorKind::ConfigError, "baseline.methods: unknown method '" + method + "'");
    }
  }
  ctx.artifact("baselines.csv", table.str());
}

// ---------------------------------------------------------------- mesh-match

Correspondence read_truth(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  Correspondence out;
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(line, &used);
      if (v < 0) throw std::invalid_argument("negative");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      fail(ErrorKind::ParseError, path.string() + ": line " + std::to_string(ln) + ": expected a vertex index");
    }
  }
  return out;
}

void cmd_mesh_match(RunContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  Mesh src, dst;
  Correspondence truth;
  if (cfg.get_text("input.fixture") == "ellipsoid") {
    src = ellipsoid_mesh(as_size(cfg.get_int("input.fixture_n"), "input.fixture_n"));
    dst = src;
    if (cfg.get_bool("input.rotate")) {
      const RigidTransform g = sample_rigid(3, static_cast<std::uint64_t>(cfg.get_int("input.instance_seed")));
      dst.vertices = PointCloud(g.apply(src.vertices.points()));
    }
  } else {
    require(cfg.is_set("input.source") && cfg.is_set("input.target"), ErrorKind::ConfigError,
            "input.source and input.target are required without input.fixture");
    src = load_mesh(cfg.get_path("input.source"));
    dst = load_mesh(cfg.get_path("input.target"));
    if (cfg.is_set("input.truth")) truth = read_truth(cfg.get_path("input.truth"));
  }
  if (truth.empty()) {
    require(src.vertices.size() == dst.vertices.size(), ErrorKind::ConfigError,
            "input.truth is required when the meshes differ in size");
    truth.resize(src.vertices.size());
    std::iota(truth.begin(), truth.end(), std::size_t{0});
  }
  require(truth.size() == src.vertices.size(), ErrorKind::InvalidInput, "ground truth length differs from source size");
  for (std::size_t v : truth)
    require(v < dst.vertices.size(), ErrorKind::InvalidInput, "ground truth index out of range");

  if (cfg.get_bool("mesh.normalize")) {
    src.vertices = normalize_cloud(src.vertices);
    dst.vertices = normalize_cloud(dst.vertices);
  }
  const std::size_t k = as_size(cfg.get_int("geodesic.k"), "geodesic.k");
  const std::string graph = cfg.get_text("geodesic.graph");
  auto geo = [&](const Mesh& mesh) {
    if (graph == "knn") return geodesic_matrix(mesh.vertices, k, true);
    if (graph == "mesh") return geodesic_matrix_edges(mesh, true);
    return geodesic_matrix(mesh, k, true);
  };
  double geo_ms = 0.0;
  const auto t0 = Clock::now();
  const GeodesicMatrix gx = geo(src), gy = geo(dst);
  geo_ms = ms_since(t0);
  ctx.rec.timings["geodesic_ms"] = geo_ms;
  ctx.rec.notes["graph"] = to_string(gx.graph);
  ctx.rec.metrics["n"] = static_cast<double>(src.vertices.size());

  const std::size_t landmarks = as_size(cfg.get_int("mesh.landmarks"), "mesh.landmarks");
  const std::size_t reps = as_size(cfg.get_int("mesh.repetitions"), "mesh.repetitions");
  const auto mu = DiscreteMeasure::uniform(src.vertices), nu = DiscreteMeasure::uniform(dst.vertices);

  CsvTable table({"method", "seed", "geodesic_error", "landmark_error", "gw_loss", "time_ms", "status"});
  for (const std::string& method : cfg.get_texts("mesh.methods")) {
    Mat plan;
    double ms = 0.0;
    try {
      if (method == "gsgw") {
        const SolveResult r = solve(mu, nu, gx.cost, gy.cost, solver_config(cfg, ctx.seed));
        plan = r.best_plan.plan;
        ms = r.wall_time_ms;
      } else if (method == "frank_wolfe") {
        require(src.vertices.size() == dst.vertices.size(), ErrorKind::UnsupportedMarginals, "Frank-Wolfe needs n = m");
        const int iters = static_cast<int>(cfg.get_int("mesh.fw_iters"));
        plan = timed(0, ms, [&] { return frank_wolfe_gw(gx.cost, gy.cost, iters); }).coupling.plan;
      } else {
        fail(ErrorKind::ConfigError, "mesh.methods: unknown method '" + method + "'");
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ConfigError) throw;
      table.add({method, std::to_string(ctx.seed), "", "", "", "", to_string(e.kind())});
      ctx.rec.notes[method] = e.what();
      continue;
    }
    const Correspondence pred = plan_to_correspondence(plan);
    const double err = geodesic_error(pred, truth, gy);
    const LandmarkReport lm = landmark_error(pred, truth, src.vertices, gy, landmarks, reps, ctx.seed);
    const double loss = gw_loss(gx.cost, gy.cost, plan);
    table.add({method, std::to_string(ctx.seed), fmt(err), fmt(lm.mean), fmt(loss), fmt(ms), "ok"});
    ctx.rec.metrics["geodesic_error_" + method] = err;
    ctx.rec.metrics["landmark_error_" + method] = lm.mean;
    ctx.rec.metrics["gw_loss_" + method] = loss;
    ctx.rec.timings[method + "_ms"] = ms;
    if (method == "gsgw") {
      CsvTable lmk({"src_idx", "dst_idx"});
      for (std::size_t i : farthest_point_sample(src.vertices, landmarks, ctx.seed))
        lmk.add({std::to_string(i), std::to_string(pred[i])});
      ctx.artifact("landmarks.csv", lmk.str());
    }
    ctx.log(method + " geodesic error " + fmt(err));
  }
  ctx.artifact("methods.csv", table.str());
}

// ---------------------------------------------------------------- interpolate

std::string t_label(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", t);
  return buf;
}

void cmd_interpolate(RunContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  std::vector<PointCloud> clouds;
  if (cfg.get_text("input.fixture") == "toy") {
    clouds = toy_sequence(as_size(cfg.get_int("input.fixture_n"), "input.fixture_n"),
                          static_cast<std::uint64_t>(cfg.get_int("input.instance_seed")));
  } else {
    for (const auto& p : cfg.get_paths("input.clouds")) clouds.push_back(load_mesh(p).vertices);
  }
  require(clouds.size() >= 2, ErrorKind::ConfigError, "interpolation needs at least two clouds");
  if (cfg.get_bool("input.normalize")) {
    for (auto& c : clouds) c = normalize_cloud(c);
    ctx.rec.notes["normalization"] = "centred and scaled to unit max norm before solving";
  }
  const std::vector<double> ts = cfg.get_reals("interpolate.ts");
  for (double t : ts) require(t >= 0.0 && t <= 1.0, ErrorKind::ConfigError, "interpolate.ts must lie in [0, 1]");

  double total_ms = 0.0;
  for (std::size_t k = 0; k + 1 < clouds.size(); ++k) {
    const PointCloud& x = clouds[k];
    const PointCloud& y = clouds[k + 1];
    require(x.dim() == y.dim(), ErrorKind::InvalidInput, "interpolated clouds must share a dimension");
    const CostMatrix cx = build_cost_matrix(x, CostConvention::distance);
    const CostMatrix cy = build_cost_matrix(y, CostConvention::distance);
    const SolveResult r =
        solve(DiscreteMeasure::uniform(x), DiscreteMeasure::uniform(y), cx, cy, solver_config(cfg, ctx.seed));
    const std::string tag = std::to_string(k);
    ctx.rec.metrics["gw_loss_" + tag] = r.best_loss;
    ctx.rec.timings["solve_" + tag + "_ms"] = r.wall_time_ms;
    total_ms += r.wall_time_ms;
    ctx.artifact_npy("source_" + tag + ".npy", x.points());
    ctx.artifact("plan_" + tag + ".csv", plan_csv(r.best_sparse));
    for (double t : ts)
      ctx.artifact_npy("interp_" + tag + "_t" + t_label(t) + ".npy", barycentric_interpolate(x, y, r.best_plan.plan, t).points());
    ctx.log("segment " + tag + " gw " + fmt(r.best_loss));
  }
  ctx.rec.timings["solve_total_ms"] = total_ms;
}

// ---------------------------------------------------------------- bench

void cmd_bench(RunContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const int reps = static_cast<int>(as_size(cfg.get_int("bench.reps"), "bench.reps"));
  const int warmup = static_cast<int>(cfg.get_int("bench.warmup"));
  require(warmup >= 0, ErrorKind::ConfigError, "bench.warmup must be nonnegative");
  Rng rng(ctx.seed);
  auto random_vec = [&rng](std::size_t n) {
    Vec v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = rng.normal();
    return v;
  };
  auto random_mat = [&rng](std::size_t n, std::size_t d) {
    Mat m(n, d);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
    return m;
  };
  CsvTable table({"op", "n", "m", "mean_ms", "std_ms", "reps"});
  auto row = [&](const std::string& op, std::size_t n, std::size_t m, const Stats& s) {
    table.add({op, std::to_string(n), std::to_string(m), fmt(s.mean), fmt(s.stddev), std::to_string(reps)});
    ctx.log(op + " n=" + std::to_string(n) + " " + fmt(s.mean) + " ms");
  };

  double worst_ratio = 0.0;
  for (std::size_t n : as_sizes(cfg.get_ints("bench.plan_sizes"), "bench.plan_sizes")) {
    Stats at[2];
    for (int d = 0; d < 2; ++d) {
      const std::size_t size = n << d;
      const Vec s = random_vec(size), t = random_vec(size);
      at[d] = repeat_timing(warmup, reps, [&] {
        const SparsePlan p = hard_plan_sparse(std::span<const double>(s.data(), size), std::span<const double>(t.data(), size));
        if (p.empty()) std::abort();
      });
      row("plan_extract", size, size, at[d]);
    }
    const double ratio = at[1].mean / at[0].mean;
    ctx.rec.timings["plan_doubling_ratio_" + std::to_string(n)] = ratio;
    worst_ratio = std::max(worst_ratio, ratio);
  }
  ctx.rec.timings["plan_doubling_ratio_max"] = worst_ratio;

  for (std::size_t n : as_sizes(cfg.get_ints("bench.soft_sizes"), "bench.soft_sizes")) {
    const Vec s = random_vec(n), t = random_vec(n);
    row("soft_plan", n, n, repeat_timing(warmup, reps, [&] { (void)soft_plan(s, t, 0.1); }));
  }

  std::vector<double> ns, dense_t, sparse_t;
  for (std::size_t n : as_sizes(cfg.get_ints("bench.gw_sizes"), "bench.gw_sizes")) {
    const CostMatrix c = build_cost_matrix(PointCloud(random_mat(n, 3)), CostConvention::distance);
    const Vec s = random_vec(n), t = random_vec(n);
    const SparsePlan sp = hard_plan_sparse(std::span<const double>(s.data(), n), std::span<const double>(t.data(), n));
    const Mat dp = densify(sp, n, n);
    volatile double sink = 0.0;
    const Stats dense = repeat_timing(warmup, reps, [&] { sink = gw_loss(c, c, dp); });
    const Stats sparse = repeat_timing(warmup, reps, [&] { sink = gw_loss_sparse(c, c, sp); });
    row("gw_loss_dense", n, n, dense);
    row("gw_loss_sparse", n, n, sparse);
    ns.push_back(static_cast<double>(n));
    dense_t.push_back(dense.mean);
    sparse_t.push_back(sparse.mean);
  }
  if (ns.size() >= 2) {
    ctx.rec.timings["gw_dense_slope"] = loglog_slope(ns, dense_t);
    ctx.rec.timings["gw_sparse_slope"] = loglog_slope(ns, sparse_t);
  }

  for (std::size_t n : as_sizes(cfg.get_ints("bench.baseline_sizes"), "bench.baseline_sizes")) {
    const CostMatrix ca = build_cost_matrix(PointCloud(random_mat(n, 2)), CostConvention::distance);
    const CostMatrix cb = build_cost_matrix(PointCloud(random_mat(n, 3)), CostConvention::distance);
    const Vec u = Vec::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
    row("frank_wolfe", n, n, repeat_timing(warmup, reps, [&] { (void)frank_wolfe_gw(ca, cb, 50); }));
    row("sinkhorn", n, n, repeat_timing(warmup, reps, [&] { (void)sinkhorn_gw(ca, cb, u, u, 0.5, 20, 200, 0); }));
  }
  ctx.rec.metrics["reps"] = reps;
  ctx.rec.metrics["warmup"] = warmup;
  ctx.artifact("bench.csv", table.str());
}

// ---------------------------------------------------------------- amortized

struct AmortizedData {
  std::vector<LabeledCloud> train;
  std::vector<LabeledCloud> eval;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

AmortizedData amortized_data(const RunConfig& cfg, std::uint64_t seed) {
  const Rng base(seed);
  const auto sizes = as_sizes(cfg.get_ints("dataset.sizes"), "dataset.sizes");
  AmortizedData d;
  d.train = synthetic_shapes(as_size(cfg.get_int("dataset.train_shapes"), "dataset.train_shapes"), base.fork(0).next_u64(), sizes);
  d.eval = synthetic_shapes(as_size(cfg.get_int("dataset.eval_shapes"), "dataset.eval_shapes"), base.fork(1).next_u64(), sizes);
  d.pairs = family_pairs(d.eval, as_size(cfg.get_int("dataset.eval_pairs"), "dataset.eval_pairs"), base.fork(2).next_u64());
  return d;
}

MatcherSpec matcher_spec(const RunConfig& cfg) {
  MatcherSpec spec;
  spec.token_dim = as_size(cfg.get_int("matcher.k"), "matcher.k");
  spec.latent = as_size(cfg.get_int("matcher.latent"), "matcher.latent");
  spec.attention = cfg.get_bool("matcher.attention");
  spec.validate();
  return spec;
}

std::filesystem::path default_checkpoint(const RunContext& ctx) {
  return ctx.opts.out_dir / "checkpoints" / ("matcher-s" + std::to_string(ctx.seed) + ".ckpt");
}

MatcherParams checkpoint_or_init(const RunContext& ctx, bool untrained) {
  if (ctx.cfg.is_set("amortized.checkpoint")) return matcher_from_checkpoint(load_checkpoint(ctx.cfg.get_path("amortized.checkpoint")));
  if (untrained) return init_matcher(matcher_spec(ctx.cfg), Rng(ctx.seed).fork(3).next_u64());
  return matcher_from_checkpoint(load_checkpoint(default_checkpoint(ctx)));
}

void amortized_train(RunContext& ctx, const AmortizedData& data) {
  const RunConfig& cfg = ctx.cfg;
  AmortizedTrainConfig tc;
  tc.epochs = as_size(cfg.get_int("train.epochs"), "train.epochs");
  tc.batches_per_epoch = as_size(cfg.get_int("train.batches"), "train.batches");
  tc.batch_size = as_size(cfg.get_int("train.batch_size"), "train.batch_size");
  tc.lr = cfg.get_real("train.lr");
  tc.lambda = cfg.get_real("train.lambda");
  tc.anneal = {cfg.get_real("train.tau_start"), cfg.get_real("train.tau_end"), static_cast<int>(tc.epochs),
               AnnealShape::exponential};
  tc.seed = Rng(ctx.seed).fork(4).next_u64();
  const MatcherParams init = init_matcher(matcher_spec(cfg), Rng(ctx.seed).fork(3).next_u64());
  const auto t0 = Clock::now();
  const AmortizedTrainResult r = train_amortized(data.train, init, tc);
  ctx.rec.timings["train_ms"] = ms_since(t0);
  ctx.rec.metrics["initial_loss"] = r.loss_trace.front();
  ctx.rec.metrics["final_loss"] = r.loss_trace.back();
  ctx.rec.metrics["retried"] = r.retried ? 1.0 : 0.0;
  ctx.rec.metrics["heldout_loss"] = evaluate_amortized_loss(r.params, data.eval, data.pairs, tc.anneal.alpha_end, tc.lambda);
  const std::filesystem::path ckpt =
      cfg.is_set("amortized.checkpoint") ? cfg.get_path("amortized.checkpoint") : default_checkpoint(ctx);
  save_checkpoint(ckpt, matcher_checkpoint(r.params));
  ctx.rec.artifacts["checkpoint"] = ckpt.string();
  ctx.artifact("loss_trace.csv", trace_csv(r.loss_trace));
}

void amortized_eval(RunContext& ctx, const AmortizedData& data) {
  const MatcherParams params = checkpoint_or_init(ctx, false);
  double acc = 0.0, base = 0.0, forward_ms = 0.0;
  CsvTable table({"src", "dst", "accuracy", "random_baseline", "forward_ms"});
  for (std::size_t k = 0; k < data.pairs.size(); ++k) {
    const auto [i, j] = data.pairs[k];
    double ms = 0.0;
    const Mat plan = timed(k == 0 ? 2 : 0, ms, [&] { return amortized_plan(params, data.eval[i].cloud, data.eval[j].cloud, 0.0); }).plan;
    const double a = label_transfer_accuracy(plan, data.eval[i].labels, data.eval[j].labels);
    const double b = random_label_baseline(data.eval[i].labels, data.eval[j].labels);
    acc += a;
    base += b;
    forward_ms += ms;
    table.add({std::to_string(i), std::to_string(j), fmt(a), fmt(b), fmt(ms)});
  }
  const double np = static_cast<double>(data.pairs.size());
  ctx.rec.metrics["accuracy"] = acc / np;
  ctx.rec.metrics["random_baseline"] = base / np;
  ctx.rec.metrics["margin"] = (acc - base) / np;
  ctx.rec.timings["forward_ms_per_pair"] = forward_ms / np;

  const std::size_t solver_pairs = std::min<std::size_t>(static_cast<std::size_t>(ctx.cfg.get_int("amortized.solver_pairs")), data.pairs.size());
  if (solver_pairs > 0) {
    double solver_ms = 0.0, solver_acc = 0.0;
    for (std::size_t k = 0; k < solver_pairs; ++k) {
      const auto [i, j] = data.pairs[k];
      const PointCloud& x = data.eval[i].cloud;
      const PointCloud& y = data.eval[j].cloud;
      const SolveResult r = solve(DiscreteMeasure::uniform(x), DiscreteMeasure::uniform(y),
                                  build_cost_matrix(x, CostConvention::distance),
                                  build_cost_matrix(y, CostConvention::distance), solver_config(ctx.cfg, ctx.seed));
      solver_ms += r.wall_time_ms;
      solver_acc += label_transfer_accuracy(r.best_plan.plan, data.eval[i].labels, data.eval[j].labels);
    }
    double fwd_ms = 0.0;
    for (std::size_t k = 0; k < solver_pairs; ++k) {
      const auto [i, j] = data.pairs[k];
      double ms = 0.0;
      (void)timed(2, ms, [&] { return amortized_plan(params, data.eval[i].cloud, data.eval[j].cloud, 0.0); });
      fwd_ms += ms;
    }
    ctx.rec.metrics["solver_accuracy"] = solver_acc / static_cast<double>(solver_pairs);
    ctx.rec.timings["solver_ms_per_pair"] = solver_ms / static_cast<double>(solver_pairs);
    ctx.rec.timings["speedup"] = solver_ms / fwd_ms;
  }
  ctx.artifact("pairs.csv", table.str());
}

void amortized_constraints(RunContext& ctx, const AmortizedData& data) {
  const MatcherParams params = checkpoint_or_init(ctx, true);
  const ConstraintReport r = check_constraints(params, data.eval, ctx.seed);
  ctx.rec.metrics["identity_dev"] = r.identity;
  ctx.rec.metrics["transpose_dev"] = r.transpose;
  ctx.rec.metrics["rigid_dev"] = r.rigid;
  ctx.rec.metrics["permutation_dev"] = r.permutation;
  ctx.rec.metrics["passed"] = r.worst() <= 1e-10 ? 1.0 : 0.0;
}

void cmd_amortized(RunContext& ctx) {
  const std::string& sub = ctx.opts.subcommand;
  const AmortizedData data = amortized_data(ctx.cfg, ctx.seed);
  if (sub == "train")
    amortized_train(ctx, data);
  else if (sub == "eval")
    amortized_eval(ctx, data);
  else if (sub == "constraints")
    amortized_constraints(ctx, data);
  else
    fail(ErrorKind::ConfigError, "amortized needs a subcommand: train, eval or constraints");
}

}  // namespace

SolverConfig solver_config(const RunConfig& cfg, std::uint64_t seed) {
  const std::string preset = cfg.get_text("solver.preset");
  SolverConfig c = preset == "interpolation_desk"    ? SolverConfig::interpolation_desk()
                   : preset == "matching_full"      ? SolverConfig::matching_full()
                   : preset == "interpolation_full" ? SolverConfig::interpolation_full()
                                                     : SolverConfig::matching_desk();
  if (cfg.is_set("solver.steps")) c.steps = c.anneal.steps = static_cast<int>(cfg.get_int("solver.steps"));
  if (cfg.is_set("solver.lr")) c.lr = cfg.get_real("solver.lr");
  if (cfg.is_set("solver.restarts")) c.restarts = static_cast<int>(cfg.get_int("solver.restarts"));
  if (cfg.is_set("solver.tau_start")) c.anneal.alpha_start = cfg.get_real("solver.tau_start");
  if (cfg.is_set("solver.tau_end")) c.anneal.alpha_end = cfg.get_real("solver.tau_end");
  if (cfg.is_set("solver.width"))
    c.f_spec.hidden_width = c.h_spec.hidden_width = as_size(cfg.get_int("solver.width"), "solver.width");
  if (cfg.is_set("solver.depth"))
    c.f_spec.depth = c.h_spec.depth = as_size(cfg.get_int("solver.depth"), "solver.depth");
  if (cfg.is_set("solver.rff")) {
    require(cfg.get_int("solver.rff") >= 0, ErrorKind::ConfigError, "solver.rff must be nonnegative");
    c.f_spec.rff_features = c.h_spec.rff_features = static_cast<std::size_t>(cfg.get_int("solver.rff"));
  }
  if (cfg.is_set("solver.warmup")) c.warmup_steps = static_cast<int>(cfg.get_int("solver.warmup"));
  if (cfg.is_set("solver.weight_decay")) c.weight_decay = cfg.get_real("solver.weight_decay");
  if (cfg.is_set("solver.grad_clip")) c.grad_clip = cfg.get_real("solver.grad_clip");
  if (cfg.is_set("solver.kind"))
    c.kind = cfg.get_text("solver.kind") == "linear" ? SlicerKind::linear : SlicerKind::nonlinear;
  if (cfg.is_set("solver.relation"))
    c.relation = cfg.get_text("solver.relation") == "independent" ? SlicerRelation::independent : SlicerRelation::dependent;
  if (cfg.is_set("solver.optimizer"))
    c.optimizer = cfg.get_text("solver.optimizer") == "adamw" ? OptimizerKind::adamw : OptimizerKind::adam;
  if (cfg.is_set("solver.activation"))
    c.f_spec.activation = c.h_spec.activation = parse_activation(cfg.get_text("solver.activation"));
  if (cfg.is_set("solver.lifting_init"))
    c.lifting_init = cfg.get_text("solver.lifting_init") == "identity" ? LiftingInit::identity : LiftingInit::pca;
  c.seed = seed;
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorKind::ConfigError, std::string("solver settings: ") + e.what());
  }
  return c;
}

Checkpoint matcher_checkpoint(const MatcherParams& params) {
  Checkpoint c;
  c.put("spec", {static_cast<double>(params.spec.token_dim), static_cast<double>(params.spec.latent),
                 params.spec.attention ? 1.0 : 0.0});
  auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  c.put("rho", vec(params.rho));
  c.put("encoder", vec(params.encoder));
  c.put("context", vec(params.context));
  c.put("readout", vec(params.readout));
  return c;
}

MatcherParams matcher_from_checkpoint(const Checkpoint& ckpt) {
  const auto& s = ckpt.get("spec");
  require(s.size() == 3, ErrorKind::ParseError, "checkpoint spec must hold 3 values");
  MatcherSpec spec;
  spec.token_dim = static_cast<std::size_t>(s[0]);
  spec.latent = static_cast<std::size_t>(s[1]);
  spec.attention = s[2] != 0.0;
  spec.validate();
  MatcherParams p;
  p.spec = spec;
  std::vector<double> all;
  for (const char* name : {"rho", "encoder", "context", "readout"}) {
    const auto& v = ckpt.get(name);
    all.insert(all.end(), v.begin(), v.end());
  }
  require(all.size() == p.count(), ErrorKind::ParseError, "checkpoint parameter count does not match its spec");
  p.assign(Eigen::Map<const Vec>(all.data(), static_cast<Eigen::Index>(all.size())));
  return p;
}

double ConstraintReport::worst() const { return std::max({identity, transpose, rigid, permutation}); }

ConstraintReport check_constraints(const MatcherParams& params, const std::vector<LabeledCloud>& shapes,
                                   std::uint64_t seed) {
  ConstraintReport r;
  Rng rng(seed);
  auto dev = [](const Mat& a, const Mat& b) { return (a - b).cwiseAbs().maxCoeff(); };
  const std::size_t count = std::min<std::size_t>(shapes.size(), 6);
  for (std::size_t k = 0; k < count; ++k) {
    const PointCloud& x = shapes[k].cloud;
    const PointCloud& y = shapes[(k + 1) % shapes.size()].cloud;
    const double n = static_cast<double>(x.size());
    const Mat id = Mat::Identity(x.size(), x.size()) / n;
    r.identity = std::max(r.identity, dev(amortized_plan(params, x, x, 0.0).plan, id));

    const Mat xy = amortized_plan(params, x, y, 0.0).plan;
    r.transpose = std::max(r.transpose, dev(amortized_plan(params, y, x, 0.0).plan, xy.transpose()));

    const RigidTransform gx = sample_rigid(x.dim(), rng.next_u64()), gy = sample_rigid(y.dim(), rng.next_u64());
    const Mat moved =
        amortized_plan(params, PointCloud(gx.apply(x.points())), PointCloud(gy.apply(y.points())), 0.0).plan;
    r.rigid = std::max(r.rigid, dev(moved, xy));

    Permutation sigma(x.size());
    std::iota(sigma.begin(), sigma.end(), std::size_t{0});
    rng.shuffle(sigma);
    Mat px(x.size(), x.dim()), pxy(xy.rows(), xy.cols());
    for (std::size_t i = 0; i < sigma.size(); ++i) {
      px.row(static_cast<Eigen::Index>(i)) = x.points().row(static_cast<Eigen::Index>(sigma[i]));
      pxy.row(static_cast<Eigen::Index>(i)) = xy.row(static_cast<Eigen::Index>(sigma[i]));
    }
    r.permutation = std::max(r.permutation, dev(amortized_plan(params, PointCloud(px), y, 0.0).plan, pxy));
  }
  return r;
}

std::vector<ResultRecord> run_command(const RunConfig& cfg, const RunOptions& opts) {
  const std::string& command = cfg.command();
  if (command != "amortized")
    require(opts.subcommand.empty(), ErrorKind::ConfigError, command + " takes no subcommand");
  std::vector<ResultRecord> out;
  for (std::uint64_t seed : seeds_of(cfg, opts)) {
    RunContext ctx{cfg, opts, seed, {}, {}};
    ctx.rec.run_id = run_id(cfg, opts, seed);
    ctx.rec.command = opts.subcommand.empty() ? command : command + " " + opts.subcommand;
    ctx.rec.seed = seed;
    ctx.rec.config_hash = cfg.hash();
    ctx.dir = opts.out_dir / ctx.rec.run_id;
    std::filesystem::create_directories(ctx.dir);
    write_atomic(ctx.dir / "config.txt", cfg.canonical());
    ctx.rec.artifacts["config.txt"] = (ctx.dir / "config.txt").string();

    if (command == "solve")
      cmd_solve(ctx);
    else if (command == "baseline")
      cmd_baseline(ctx);
    else if (command == "mesh-match")
      cmd_mesh_match(ctx);
    else if (command == "interpolate")
      cmd_interpolate(ctx);
    else if (command == "bench")
      cmd_bench(ctx);
    else
      cmd_amortized(ctx);

    const std::string line = ctx.rec.to_json().dump();
    write_atomic(ctx.dir / "record.json", ctx.rec.to_json().dump(2) + "\n");
    append_line(opts.out_dir / "results.jsonl", line);
    out.push_back(std::move(ctx.rec));
  }
  return out;
}

}  // namespace gsgw::cli
