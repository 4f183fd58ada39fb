#include "doctest.h"

#include "gsgw/baselines.hpp"
#include "gsgw/errors.hpp"
#include "gsgw/monotone_plan.hpp"
#include "gsgw/solver.hpp"
#include "test_util.hpp"

using namespace gsgw;
using namespace gsgw::testing;

namespace {

SolverConfig small_config(int steps = 120, int restarts = 2, std::uint64_t seed = 1) {
  SolverConfig cfg;
  cfg.steps = steps;
  cfg.lr = 1e-2;
  cfg.restarts = restarts;
  cfg.seed = seed;
  cfg.anneal = {1.0, 0.03, steps, AnnealShape::exponential};
  cfg.f_spec.hidden_width = cfg.h_spec.hidden_width = 16;
  cfg.f_spec.depth = cfg.h_spec.depth = 3;
  cfg.f_spec.rff_features = cfg.h_spec.rff_features = 4;
  return cfg;
}

struct Instance {
  DiscreteMeasure mu;
  DiscreteMeasure nu;
  CostMatrix cx;
  CostMatrix cy;
};

Instance random_instance(Rng& rng, Eigen::Index n, Eigen::Index m, Eigen::Index p, Eigen::Index q) {
  auto mu = DiscreteMeasure::uniform(PointCloud(random_points(rng, n, p)));
  auto nu = DiscreteMeasure::uniform(PointCloud(random_points(rng, m, q)));
  auto cx = build_cost_matrix(mu.support, CostConvention::distance);
  auto cy = build_cost_matrix(nu.support, CostConvention::distance);
  return {mu, nu, cx, cy};
}

}  // namespace

TEST_CASE("adam step examples") {
  AdamConfig adam;
  Vec params(3);
  params << 1.0, -2.0, 0.5;
  AdamState state;
  Vec p = params;
  adam_step(p, Vec::Zero(3), state, 0.1, 1.0, adam);
  CHECK(p == params);

  AdamConfig adamw{OptimizerKind::adamw, 0.9, 0.999, 1e-8, 0.1};
  AdamState state2;
  Vec q = params;
  adam_step(q, Vec::Zero(3), state2, 0.1, 1.0, adamw);
  CHECK((q - params * 0.99).cwiseAbs().maxCoeff() <= 1e-15);

  // Clipping scales a norm-10 gradient by 0.1; first Adam moments see it.
  Vec g(2);
  g << 6.0, 8.0;
  Vec w = Vec::Zero(2);
  AdamState s3;
  const double norm = adam_step(w, g, s3, 0.01, 1.0, adam);
  CHECK(norm == doctest::Approx(10.0));
  CHECK(s3.m(0) == doctest::Approx(0.1 * 0.6));
  CHECK(s3.m(1) == doctest::Approx(0.1 * 0.8));

  Vec bad(2);
  bad << 1.0, std::nan("");
  CHECK_THROWS_AS(adam_step(w, bad, s3, 0.01, 1.0, adam), Error);
}

TEST_CASE("adam matches a hand-rolled reference") {
  Rng rng(3);
  Vec params = random_points(rng, 5, 1).col(0);
  Vec ref = params;
  Vec m = Vec::Zero(5), v = Vec::Zero(5);
  AdamState state;
  const AdamConfig cfg;
  for (int t = 1; t <= 20; ++t) {
    const Vec g = random_points(rng, 5, 1).col(0) * 0.1;
    adam_step(params, g, state, 0.05, 100.0, cfg);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g.cwiseProduct(g);
    const Vec mh = m / (1 - std::pow(0.9, t));
    const Vec vh = v / (1 - std::pow(0.999, t));
    ref -= 0.05 * mh.cwiseQuotient((vh.cwiseSqrt().array() + 1e-8).matrix());
  }
  CHECK((params - ref).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("warmup") {
  CHECK(warmup_lr(3e-3, 0, 50) == doctest::Approx(3e-3 / 50).epsilon(1e-15));
  CHECK(warmup_lr(3e-3, 49, 50) == 3e-3);
  CHECK(warmup_lr(3e-3, 500, 50) == 3e-3);
  CHECK(warmup_lr(3e-3, 0, 0) == 3e-3);
}

TEST_CASE("config validation") {
  SolverConfig cfg = small_config();
  cfg.warmup_steps = cfg.steps + 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_config();
  cfg.restarts = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK_NOTHROW(SolverConfig::matching_full().validate());
  CHECK_NOTHROW(SolverConfig::interpolation_desk().validate());
}

TEST_CASE("self-matching reaches zero") {
  Rng rng(4);
  const auto mu = DiscreteMeasure::uniform(PointCloud(random_points(rng, 12, 3)));
  const CostMatrix c = build_cost_matrix(mu.support, CostConvention::distance);
  const SolveResult r = solve(mu, mu, c, c, small_config(30, 1));
  CHECK(r.best_loss <= 1e-6);
  CHECK(r.best_plan.uniform_marginal_error() <= 1e-12);
}

TEST_CASE("two-point instance") {
  Mat x(2, 1), y(2, 1);
  x << 0.0, 1.0;
  y << 0.0, 2.0;
  const auto mu = DiscreteMeasure::uniform(PointCloud(x));
  const auto nu = DiscreteMeasure::uniform(PointCloud(y));
  const SolveResult r = solve(mu, nu, build_cost_matrix(mu.support, CostConvention::distance),
                              build_cost_matrix(nu.support, CostConvention::distance), small_config(20, 1));
  CHECK(r.best_loss == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("hard loss is an upper bound on brute force") {
  Rng rng(5);
  for (int trial = 0; trial < 8; ++trial) {
    const Eigen::Index n = 4 + trial % 4;
    const Instance inst = random_instance(rng, n, n, 2, 3);
    const SolveResult r = solve(inst.mu, inst.nu, inst.cx, inst.cy, small_config(60, 2, trial));
    const double bf = brute_force_gw(inst.cx, inst.cy).best_loss;
    CHECK(r.best_loss >= bf - 1e-9);
    CHECK(r.best_loss == doctest::Approx(gw_loss(inst.cx, inst.cy, r.best_plan)).epsilon(1e-12));
    CHECK(r.restart_losses.size() == 2);
    CHECK(r.best_loss == *std::min_element(r.restart_losses.begin(), r.restart_losses.end()));
  }
}

TEST_CASE("unequal sizes and swapped dimensions") {
  Rng rng(6);
  const Instance inst = random_instance(rng, 9, 6, 3, 2);
  const SolveResult r = solve(inst.mu, inst.nu, inst.cx, inst.cy, small_config(40, 1));
  CHECK(r.swapped);
  CHECK(r.best_plan.rows() == 9);
  CHECK(r.best_plan.cols() == 6);
  CHECK(r.best_plan.uniform_marginal_error() <= 1e-12);
  CHECK(r.best_loss == doctest::Approx(gw_loss(inst.cx, inst.cy, r.best_plan)).epsilon(1e-12));
}

TEST_CASE("non-uniform weights are rejected") {
  Rng rng(7);
  const Instance inst = random_instance(rng, 3, 3, 2, 2);
  Vec w(3);
  w << 0.5, 0.25, 0.25;
  const DiscreteMeasure weighted(inst.mu.support, w);
  try {
    solve(weighted, inst.nu, inst.cx, inst.cy, small_config(5, 1));
    FAIL("expected UnsupportedMarginals");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnsupportedMarginals);
  }
}

TEST_CASE("determinism") {
  Rng rng(8);
  const Instance inst = random_instance(rng, 10, 10, 2, 3);
  const SolveResult a = solve(inst.mu, inst.nu, inst.cx, inst.cy, small_config(40, 2, 9));
  const SolveResult b = solve(inst.mu, inst.nu, inst.cx, inst.cy, small_config(40, 2, 9));
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.best_plan.plan == b.best_plan.plan);
  CHECK(a.best_loss == b.best_loss);
}

TEST_CASE("trained pairs are invariant under construction-level rigid motions") {
  Rng rng(9);
  for (int trial = 0; trial < 4; ++trial) {
    const Eigen::Index p = trial % 2 == 0 ? 2 : 3;
    const Instance inst = random_instance(rng, 10, 10, p, 3);
    const SolveResult r = solve(inst.mu, inst.nu, inst.cx, inst.cy, small_config(40, 1, trial));
    const Mat& x = inst.mu.support.points();
    const Mat& y = inst.nu.support.points();
    const RigidTransform gx = sample_rigid(static_cast<std::size_t>(p), 50 + trial);
    const RigidTransform gy = sample_rigid(3, 70 + trial);
    SparsePlan before, after;
    const double l0 = hard_loss_of(r.best_pair, x, y, inst.cx, inst.cy, &before);
    const Mat gxx = gx.apply(x), gyy = gy.apply(y);
    const CostMatrix cx2 = build_cost_matrix(PointCloud(gxx), CostConvention::distance);
    const CostMatrix cy2 = build_cost_matrix(PointCloud(gyy), CostConvention::distance);
    const double l1 = hard_loss_of(compose_rigid(r.best_pair, gx, gy), gxx, gyy, cx2, cy2, &after);
    CHECK(densify(before, 10, 10) == densify(after, 10, 10));
    CHECK(std::abs(l0 - l1) <= 1e-10);
    CHECK(l0 == r.best_loss);
  }
}

TEST_CASE("end-to-end gradient") {
  // Fully random parameters; h = 1e-3 keeps round-off below the tolerance on near-zero coordinates.
  double worst = 0;
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    Rng rng(seed);
    const Instance inst = random_instance(rng, 8, 8, 2, 3);
    SolverConfig cfg = small_config();
    cfg.f_spec.activation = cfg.h_spec.activation = ad::Activation::tanh;
    SlicerPair pair = initial_pair(inst.mu.support.points(), inst.nu.support.points(), cfg, 0);
    const Vec residual = init_mlp_params(pair.h_spec, rng, false);
    pair.h_params.tail(residual.size()) = residual;
    const auto nf = pair.f_params.size();
    const auto nh = pair.h_params.size();
    Vec theta(nf + nh);
    theta << pair.f_params, pair.h_params;
    auto fn = [&](ad::Tape&, ad::Var th) {
      auto [s, t] = pushforward(pair, ad::slice(th, 0, nf, 1), ad::slice(th, nf, nh, 1), inst.mu.support.points(),
                                inst.nu.support.points());
      return ad::gw_loss(ad::soft_plan(s, t, 0.5), inst.cx, inst.cy);
    };
    worst = std::max(worst, ad::grad_check(fn, theta, 1e-3));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("ablation grid") {
  Rng rng(11);
  double means[2][2] = {{0, 0}, {0, 0}};
  for (int trial = 0; trial < 3; ++trial) {
    const Instance inst = random_instance(rng, 10, 10, 2, 3);
    const SolverConfig cfg = small_config(80, 2, trial);
    const AblationGrid grid = ablation_grid(inst.mu, inst.nu, inst.cx, inst.cy, cfg);
    const SolveResult direct = solve(inst.mu, inst.nu, inst.cx, inst.cy, cfg);
    CHECK(grid.cells[0][0].best_loss == direct.best_loss);
    for (int k = 0; k < 2; ++k)
      for (int r = 0; r < 2; ++r) means[k][r] += grid.cells[static_cast<std::size_t>(k)][static_cast<std::size_t>(r)].best_loss / 3.0;
  }
  CHECK(means[0][0] <= means[0][1]);
  CHECK(means[0][0] <= means[1][0]);
  CHECK(means[0][0] <= means[1][1]);
}
