#include "doctest.h"

#include "gsgw/baselines.hpp"
#include "gsgw/errors.hpp"
#include "gsgw/monotone_plan.hpp"
#include "gsgw/rigid.hpp"
#include "test_util.hpp"

#include <numeric>

using namespace gsgw;
using namespace gsgw::testing;

namespace {

CostMatrix two_point(double d) {
  CostMatrix c{Mat::Zero(2, 2), CostConvention::distance};
  c.entries(0, 1) = c.entries(1, 0) = d;
  return c;
}

Vec uniform(Eigen::Index n) { return Vec::Constant(n, 1.0 / static_cast<double>(n)); }

/// O(K^2) reference for the projected 1-D loss.
double gw_1d_reference(const Vec& s, const Vec& t, const SparsePlan& plan) {
  double total = 0.0;
  for (const PlanEntry& e : plan)
    for (const PlanEntry& f : plan) {
      const double ds = s(static_cast<Eigen::Index>(e.i)) - s(static_cast<Eigen::Index>(f.i));
      const double dt = t(static_cast<Eigen::Index>(e.j)) - t(static_cast<Eigen::Index>(f.j));
      const double diff = ds * ds - dt * dt;
      total += diff * diff * e.mass * f.mass;
    }
  return total;
}

bool nonincreasing(const std::vector<double>& trace, double tol) {
  for (std::size_t k = 1; k < trace.size(); ++k)
    if (trace[k] > trace[k - 1] + tol) return false;
  return true;
}

}  // namespace

TEST_CASE("brute force on small instances") {
  Rng rng(1);
  const CostMatrix c = random_cost(rng, 5);
  const BruteForceResult self = brute_force_gw(c, c);
  CHECK(self.best_loss == 0.0);
  CHECK(self.evaluated == 120);
  Permutation id(5);
  std::iota(id.begin(), id.end(), std::size_t{0});
  CHECK(gw_loss_permutation(c, c, id) == 0.0);

  const BruteForceResult two = brute_force_gw(two_point(1), two_point(2));
  CHECK(two.best_loss == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(gw_loss(two_point(1), two_point(2), permutation_plan({1, 0})) == doctest::Approx(0.5).epsilon(1e-15));

  // n = 3: the minimum over the six plans evaluated by gw_loss.
  for (int trial = 0; trial < 10; ++trial) {
    const CostMatrix cx = random_cost(rng, 3);
    const CostMatrix cy = random_cost(rng, 3, 3);
    Permutation s{0, 1, 2};
    double best = 1e300;
    do best = std::min(best, gw_loss(cx, cy, permutation_plan(s)));
    while (std::next_permutation(s.begin(), s.end()));
    const BruteForceResult r = brute_force_gw(cx, cy);
    CHECK(std::abs(r.best_loss - best) <= 1e-15 * std::max(1.0, best));
    CHECK(std::abs(gw_loss(cx, cy, permutation_plan(r.best_perm)) - r.best_loss) <= 1e-14);
  }
}

TEST_CASE("brute force guards") {
  Rng rng(2);
  CHECK_THROWS_AS(brute_force_gw(random_cost(rng, 9), random_cost(rng, 9)), Error);
  CHECK_THROWS_AS(brute_force_gw(random_cost(rng, 3), random_cost(rng, 4)), Error);
  CHECK_THROWS_AS(gw_1d_oracle(Vec::Zero(9), Vec::Zero(9)), Error);
}

TEST_CASE("1-D oracle") {
  Vec x(5);
  x << 0.3, -1.0, 2.0, 0.7, 1.1;
  const Oracle1d self = gw_1d_oracle(x, x);
  CHECK(self.loss == 0.0);
  Permutation id(5);
  std::iota(id.begin(), id.end(), std::size_t{0});
  CHECK(self.sigma == id);
}

TEST_CASE("oracle permutation round-trips through construct_xi") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Vec x(5), y(5);
    for (int k = 0; k < 5; ++k) {
      x(k) = rng.normal();
      y(k) = rng.normal();
    }
    const Oracle1d o = gw_1d_oracle(x, y);
    const PiecewiseLinear xi = construct_xi(std::span<const double>(x.data(), 5), o.sigma,
                                            std::span<const double>(y.data(), 5));
    Vec s(5), t(5);
    for (int k = 0; k < 5; ++k) {
      s(k) = xi(x(k));
      t(k) = xi(y(k));
    }
    const Coupling plan = hard_plan(s, t);
    CHECK(plan_permutation(plan.plan) == o.sigma);
    CHECK(std::abs(gw_loss(cost_1d(x), cost_1d(y), plan) - o.loss) <= 1e-14);
  }
}

TEST_CASE("Hungarian matches enumeration") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index n = 1 + trial % 7;
    const Mat cost = random_points(rng, n, n);
    Permutation s(static_cast<std::size_t>(n));
    std::iota(s.begin(), s.end(), std::size_t{0});
    double best = 1e300;
    do {
      double v = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) v += cost(i, static_cast<Eigen::Index>(s[static_cast<std::size_t>(i)]));
      best = std::min(best, v);
    } while (std::next_permutation(s.begin(), s.end()));
    const Permutation h = hungarian(cost);
    double v = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) v += cost(i, static_cast<Eigen::Index>(h[static_cast<std::size_t>(i)]));
    CHECK(v == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("Frank-Wolfe") {
  const IterativeResult two = frank_wolfe_gw(two_point(1), two_point(2), 3);
  CHECK(two.loss_trace.back() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(two.iterations <= 3);

  Rng rng(5);
  const CostMatrix c = random_cost(rng, 6);
  CHECK(frank_wolfe_gw(c, c, 50).loss_trace.back() <= 1e-12);

  for (int trial = 0; trial < 10; ++trial) {
    const CostMatrix cx = random_cost(rng, 6);
    const CostMatrix cy = random_cost(rng, 6, 3);
    const IterativeResult fw = frank_wolfe_gw(cx, cy, 100);
    CHECK(fw.loss_trace.back() >= brute_force_gw(cx, cy).best_loss - 1e-9);
    CHECK(fw.coupling.uniform_marginal_error() <= 1e-8);
    CHECK(nonincreasing(fw.loss_trace, 1e-12));
  }
  CHECK_THROWS_AS(frank_wolfe_gw(random_cost(rng, 3), random_cost(rng, 4), 5), Error);
}

TEST_CASE("entropic GW") {
  const IterativeResult two = sinkhorn_gw(two_point(1), two_point(2), uniform(2), uniform(2), 0.05, 50, 500);
  CHECK(std::abs(two.loss_trace.back() - 0.5) <= 0.05);

  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const CostMatrix c = random_cost(rng, 4 + trial);
    const IterativeResult self = sinkhorn_gw(c, c, uniform(4 + trial), uniform(4 + trial), 0.01, 200, 2000, 3);
    CHECK(self.loss_trace.back() <= 1e-3);
  }
  for (int trial = 0; trial < 8; ++trial) {
    const CostMatrix cx = random_cost(rng, 6);
    const CostMatrix cy = random_cost(rng, 6, 3);
    for (double eps : kSinkhornEpsilons) {
      const IterativeResult r = sinkhorn_gw(cx, cy, uniform(6), uniform(6), eps, 100, 1000, trial);
      CHECK(nonincreasing(r.loss_trace, 1e-10));
      CHECK(r.loss_trace.back() >= brute_force_gw(cx, cy).best_loss - 1e-9);
      CHECK(r.coupling.uniform_marginal_error() <= 1e-8);
    }
  }
  // Non-uniform marginals are supported.
  Vec a(3);
  a << 0.5, 0.3, 0.2;
  const IterativeResult nu = sinkhorn_gw(random_cost(rng, 3), random_cost(rng, 4), a, uniform(4), 0.1, 30, 1000);
  CHECK(nu.coupling.marginal_error() <= 1e-12);
  CHECK((nu.coupling.row_marginal - a).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK_THROWS_AS(sinkhorn_gw(two_point(1), two_point(2), uniform(2), uniform(2), 0.0, 5, 5), Error);
}

TEST_CASE("projected 1-D loss closed form") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 2 + trial % 6, m = 2 + (trial * 3) % 7;
    const Vec s = random_points(rng, n, 1).col(0);
    const Vec t = random_points(rng, m, 1).col(0);
    const SparsePlan plan = hard_plan_sparse(std::span<const double>(s.data(), static_cast<std::size_t>(n)),
                                             std::span<const double>(t.data(), static_cast<std::size_t>(m)));
    const double ref = gw_1d_reference(s, t, plan);
    CHECK(std::abs(gw_loss_1d(s, t, plan) - ref) <= 1e-12 * std::max(1.0, ref));
  }
}

TEST_CASE("sliced GW") {
  Rng rng(9);
  Mat pts = random_points(rng, 12, 3);
  pts.col(0) *= 3.0;
  pts.col(1) *= 0.5;
  const DiscreteMeasure mu = DiscreteMeasure::uniform(PointCloud(pts));
  SgwConfig cfg;
  cfg.num_directions = 100;
  CHECK(sgw(mu, mu, cfg) <= 1e-12);

  cfg.mode = SgwMode::independent;
  CHECK(sgw(mu, mu, cfg) > 1e-3);

  // Shared directions see the ambient frame, so a rotation changes the value.
  cfg.mode = SgwMode::shared;
  const RigidTransform g = sample_rigid(3, 4);
  const DiscreteMeasure rotated = DiscreteMeasure::uniform(PointCloud(g.apply(pts)));
  const double moved = sgw(mu, rotated, cfg);
  CHECK(moved > 1e-3);

  cfg.num_directions = 0;
  CHECK_THROWS_AS(sgw(mu, mu, cfg), Error);
}

TEST_CASE("shared SGW is stable in the many-direction limit") {
  Rng rng(10);
  const DiscreteMeasure mu = DiscreteMeasure::uniform(PointCloud(random_points(rng, 10, 2)));
  const DiscreteMeasure nu = DiscreteMeasure::uniform(PointCloud(random_points(rng, 12, 3)));
  SgwConfig a{10000, SgwMode::shared, 1};
  SgwConfig b{10000, SgwMode::shared, 2};
  const double va = sgw(mu, nu, a);
  const double vb = sgw(mu, nu, b);
  CHECK(std::abs(va - vb) <= 0.02 * std::max(va, vb));
}

TEST_CASE("max-min SGW") {
  Rng rng(11);
  Mat pts = random_points(rng, 8, 2);
  pts.col(0) *= 2.0;
  const DiscreteMeasure mu = DiscreteMeasure::uniform(PointCloud(pts));
  SgwConfig cfg{1, SgwMode::maxmin, 3, 30, 4};
  const SgwResult self = sgw_detailed(mu, mu, cfg);
  CHECK(self.restart_values.size() == 4);
  // Identical measures: the inner player can always copy the outer direction.
  CHECK(self.value <= 1e-6);
  const DiscreteMeasure other = DiscreteMeasure::uniform(PointCloud(random_points(rng, 8, 3)));
  const SgwResult diff = sgw_detailed(mu, other, cfg);
  CHECK(diff.value > 0.0);
  CHECK(diff.value == *std::max_element(diff.restart_values.begin(), diff.restart_values.end()));
}

TEST_CASE("stored witness: the oracle never loses to a monotone arrangement") {
  const WitnessInstance w = monotone_suboptimality_witness();
  REQUIRE(w.x.size() == 4);
  const Oracle1d oracle = gw_1d_oracle(w.x, w.y);
  const MonotoneLosses m = monotone_1d_losses(w.x, w.y);
  CHECK(oracle.loss <= std::min(m.monotone, m.anti_monotone) + 1e-12);
}
