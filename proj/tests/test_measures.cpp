#include "doctest.h"

#include "gsgw/errors.hpp"
#include "gsgw/measures.hpp"
#include "test_util.hpp"

using namespace gsgw;
using namespace gsgw::testing;

namespace {

CostMatrix line_cost(std::initializer_list<double> coords) {
  Mat x(static_cast<Eigen::Index>(coords.size()), 1);
  Eigen::Index i = 0;
  for (double c : coords) x(i++, 0) = c;
  return build_cost_matrix(PointCloud(x), CostConvention::distance);
}

}  // namespace

TEST_CASE("build_cost_matrix small cases") {
  CHECK(line_cost({3.0}).entries == Mat::Zero(1, 1));
  Mat expected(2, 2);
  expected << 0, 1, 1, 0;
  CHECK(line_cost({0.0, 1.0}).entries == expected);
  expected << 0, 2, 2, 0;
  CHECK(line_cost({0.0, 2.0}).entries == expected);

  Mat x(2, 2);
  x << 0, 0, 3, 4;
  const auto sq = build_cost_matrix(PointCloud(x), CostConvention::squared_distance);
  CHECK(sq.entries(0, 1) == doctest::Approx(25.0));
  CHECK(sq.convention == CostConvention::squared_distance);
  sq.validate();
}

TEST_CASE("point clouds reject non-finite coordinates") {
  Mat x(2, 1);
  x << 0.0, std::nan("");
  CHECK_THROWS_AS(PointCloud{x}, Error);
  try {
    PointCloud{x};
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidInput);
  }
}

TEST_CASE("gw_loss two-point example against the quadruple sum") {
  const auto cx = line_cost({0.0, 1.0});
  const auto cy = line_cost({0.0, 2.0});
  Mat diag = 0.5 * Mat::Identity(2, 2);
  Mat anti(2, 2);
  anti << 0, 0.5, 0.5, 0;
  // Oracle: only pairs i != i' contribute (1-2)^2 = 1 for j != j', and
  // i = i', j = j' contributes 0; the two nonzero terms give 2 * 0.25.
  CHECK(gw_loss_naive(cx, cy, diag) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(gw_loss_naive(cx, cy, anti) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(gw_loss(cx, cy, diag) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(gw_loss(cx, cy, anti) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gw_loss is zero for an isometric self match") {
  Rng rng(3);
  const auto c = random_cost(rng, 6);
  CHECK(gw_loss(c, c, Mat::Identity(6, 6) / 6.0) <= 1e-12);
}

TEST_CASE("gw_loss agrees with the naive oracle on random instances") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(6));
    const Eigen::Index m = 2 + static_cast<Eigen::Index>(rng.below(6));
    const auto cx = random_cost(rng, n);
    const auto cy = random_cost(rng, m, 3);
    const Mat plan = random_interior_coupling(rng, n, m);
    const double naive = gw_loss_naive(cx, cy, plan);
    CHECK(std::abs(gw_loss(cx, cy, plan) - naive) <= 1e-10 * (1.0 + std::abs(naive)));
    CHECK(gw_loss(cx, cy, plan) >= 0.0);
  }
}

TEST_CASE("gw_loss_naive size guard") {
  Rng rng(1);
  const auto cx = random_cost(rng, 15);
  const auto cy = random_cost(rng, 15);
  try {
    gw_loss_naive(cx, cy, Mat::Zero(15, 15));
    FAIL("expected SizeError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SizeError);
  }
}

TEST_CASE("gw_loss shape mismatch") {
  Rng rng(1);
  const auto cx = random_cost(rng, 3);
  const auto cy = random_cost(rng, 4);
  try {
    gw_loss(cx, cy, Mat::Zero(3, 3));
    FAIL("expected ShapeError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeError);
  }
}

TEST_CASE("gw_loss is invariant under simultaneous relabeling") {
  Rng rng(5);
  const Eigen::Index n = 5;
  const Eigen::Index m = 4;
  const auto cx = random_cost(rng, n);
  const auto cy = random_cost(rng, m);
  const Mat plan = random_interior_coupling(rng, n, m);
  std::vector<int> p(n), q(m);
  std::iota(p.begin(), p.end(), 0);
  std::iota(q.begin(), q.end(), 0);
  rng.shuffle(p);
  rng.shuffle(q);
  Eigen::PermutationMatrix<Eigen::Dynamic> pp(n), pq(m);
  for (Eigen::Index i = 0; i < n; ++i) pp.indices()(i) = p[static_cast<std::size_t>(i)];
  for (Eigen::Index j = 0; j < m; ++j) pq.indices()(j) = q[static_cast<std::size_t>(j)];
  CostMatrix cx2{pp * cx.entries * pp.transpose(), cx.convention};
  CostMatrix cy2{pq * cy.entries * pq.transpose(), cy.convention};
  const Mat plan2 = pp * plan * pq.transpose();
  CHECK(gw_loss(cx2, cy2, plan2) == doctest::Approx(gw_loss(cx, cy, plan)).epsilon(1e-12));
}

TEST_CASE("gw_loss_grad_pi matches central differences") {
  Rng rng(21);
  for (Eigen::Index n : {2, 3, 5}) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto cx = random_cost(rng, n);
      const auto cy = random_cost(rng, n, 3);
      const Mat plan = random_interior_coupling(rng, n, n);
      const Mat g = gw_loss_grad_pi(cx, cy, plan);
      const double h = 1e-5;
      double worst = 0.0;
      for (Eigen::Index k = 0; k < plan.size(); ++k) {
        Mat up = plan, dn = plan;
        up.data()[k] += h;
        dn.data()[k] -= h;
        // The naive sum is the oracle: independent of the decomposition.
        const double fd = (gw_loss_naive(cx, cy, up) - gw_loss_naive(cx, cy, dn)) / (2 * h);
        worst = std::max(worst, std::abs(g.data()[k] - fd) / (1e-8 + std::abs(fd)));
      }
      CHECK(worst <= 1e-5);
    }
  }
}

TEST_CASE("gw_loss_grad_pi: self match is constant on the diagonal") {
  Rng rng(8);
  const auto c = random_cost(rng, 5);
  const Mat g = gw_loss_grad_pi(c, c, Mat::Identity(5, 5) / 5.0);
  for (Eigen::Index i = 1; i < 5; ++i) CHECK(g(i, i) == doctest::Approx(g(0, 0)).epsilon(1e-12));
}

TEST_CASE("gw_loss_grad_pi: first-order optimality at an isometric optimum") {
  Rng rng(9);
  const auto c = random_cost(rng, 4);
  const Mat opt = Mat::Identity(4, 4) / 4.0;
  const Mat g = gw_loss_grad_pi(c, c, opt);
  // Feasible directions from a vertex: move toward any other scaled permutation.
  for (int trial = 0; trial < 20; ++trial) {
    const Mat dir = random_coupling(rng, 4) - opt;
    CHECK(g.cwiseProduct(dir).sum() >= -1e-8);
  }
}

TEST_CASE("fgw_loss") {
  const auto cx = line_cost({0.0, 1.0});
  const auto cy = line_cost({0.0, 2.0});
  const Mat plan = 0.5 * Mat::Identity(2, 2);
  Mat feat(2, 1);
  feat << 0.0, 1.0;
  CHECK(fgw_loss(cx, cy, plan, feat, feat, 0.0) == gw_loss(cx, cy, plan));
  CHECK(fgw_loss(cx, cx, plan, feat, feat, 1.0) == doctest::Approx(0.0));
  // Scalar brute force: 0.5 * GW + 0.5 * sum_ij |f_i - f_j|^2 pi_ij.
  double feature = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) feature += (feat(i, 0) - feat(j, 0)) * (feat(i, 0) - feat(j, 0)) * plan(i, j);
  const double expected = 0.5 * gw_loss_naive(cx, cy, plan) + 0.5 * feature;
  CHECK(expected == doctest::Approx(0.25));
  CHECK(fgw_loss(cx, cy, plan, feat, feat, 0.5) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(fgw_loss(cx, cy, plan, feat, feat, 1.5), Error);
}

TEST_CASE("sparse and permutation losses agree with the dense path") {
  Rng rng(4);
  const auto cx = random_cost(rng, 6);
  const auto cy = random_cost(rng, 6);
  Permutation sigma{3, 1, 4, 0, 5, 2};
  SparsePlan sparse;
  for (std::size_t i = 0; i < 6; ++i) sparse.push_back({i, sigma[i], 1.0 / 6.0});
  const double dense = gw_loss(cx, cy, permutation_plan(sigma));
  CHECK(gw_loss_sparse(cx, cy, sparse) == doctest::Approx(dense).epsilon(1e-12));
  CHECK(gw_loss_permutation(cx, cy, sigma) == doctest::Approx(dense).epsilon(1e-12));
}

TEST_CASE("coupling marginals") {
  Mat plan(2, 3);
  plan << 1.0 / 3, 1.0 / 6, 0, 0, 1.0 / 6, 1.0 / 3;
  const auto c = Coupling::from_plan(plan);
  CHECK(c.uniform_marginal_error() <= 1e-15);
  CHECK(c.marginal_error() == 0.0);
  Mat neg = plan;
  neg(0, 2) = -1e-16;
  CHECK(Coupling::from_plan(neg).plan(0, 2) == 0.0);
  neg(0, 2) = -1e-6;
  CHECK_THROWS_AS(Coupling::from_plan(neg), Error);
}
