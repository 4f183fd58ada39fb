#pragma once

#include "gsgw/linalg.hpp"

#include <cstddef>
#include <vector>

namespace gsgw {

/// A finite point set in R^d; one point per row.
class PointCloud {
 public:
  PointCloud() = default;
  /// Validates: at least one point, positive dimension, finite coordinates.
  explicit PointCloud(Mat points);

  const Mat& points() const { return points_; }
  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(points_.cols()); }
  auto point(std::size_t i) const { return points_.row(static_cast<Eigen::Index>(i)); }

 private:
  Mat points_;
};

/// Weighted point set; weights lie on the probability simplex.
struct DiscreteMeasure {
  PointCloud support;
  Vec weights;

  static DiscreteMeasure uniform(PointCloud cloud);
  DiscreteMeasure(PointCloud cloud, Vec w);

  std::size_t size() const { return support.size(); }
  bool is_uniform(double tol = 1e-12) const;
};

enum class CostConvention { distance, squared_distance };

/// Intra-space cost matrix. The convention travels with the entries; nothing in
/// the library converts between conventions implicitly.
struct CostMatrix {
  Mat entries;
  CostConvention convention = CostConvention::distance;

  std::size_t size() const { return static_cast<std::size_t>(entries.rows()); }
  /// Throws InvalidInput unless square, symmetric, zero-diagonal and nonnegative.
  void validate(double tol = 1e-12) const;
};

/// Transport plan together with the marginals it was built for.
struct Coupling {
  Mat plan;
  Vec row_marginal;
  Vec col_marginal;

  std::size_t rows() const { return static_cast<std::size_t>(plan.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(plan.cols()); }

  /// Marginals are read off the plan; entries in [-1e-15, 0) are clipped.
  static Coupling from_plan(Mat plan);
  /// Largest absolute deviation of the plan's sums from the stored marginals.
  double marginal_error() const;
  /// Largest deviation from the uniform marginals 1/n and 1/m.
  double uniform_marginal_error() const;
};

/// One nonzero of a plan in index form.
struct PlanEntry {
  std::size_t i;
  std::size_t j;
  double mass;
};
using SparsePlan = std::vector<PlanEntry>;

Mat densify(const SparsePlan& plan, std::size_t n, std::size_t m);

CostMatrix build_cost_matrix(const PointCloud& cloud, CostConvention convention);

/// Squared-loss GW objective through the quadratic decomposition
///   a'(Cx.Cx)a + b'(Cy.Cy)b - 2 <Cx P Cy, P>
/// with a, b the row and column sums of P. The identity is exact for any
/// nonnegative P, so soft plans with approximate marginals are handled too.
double gw_loss(const CostMatrix& cx, const CostMatrix& cy, const Mat& plan);
inline double gw_loss(const CostMatrix& cx, const CostMatrix& cy, const Coupling& pi) {
  return gw_loss(cx, cy, pi.plan);
}

/// Literal quadruple sum; guarded to n*m <= 200.
double gw_loss_naive(const CostMatrix& cx, const CostMatrix& cy, const Mat& plan);

/// dL/dP for the decomposition, treating marginals as functions of P.
Mat gw_loss_grad_pi(const CostMatrix& cx, const CostMatrix& cy, const Mat& plan);

/// Same objective for a plan in index form; O(K^2) in the number of entries.
double gw_loss_sparse(const CostMatrix& cx, const CostMatrix& cy, const SparsePlan& plan);

/// Gromov-Monge objective (1/n^2) sum |Cx_ij - Cy_s(i)s(j)|^2 of a permutation.
double gw_loss_permutation(const CostMatrix& cx, const CostMatrix& cy, const Permutation& sigma);

/// (1 - lambda) * GW + lambda * sum_ij |fx_i - fy_j|^2 P_ij.
double fgw_loss(const CostMatrix& cx, const CostMatrix& cy, const Mat& plan, const Mat& feat_x,
                const Mat& feat_y, double lambda);

/// Squared Euclidean distances between rows of a and rows of b.
Mat pairwise_sq_dists(const Mat& a, const Mat& b);

/// Scaled permutation plan (1/n) * sum_i e_i e_sigma(i)'.
Mat permutation_plan(const Permutation& sigma);

}  // namespace gsgw
