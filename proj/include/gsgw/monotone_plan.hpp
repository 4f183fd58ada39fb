#pragma once

#include "gsgw/measures.hpp"

#include <span>
#include <vector>

namespace gsgw {

/// order[rank] = index of the rank-th smallest value; ties keep index order.
struct SortResult {
  Permutation order;

  std::size_t size() const { return order.size(); }
  /// rank_of()[index] = rank; the inverse of order.
  Permutation rank_of() const;
  /// Dense 0/1 matrix with P[rank][index] = 1.
  Mat perm_matrix() const;
};

SortResult stable_argsort(std::span<const double> values);
inline SortResult stable_argsort(const Vec& values) {
  return stable_argsort(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())));
}

/// Interval-overlap staircase between the uniform n- and m-grids on [0, 1].
struct MonotoneInterp {
  Mat matrix;
};

/// Entries are integer overlaps in units of 1/(n m), converted once, so the
/// marginals are uniform to rounding of a handful of additions.
MonotoneInterp monotone_interp_matrix(std::size_t n, std::size_t m);

/// The n + m - gcd(n, m) nonzeros of the staircase, in rank coordinates,
/// ordered by (row, column).
SparsePlan monotone_interp_entries(std::size_t n, std::size_t m);

/// Hard monotone plan P_s' T P_t between the sort orders of s and t.
Coupling hard_plan(std::span<const double> s, std::span<const double> t);
inline Coupling hard_plan(const Vec& s, const Vec& t) {
  return hard_plan(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())),
                   std::span<const double>(t.data(), static_cast<std::size_t>(t.size())));
}

/// Same plan in index form. Costs two sorts plus a linear merge.
SparsePlan hard_plan_sparse(std::span<const double> s, std::span<const double> t);
SparsePlan hard_plan_sparse(const SortResult& s_order, const SortResult& t_order);

/// Piecewise-linear map through (nodes[k], values[k]), clamped outside the
/// node range.
struct PiecewiseLinear {
  std::vector<double> nodes;
  std::vector<double> values;

  double operator()(double x) const;
};

/// Builds xi with xi(x_1) < ... < xi(x_n) and xi(y_sigma(1)) < ... < xi(y_sigma(n)),
/// so the monotone plan between xi(x) and xi(y) matches x_i with y_sigma(i).
/// The merged node set {x_i} U {y_j} must be pairwise distinct.
PiecewiseLinear construct_xi(std::span<const double> x, const Permutation& sigma, std::span<const double> y);

/// Permutation read off a scaled-permutation plan (argmax per row).
Permutation plan_permutation(const Mat& plan);

}  // namespace gsgw
