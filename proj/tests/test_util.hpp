#pragma once

#include "gsgw/linalg.hpp"
#include "gsgw/measures.hpp"
#include "gsgw/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gsgw::testing {

inline Mat random_points(Rng& rng, Eigen::Index n, Eigen::Index d, double spread = 1.0) {
  Mat x(n, d);
  for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = rng.normal() * spread;
  return x;
}

inline CostMatrix random_cost(Rng& rng, Eigen::Index n, Eigen::Index d = 2,
                              CostConvention conv = CostConvention::distance) {
  return build_cost_matrix(PointCloud(random_points(rng, n, d)), conv);
}

/// Feasible coupling for uniform marginals: a random mixture of scaled permutations.
inline Mat random_coupling(Rng& rng, Eigen::Index n) {
  Mat plan = Mat::Zero(n, n);
  const int parts = 4;
  Vec w(parts);
  for (int k = 0; k < parts; ++k) w(k) = 0.1 + rng.uniform();
  w /= w.sum();
  for (int k = 0; k < parts; ++k) {
    std::vector<std::size_t> sigma(static_cast<std::size_t>(n));
    std::iota(sigma.begin(), sigma.end(), std::size_t{0});
    rng.shuffle(sigma);
    for (Eigen::Index i = 0; i < n; ++i)
      plan(i, static_cast<Eigen::Index>(sigma[static_cast<std::size_t>(i)])) += w(k) / static_cast<double>(n);
  }
  return plan;
}

/// Strictly positive matrix with uniform marginals (Sinkhorn-balanced).
inline Mat random_interior_coupling(Rng& rng, Eigen::Index n, Eigen::Index m) {
  Mat k(n, m);
  for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = 0.2 + rng.uniform();
  for (int it = 0; it < 500; ++it) {
    for (Eigen::Index r = 0; r < n; ++r) k.row(r) *= (1.0 / static_cast<double>(n)) / k.row(r).sum();
    for (Eigen::Index c = 0; c < m; ++c) k.col(c) *= (1.0 / static_cast<double>(m)) / k.col(c).sum();
  }
  return k;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / (1e-12 + std::abs(b)); }

inline Vec random_vec(Rng& rng, Eigen::Index n, double spread = 1.0) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal() * spread;
  return v;
}

/// Minimal gap between distinct sorted values.
inline double min_gap(const Vec& v) {
  std::vector<double> s(v.data(), v.data() + v.size());
  std::sort(s.begin(), s.end());
  double g = INFINITY;
  for (std::size_t i = 1; i < s.size(); ++i) g = std::min(g, s[i] - s[i - 1]);
  return g;
}

}  // namespace gsgw::testing
