#include "gsgw/monotone_plan.hpp"

#include "gsgw/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gsgw {

Permutation SortResult::rank_of() const {
  Permutation rank(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
  return rank;
}

Mat SortResult::perm_matrix() const {
  const auto n = static_cast<Eigen::Index>(order.size());
  Mat p = Mat::Zero(n, n);
  for (Eigen::Index r = 0; r < n; ++r) p(r, static_cast<Eigen::Index>(order[static_cast<std::size_t>(r)])) = 1.0;
  return p;
}

SortResult stable_argsort(std::span<const double> values) {
  for (double v : values) require(!std::isnan(v), ErrorKind::InvalidInput, "cannot sort NaN values");
  SortResult result;
  result.order.resize(values.size());
  std::iota(result.order.begin(), result.order.end(), std::size_t{0});
  std::stable_sort(result.order.begin(), result.order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  return result;
}

SparsePlan monotone_interp_entries(std::size_t n, std::size_t m) {
  require(n >= 1 && m >= 1, ErrorKind::InvalidInput, "monotone interpolation needs n, m >= 1");
  // Row i covers [i m, (i+1) m) and column j covers [j n, (j+1) n) in units of 1/(n m).
  const double unit = 1.0 / (static_cast<double>(n) * static_cast<double>(m));
  SparsePlan entries;
  entries.reserve(n + m);
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < n && j < m) {
    const std::size_t lo = std::max(i * m, j * n);
    const std::size_t hi = std::min((i + 1) * m, (j + 1) * n);
    if (hi > lo) entries.push_back({i, j, static_cast<double>(hi - lo) * unit});
    if ((i + 1) * m < (j + 1) * n) {
      ++i;
    } else if ((i + 1) * m > (j + 1) * n) {
      ++j;
    } else {
      ++i;
      ++j;
    }
  }
  return entries;
}

MonotoneInterp monotone_interp_matrix(std::size_t n, std::size_t m) {
  return {densify(monotone_interp_entries(n, m), n, m)};
}

SparsePlan hard_plan_sparse(const SortResult& s_order, const SortResult& t_order) {
  SparsePlan plan = monotone_interp_entries(s_order.size(), t_order.size());
  for (auto& e : plan) {
    e.i = s_order.order[e.i];
    e.j = t_order.order[e.j];
  }
  return plan;
}

SparsePlan hard_plan_sparse(std::span<const double> s, std::span<const double> t) {
  for (double v : s) require(std::isfinite(v), ErrorKind::InvalidInput, "non-finite push-forward value");
  for (double v : t) require(std::isfinite(v), ErrorKind::InvalidInput, "non-finite push-forward value");
  return hard_plan_sparse(stable_argsort(s), stable_argsort(t));
}

Coupling hard_plan(std::span<const double> s, std::span<const double> t) {
  return Coupling::from_plan(densify(hard_plan_sparse(s, t), s.size(), t.size()));
}

double PiecewiseLinear::operator()(double x) const {
  if (nodes.empty()) return 0.0;
  if (x <= nodes.front()) return values.front();
  if (x >= nodes.back()) return values.back();
  const auto it = std::upper_bound(nodes.begin(), nodes.end(), x);
  const std::size_t k = static_cast<std::size_t>(it - nodes.begin());
  const double x0 = nodes[k - 1];
  const double x1 = nodes[k];
  const double w = (x - x0) / (x1 - x0);
  return (1.0 - w) * values[k - 1] + w * values[k];
}

PiecewiseLinear construct_xi(std::span<const double> x, const Permutation& sigma, std::span<const double> y) {
  const std::size_t n = x.size();
  require(y.size() == n && sigma.size() == n, ErrorKind::InvalidInput, "construct_xi needs n = m");
  std::vector<bool> seen(n, false);
  for (std::size_t v : sigma) {
    require(v < n && !seen[v], ErrorKind::InvalidInput, "sigma is not a bijection");
    seen[v] = true;
  }
  // xi(x_i) = i and xi(y_sigma(i)) = i; the two chains only need to be
  // increasing separately, so equal targets across chains are harmless.
  std::vector<std::pair<double, double>> knots;
  knots.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    require(std::isfinite(x[i]) && std::isfinite(y[i]), ErrorKind::InvalidInput, "non-finite node");
    knots.emplace_back(x[i], static_cast<double>(i));
    knots.emplace_back(y[sigma[i]], static_cast<double>(i));
  }
  std::sort(knots.begin(), knots.end());
  PiecewiseLinear xi;
  for (const auto& [node, value] : knots) {
    if (!xi.nodes.empty() && xi.nodes.back() == node) {
      // A shared node is only consistent when both chains ask for the same value.
      require(xi.values.back() == value, ErrorKind::DegenerateInput,
              "interpolation nodes must be pairwise distinct; perturb the inputs");
      continue;
    }
    xi.nodes.push_back(node);
    xi.values.push_back(value);
  }
  return xi;
}

Permutation plan_permutation(const Mat& plan) {
  Permutation sigma(static_cast<std::size_t>(plan.rows()));
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    Eigen::Index j = 0;
    plan.row(i).maxCoeff(&j);
    sigma[static_cast<std::size_t>(i)] = static_cast<std::size_t>(j);
  }
  return sigma;
}

}  // namespace gsgw
