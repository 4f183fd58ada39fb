#include "gsgw/measures.hpp"

#include "gsgw/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gsgw {

PointCloud::PointCloud(Mat points) : points_(std::move(points)) {
  require(points_.rows() >= 1, ErrorKind::InvalidInput, "point cloud must contain at least one point");
  require(points_.cols() >= 1, ErrorKind::InvalidInput, "point cloud dimension must be positive");
  require(points_.allFinite(), ErrorKind::InvalidInput, "point cloud has a non-finite coordinate");
}

DiscreteMeasure DiscreteMeasure::uniform(PointCloud cloud) {
  const auto n = static_cast<Eigen::Index>(cloud.size());
  return DiscreteMeasure(std::move(cloud), Vec::Constant(n, 1.0 / static_cast<double>(n)));
}

DiscreteMeasure::DiscreteMeasure(PointCloud cloud, Vec w) : support(std::move(cloud)), weights(std::move(w)) {
  require(static_cast<std::size_t>(weights.size()) == support.size(), ErrorKind::ShapeError,
          "weights length differs from the number of points");
  require((weights.array() >= 0.0).all(), ErrorKind::InvalidInput, "weights must be nonnegative");
  require(std::abs(weights.sum() - 1.0) <= 1e-12, ErrorKind::InvalidInput, "weights must sum to 1");
}

bool DiscreteMeasure::is_uniform(double tol) const {
  const double u = 1.0 / static_cast<double>(weights.size());
  return ((weights.array() - u).abs() <= tol).all();
}

void CostMatrix::validate(double tol) const {
  require(entries.rows() == entries.cols(), ErrorKind::ShapeError, "cost matrix must be square");
  require(entries.allFinite(), ErrorKind::InvalidInput, "cost matrix has non-finite entries");
  const auto n = entries.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    require(std::abs(entries(i, i)) <= tol, ErrorKind::InvalidInput, "cost matrix diagonal must be zero");
    for (Eigen::Index j = i + 1; j < n; ++j) {
      require(std::abs(entries(i, j) - entries(j, i)) <= tol, ErrorKind::InvalidInput,
              "cost matrix must be symmetric");
      require(entries(i, j) >= 0.0, ErrorKind::InvalidInput, "cost matrix must be nonnegative");
    }
  }
}

Coupling Coupling::from_plan(Mat plan) {
  for (Eigen::Index k = 0; k < plan.size(); ++k) {
    double& v = plan.data()[k];
    require(v >= -1e-15, ErrorKind::InvalidInput, "coupling has a negative entry");
    if (v < 0.0) v = 0.0;
  }
  Coupling c;
  c.row_marginal = plan.rowwise().sum();
  c.col_marginal = plan.colwise().sum().transpose();
  c.plan = std::move(plan);
  return c;
}

double Coupling::marginal_error() const {
  const double r = (plan.rowwise().sum() - row_marginal).cwiseAbs().maxCoeff();
  const double c = (plan.colwise().sum().transpose() - col_marginal).cwiseAbs().maxCoeff();
  return std::max(r, c);
}

double Coupling::uniform_marginal_error() const {
  const double r = (plan.rowwise().sum().array() - 1.0 / static_cast<double>(plan.rows())).abs().maxCoeff();
  const double c = (plan.colwise().sum().array() - 1.0 / static_cast<double>(plan.cols())).abs().maxCoeff();
  return std::max(r, c);
}

Mat densify(const SparsePlan& plan, std::size_t n, std::size_t m) {
  Mat dense = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (const auto& e : plan) {
    require(e.i < n && e.j < m, ErrorKind::InvalidInput, "sparse plan index out of range");
    dense(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.j)) += e.mass;
  }
  return dense;
}

Mat pairwise_sq_dists(const Mat& a, const Mat& b) {
  require(a.cols() == b.cols(), ErrorKind::ShapeError, "pairwise distances need equal dimensions");
  Mat d(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) d(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  return d;
}

CostMatrix build_cost_matrix(const PointCloud& cloud, CostConvention convention) {
  const Mat& x = cloud.points();
  require(x.size() > 0, ErrorKind::InvalidInput, "empty point cloud");
  require(x.allFinite(), ErrorKind::InvalidInput, "non-finite coordinate");
  const auto n = x.rows();
  CostMatrix c{Mat::Zero(n, n), convention};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double sq = (x.row(i) - x.row(j)).squaredNorm();
      const double v = convention == CostConvention::squared_distance ? sq : std::sqrt(sq);
      c.entries(i, j) = v;
      c.entries(j, i) = v;
    }
  }
  return c;
}

namespace {

void check_shapes(const CostMatrix& cx, const CostMatrix& cy, const Mat& plan) {
  require(cx.entries.rows() == cx.entries.cols() && cy.entries.rows() == cy.entries.cols(), ErrorKind::ShapeError,
          "cost matrices must be square");
  require(plan.rows() == cx.entries.rows() && plan.cols() == cy.entries.rows(), ErrorKind::ShapeError,
          "plan is " + std::to_string(plan.rows()) + "x" + std::to_string(plan.cols()) + " but costs are " +
              std::to_string(cx.entries.rows()) + " and " + std::to_string(cy.entries.rows()));
}

double clip_loss(double value, double scale) {
  const double floor = -1e-10 * std::max(1.0, scale);
  if (!std::isfinite(value)) fail(ErrorKind::NumericError, "GW loss is not finite");
  if (value < floor) fail(ErrorKind::InternalError, "GW decomposition produced " + std::to_string(value));
  return std::max(value, 0.0);
}

}  // namespace

double gw_loss(const CostMatrix& cx, const CostMatrix& cy, const Mat& plan) {
  check_shapes(cx, cy, plan);
  const Vec a = plan.rowwise().sum();
  const Vec b = plan.colwise().sum().transpose();
  const Mat cx2 = cx.entries.cwiseProduct(cx.entries);
  const Mat cy2 = cy.entries.cwiseProduct(cy.entries);
  const double const_x = a.dot(cx2 * a);
  const double const_y = b.dot(cy2 * b);
  const Mat cross = cx.entries * plan * cy.entries;
  const double inner = cross.cwiseProduct(plan).sum();
  return clip_loss(const_x + const_y - 2.0 * inner, const_x + const_y);
}

double gw_loss_naive(const CostMatrix& cx, const CostMatrix& cy, const Mat& plan) {
  check_shapes(cx, cy, plan);
  const auto n = plan.rows();
  const auto m = plan.cols();
  require(n * m <= 200, ErrorKind::SizeError, "naive GW loss is limited to n*m <= 200");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index ip = 0; ip < n; ++ip)
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index jp = 0; jp < m; ++jp) {
          const double diff = cx.entries(i, ip) - cy.entries(j, jp);
          total += diff * diff * plan(i, j) * plan(ip, jp);
        }
  return total;
}

Mat gw_loss_grad_pi(const CostMatrix& cx, const CostMatrix& cy, const Mat& plan) {
  check_shapes(cx, cy, plan);
  const Vec a = plan.rowwise().sum();
  const Vec b = plan.colwise().sum().transpose();
  const Vec ux = cx.entries.cwiseProduct(cx.entries) * a;
  const Vec uy = cy.entries.cwiseProduct(cy.entries) * b;
  Mat g = -4.0 * (cx.entries * plan * cy.entries);
  g.colwise() += 2.0 * ux;
  g.rowwise() += 2.0 * uy.transpose();
  return g;
}

double gw_loss_sparse(const CostMatrix& cx, const CostMatrix& cy, const SparsePlan& plan) {
  const std::size_t n = cx.size();
  const std::size_t m = cy.size();
  Vec a = Vec::Zero(static_cast<Eigen::Index>(n));
  Vec b = Vec::Zero(static_cast<Eigen::Index>(m));
  for (const auto& e : plan) {
    require(e.i < n && e.j < m, ErrorKind::ShapeError, "sparse plan index out of range");
    a(static_cast<Eigen::Index>(e.i)) += e.mass;
    b(static_cast<Eigen::Index>(e.j)) += e.mass;
  }
  const Mat cx2 = cx.entries.cwiseProduct(cx.entries);
  const Mat cy2 = cy.entries.cwiseProduct(cy.entries);
  const double const_x = a.dot(cx2 * a);
  const double const_y = b.dot(cy2 * b);
  double inner = 0.0;
  for (const auto& e : plan) {
    const auto i = static_cast<Eigen::Index>(e.i);
    const auto j = static_cast<Eigen::Index>(e.j);
    double row = 0.0;
    // Cy is symmetric; reading row j keeps both lookups within one row.
    for (const auto& f : plan)
      row += cx.entries(i, static_cast<Eigen::Index>(f.i)) * cy.entries(j, static_cast<Eigen::Index>(f.j)) * f.mass;
    inner += row * e.mass;
  }
  return clip_loss(const_x + const_y - 2.0 * inner, const_x + const_y);
}

double gw_loss_permutation(const CostMatrix& cx, const CostMatrix& cy, const Permutation& sigma) {
  const std::size_t n = sigma.size();
  require(cx.size() == n && cy.size() == n, ErrorKind::ShapeError, "permutation size differs from costs");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto si = static_cast<Eigen::Index>(sigma[i]);
    for (std::size_t j = 0; j < n; ++j) {
      const double diff = cx.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                          cy.entries(si, static_cast<Eigen::Index>(sigma[j]));
      total += diff * diff;
    }
  }
  return total / static_cast<double>(n * n);
}

double fgw_loss(const CostMatrix& cx, const CostMatrix& cy, const Mat& plan, const Mat& feat_x, const Mat& feat_y,
                double lambda) {
  require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::InvalidInput, "lambda must lie in [0, 1]");
  require(feat_x.cols() == feat_y.cols(), ErrorKind::ShapeError, "feature dimensions differ");
  require(feat_x.rows() == plan.rows() && feat_y.rows() == plan.cols(), ErrorKind::ShapeError,
          "feature rows must match the plan");
  const double structure = gw_loss(cx, cy, plan);
  if (lambda == 0.0) return structure;
  const double feature = pairwise_sq_dists(feat_x, feat_y).cwiseProduct(plan).sum();
  return (1.0 - lambda) * structure + lambda * feature;
}

Mat permutation_plan(const Permutation& sigma) {
  const auto n = static_cast<Eigen::Index>(sigma.size());
  Mat plan = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) plan(i, static_cast<Eigen::Index>(sigma[static_cast<std::size_t>(i)])) = 1.0 / static_cast<double>(n);
  return plan;
}

}  // namespace gsgw
