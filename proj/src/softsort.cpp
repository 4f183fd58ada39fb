#include "gsgw/softsort.hpp"

#include "gsgw/errors.hpp"
#include "gsgw/monotone_plan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace gsgw {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Per-threshold memberships p_k(i) and their logistic slopes, rows k = 1..n-1.
struct SoftPermTrace {
  double tau = 1.0;
  Mat membership;
  Mat slope;
};

/// Solves sum_i sigmoid((b - v_i) / tau) = k for b with a bracketed Newton
/// iteration. The left side is strictly increasing in b.
double solve_threshold(const Vec& v, double tau, double k, double lo, double hi, double start) {
  auto eval = [&](double b, double& df) {
    double f = -k;
    df = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double p = sigmoid((b - v(i)) / tau);
      f += p;
      df += p * (1.0 - p);
    }
    return f;
  };
  double b = std::clamp(start, lo, hi);
  for (int it = 0; it < 200; ++it) {
    double df = 0.0;
    const double f = eval(b, df);
    if (f == 0.0) return b;
    if (f < 0.0) lo = b; else hi = b;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max({1.0, std::abs(lo), std::abs(hi)}))
      return b;
    double next = df > 0.0 ? b - f * tau / df : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    // Converged to round-off: Newton steps no longer move b.
    if (std::abs(next - b) <= 2.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(b))) return next;
    b = next;
  }
  return b;
}

Mat soft_perm_forward(const Vec& values, double tau, SoftPermTrace* trace) {
  require(tau > 0.0 && std::isfinite(tau), ErrorKind::InvalidInput, "soft sort temperature must be positive");
  require(values.allFinite(), ErrorKind::InvalidInput, "soft sort values must be finite");
  const Eigen::Index n = values.size();
  require(n >= 1, ErrorKind::InvalidInput, "soft sort needs at least one value");

  std::vector<double> sorted(values.data(), values.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const double margin = 40.0 * tau;
  Mat membership(std::max<Eigen::Index>(n - 1, 0), n);
  Mat slope(std::max<Eigen::Index>(n - 1, 0), n);
  double prev = sorted.front() - margin;
  for (Eigen::Index k = 1; k < n; ++k) {
    const double start = 0.5 * (sorted[static_cast<std::size_t>(k - 1)] + sorted[static_cast<std::size_t>(k)]);
    double b = solve_threshold(values, tau, static_cast<double>(k), prev, sorted.back() + margin, start);
    b = std::max(b, prev);
    prev = b;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = sigmoid((b - values(i)) / tau);
      membership(k - 1, i) = p;
      slope(k - 1, i) = p * (1.0 - p);
    }
  }

  // P[k][i] = p_{k+1}(i) - p_k(i) with p_0 = 0 and p_n = 1.
  Mat p(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double upper = k + 1 < n ? membership(k, i) : 1.0;
      const double lower = k > 0 ? membership(k - 1, i) : 0.0;
      p(k, i) = std::max(upper - lower, 0.0);
    }
  }
  if (trace != nullptr) {
    trace->tau = tau;
    trace->membership = std::move(membership);
    trace->slope = std::move(slope);
  }
  return p;
}

Vec soft_perm_backward(const SoftPermTrace& trace, const Mat& grad_out) {
  const Eigen::Index n = grad_out.cols();
  Vec dvalues = Vec::Zero(n);
  for (Eigen::Index k = 1; k < n; ++k) {
    // dL/dp_k(i): p_k enters P[k-1] with + and P[k] with -.
    const auto slope = trace.slope.row(k - 1);
    const double total = slope.sum();
    double weighted = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) weighted += (grad_out(k - 1, i) - grad_out(k, i)) * slope(i);
    // Implicit threshold: db_k / dv_l = slope_l / total.
    const double shift = total > 0.0 ? weighted / total : 0.0;
    for (Eigen::Index l = 0; l < n; ++l)
      dvalues(l) += slope(l) / trace.tau * (shift - (grad_out(k - 1, l) - grad_out(k, l)));
  }
  return dvalues;
}

}  // namespace

SoftPermutation soft_perm(const Vec& values, double tau) { return {soft_perm_forward(values, tau, nullptr), tau}; }

Coupling soft_plan(const Vec& s, const Vec& t, double tau) {
  const Mat ps = soft_perm(s, tau).matrix;
  const Mat pt = soft_perm(t, tau).matrix;
  const Mat interp = monotone_interp_matrix(static_cast<std::size_t>(s.size()), static_cast<std::size_t>(t.size())).matrix;
  return Coupling::from_plan(ps.transpose() * interp * pt);
}

void AnnealSchedule::validate() const {
  require(alpha_start > 0.0 && alpha_end > 0.0, ErrorKind::InvalidInput, "anneal endpoints must be positive");
  require(alpha_end <= alpha_start, ErrorKind::InvalidInput, "alpha_end must not exceed alpha_start");
  require(steps >= 1, ErrorKind::InvalidInput, "anneal schedule needs at least one step");
}

double anneal(const AnnealSchedule& schedule, int step) {
  schedule.validate();
  require(step >= 0 && step < schedule.steps, ErrorKind::InvalidInput, "anneal step out of range");
  if (schedule.steps == 1) return schedule.alpha_start;
  if (step == schedule.steps - 1) return schedule.alpha_end;
  const double frac = static_cast<double>(step) / static_cast<double>(schedule.steps - 1);
  if (schedule.shape == AnnealShape::linear)
    return schedule.alpha_start + frac * (schedule.alpha_end - schedule.alpha_start);
  return schedule.alpha_start * std::pow(schedule.alpha_end / schedule.alpha_start, frac);
}

namespace ad {

Var soft_perm(Var values, double tau) {
  require(values.cols() == 1, ErrorKind::ShapeError, "soft_perm expects an n x 1 column");
  auto trace = std::make_shared<SoftPermTrace>();
  const Vec v = values.value().col(0);
  Mat p = soft_perm_forward(v, tau, trace.get());
  const std::size_t iv = values.id;
  return values.tape->push(std::move(p), "soft_perm", {iv}, [iv, trace](const Mat& g, Tape& t) {
    t.accumulate(iv, Mat(soft_perm_backward(*trace, g)));
  });
}

Var soft_plan(Var s, Var t, double tau) {
  const auto n = static_cast<std::size_t>(s.rows());
  const auto m = static_cast<std::size_t>(t.rows());
  Var ps = soft_perm(s, tau);
  Var pt = soft_perm(t, tau);
  if (n == m) return scale(matmul(transpose(ps), pt), 1.0 / static_cast<double>(n));
  Var interp = s.tape->constant(monotone_interp_matrix(n, m).matrix);
  return matmul(matmul(transpose(ps), interp), pt);
}

}  // namespace ad

}  // namespace gsgw
