#include "gsgw/solver.hpp"

#include "gsgw/errors.hpp"
#include "gsgw/monotone_plan.hpp"
#include "gsgw/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace gsgw {

double warmup_lr(double lr, int step, int warmup_steps) {
  if (warmup_steps <= 0) return lr;
  return lr * std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(warmup_steps));
}

double adam_step(Vec& params, const Vec& grads, AdamState& state, double lr_t, double clip, const AdamConfig& cfg) {
  require(params.size() == grads.size(), ErrorKind::ShapeError, "parameter and gradient sizes differ");
  require(grads.allFinite(), ErrorKind::NumericError, "non-finite gradient");
  if (state.m.size() != params.size()) {
    state.m = Vec::Zero(params.size());
    state.v = Vec::Zero(params.size());
    state.step = 0;
  }
  const double norm = grads.norm();
  const double factor = (clip > 0.0 && norm > clip) ? clip / norm : 1.0;
  ++state.step;
  if (cfg.kind == OptimizerKind::adamw && cfg.weight_decay > 0.0) params *= 1.0 - lr_t * cfg.weight_decay;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (Eigen::Index k = 0; k < params.size(); ++k) {
    const double g = grads(k) * factor;
    state.m(k) = cfg.beta1 * state.m(k) + (1.0 - cfg.beta1) * g;
    state.v(k) = cfg.beta2 * state.v(k) + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m(k) / bc1;
    const double vhat = state.v(k) / bc2;
    params(k) -= lr_t * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  return norm;
}

void SolverConfig::validate() const {
  require(steps >= 1, ErrorKind::ConfigError, "solver needs at least one step");
  require(lr > 0.0 && std::isfinite(lr), ErrorKind::ConfigError, "learning rate must be positive");
  require(weight_decay >= 0.0, ErrorKind::ConfigError, "weight decay must be nonnegative");
  require(warmup_steps >= 0 && warmup_steps <= steps, ErrorKind::ConfigError, "warmup_steps must lie in [0, steps]");
  require(grad_clip > 0.0, ErrorKind::ConfigError, "grad_clip must be positive");
  require(restarts >= 1, ErrorKind::ConfigError, "restarts must be >= 1");
  AnnealSchedule a = anneal;
  a.steps = steps;
  a.validate();
  f_spec.validate();
  h_spec.validate();
}

namespace {

MlpSpec scaled_spec(std::size_t width, std::size_t depth, std::size_t rff) {
  MlpSpec s;
  s.hidden_width = width;
  s.depth = depth;
  s.activation = ad::Activation::gelu;
  s.rff_features = rff;
  s.rff_bandwidth = 1.0;
  return s;
}

}  // namespace

SolverConfig SolverConfig::matching_full() {
  SolverConfig c;
  c.steps = 1500;
  c.lr = 1e-4;
  c.optimizer = OptimizerKind::adam;
  c.grad_clip = 1.0;
  c.restarts = 3;
  c.anneal = {1e-4, 1e-4, 1500, AnnealShape::exponential};
  c.f_spec = c.h_spec = scaled_spec(1024, 6, 128);
  return c;
}

SolverConfig SolverConfig::interpolation_full() {
  SolverConfig c;
  c.steps = 1000;
  c.lr = 3e-3;
  c.optimizer = OptimizerKind::adamw;
  c.weight_decay = 1e-4;
  c.warmup_steps = 50;
  c.grad_clip = 1.0;
  c.restarts = 3;
  c.anneal = {1.0, 0.03, 1000, AnnealShape::exponential};
  c.f_spec = c.h_spec = scaled_spec(1024, 6, 128);
  return c;
}

SolverConfig SolverConfig::matching_desk() {
  SolverConfig c = interpolation_desk();
  c.optimizer = OptimizerKind::adam;
  c.weight_decay = 0.0;
  c.restarts = 4;
  return c;
}

SolverConfig SolverConfig::interpolation_desk() {
  SolverConfig c = interpolation_full();
  c.steps = 250;
  c.warmup_steps = 12;
  c.anneal.steps = 250;
  c.f_spec = c.h_spec = scaled_spec(256, 6, 32);
  return c;
}

namespace ad {

Var gw_loss(Var plan, const CostMatrix& cx, const CostMatrix& cy) {
  const Mat& pi = plan.value();
  const double value = gsgw::gw_loss(cx, cy, pi);
  Mat grad = gw_loss_grad_pi(cx, cy, pi);
  const std::size_t ip = plan.id;
  return plan.tape->push(Mat::Constant(1, 1, value), "gw_loss", {ip},
                         [ip, grad = std::move(grad)](const Mat& g, Tape& t) { t.accumulate(ip, g(0, 0) * grad); });
}

}  // namespace ad

namespace {

double ms_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

/// Principal axes as columns, by decreasing variance.
Mat principal_axes(const Mat& points) {
  Mat centered = points.rowwise() - points.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::MatrixXd vecs = eig.eigenvectors();
  return vecs.rowwise().reverse();
}

/// Sign patterns for the PCA lifting. For p = q the orientation-preserving
/// patterns come first.
std::vector<Vec> sign_patterns(const Mat& ux, const Mat& uy_sub) {
  const auto p = ux.cols();
  std::vector<Vec> good;
  std::vector<Vec> rest;
  for (long mask = 0; mask < (1L << p); ++mask) {
    Vec signs(p);
    for (Eigen::Index k = 0; k < p; ++k) signs(k) = (mask >> k) & 1 ? -1.0 : 1.0;
    if (ux.rows() == uy_sub.rows()) {
      const Mat a = ux * signs.asDiagonal() * uy_sub.transpose();
      (a.determinant() > 0.0 ? good : rest).push_back(signs);
    } else {
      good.push_back(signs);
    }
  }
  good.insert(good.end(), rest.begin(), rest.end());
  return good;
}

}  // namespace

SlicerPair initial_pair(const Mat& x, const Mat& y, const SolverConfig& cfg, int restart) {
  const auto p = static_cast<std::size_t>(x.cols());
  const auto q = static_cast<std::size_t>(y.cols());
  const std::uint64_t seed = Rng(cfg.seed).fork(static_cast<std::uint64_t>(restart)).next_u64();
  if (cfg.kind == SlicerKind::linear) return linear_slicer_pair(p, q, seed, cfg.relation);
  SlicerPair pair = init_slicer_pair(p, q, cfg.f_spec, cfg.h_spec, seed, cfg.relation);
  if (cfg.relation == SlicerRelation::dependent && cfg.lifting_init == LiftingInit::pca && x.rows() >= 2 &&
      y.rows() >= 2) {
    const Mat ux = principal_axes(x);
    const Mat uy = principal_axes(y).leftCols(static_cast<Eigen::Index>(p));
    const std::vector<Vec> patterns = sign_patterns(ux, uy);
    const Vec& signs = patterns[static_cast<std::size_t>(restart) % patterns.size()];
    const Mat a = ux * signs.asDiagonal() * uy.transpose();
    set_lifting_linear(pair, a);
    const Vec c = y.colwise().mean().transpose() - a.transpose() * x.colwise().mean().transpose();
    pair.h_params.segment(static_cast<Eigen::Index>(p * q), static_cast<Eigen::Index>(q)) = c;
  }
  return pair;
}

double hard_loss_of(const SlicerPair& pair, const Mat& x, const Mat& y, const CostMatrix& cx, const CostMatrix& cy,
                    SparsePlan* plan) {
  const auto [s, t] = evaluate_values(pair, x, y);
  SparsePlan sparse = hard_plan_sparse(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())),
                                       std::span<const double>(t.data(), static_cast<std::size_t>(t.size())));
  const double loss = gw_loss_sparse(cx, cy, sparse);
  if (plan != nullptr) *plan = std::move(sparse);
  return loss;
}

namespace {

struct RestartOutcome {
  bool diverged = false;
  double best_hard = std::numeric_limits<double>::infinity();
  SlicerPair best_pair;
  Vec best_s;
  Vec best_t;
  SparsePlan best_sparse;
  std::vector<double> trace;
};

void consider(RestartOutcome& out, const SlicerPair& pair, const Vec& s, const Vec& t, const CostMatrix& cx,
              const CostMatrix& cy) {
  SparsePlan sparse = hard_plan_sparse(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())),
                                       std::span<const double>(t.data(), static_cast<std::size_t>(t.size())));
  const double loss = gw_loss_sparse(cx, cy, sparse);
  if (loss < out.best_hard) {
    out.best_hard = loss;
    out.best_pair = pair;
    out.best_s = s;
    out.best_t = t;
    out.best_sparse = std::move(sparse);
  }
}

RestartOutcome run_restart(const Mat& x, const Mat& y, const CostMatrix& cx, const CostMatrix& cy,
                           const SolverConfig& cfg, int restart) {
  RestartOutcome out;
  SlicerPair pair = initial_pair(x, y, cfg, restart);
  const Eigen::Index nf = pair.f_params.size();
  const Eigen::Index nh = pair.h_params.size();
  Vec theta(nf + nh);
  theta << pair.f_params, pair.h_params;
  AdamState state;
  const AdamConfig adam{cfg.optimizer, 0.9, 0.999, 1e-8, cfg.weight_decay};
  AnnealSchedule schedule = cfg.anneal;
  schedule.steps = cfg.steps;
  out.trace.reserve(static_cast<std::size_t>(cfg.steps));
  try {
    for (int step = 0; step < cfg.steps; ++step) {
      const double tau = anneal(schedule, step);
      ad::Tape tape;
      ad::Var th = tape.leaf(Mat(theta));
      auto [s, t] = pushforward(pair, ad::slice(th, 0, nf, 1), ad::slice(th, nf, nh, 1), x, y);
      pair.f_params = theta.head(nf);
      pair.h_params = theta.tail(nh);
      consider(out, pair, s.value().col(0), t.value().col(0), cx, cy);
      ad::Var loss = ad::gw_loss(ad::soft_plan(s, t, tau), cx, cy);
      out.trace.push_back(loss.scalar());
      tape.backward(loss);
      const Mat g = tape.grad(th);
      adam_step(theta, Eigen::Map<const Vec>(g.data(), g.size()), state, warmup_lr(cfg.lr, step, cfg.warmup_steps),
                cfg.grad_clip, adam);
    }
    pair.f_params = theta.head(nf);
    pair.h_params = theta.tail(nh);
    const auto [s, t] = evaluate_values(pair, x, y);
    require(s.allFinite() && t.allFinite(), ErrorKind::NumericError, "non-finite slicer values");
    consider(out, pair, s, t, cx, cy);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NumericError) throw;
    out.diverged = true;
  }
  return out;
}

}  // namespace

SolveResult solve(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cx, const CostMatrix& cy,
                  const SolverConfig& cfg) {
  const auto wall_start = std::chrono::steady_clock::now();
  cfg.validate();
  require(mu.is_uniform() && nu.is_uniform(), ErrorKind::UnsupportedMarginals,
          "the monotone plan family needs uniform weights");
  require(cx.size() == mu.size() && cy.size() == nu.size(), ErrorKind::ShapeError,
          "cost matrices must match the support sizes");

  const bool swapped = mu.support.dim() > nu.support.dim();
  const Mat& x = swapped ? nu.support.points() : mu.support.points();
  const Mat& y = swapped ? mu.support.points() : nu.support.points();
  const CostMatrix& cxx = swapped ? cy : cx;
  const CostMatrix& cyy = swapped ? cx : cy;

  SolveResult result;
  result.swapped = swapped;
  std::vector<RestartOutcome> outcomes;
  const auto train_start = std::chrono::steady_clock::now();
  for (int r = 0; r < cfg.restarts; ++r) outcomes.push_back(run_restart(x, y, cxx, cyy, cfg, r));
  result.train_ms = ms_since(train_start);

  int best = -1;
  for (int r = 0; r < cfg.restarts; ++r) {
    const RestartOutcome& o = outcomes[static_cast<std::size_t>(r)];
    result.loss_trace.insert(result.loss_trace.end(), o.trace.begin(), o.trace.end());
    const bool usable = std::isfinite(o.best_hard);
    result.restart_losses.push_back(usable ? o.best_hard : std::numeric_limits<double>::quiet_NaN());
    if (usable && (best < 0 || o.best_hard < outcomes[static_cast<std::size_t>(best)].best_hard)) best = r;
  }
  if (best < 0) fail(ErrorKind::OptimizationFailure, "all restarts diverged");

  RestartOutcome& chosen = outcomes[static_cast<std::size_t>(best)];
  const auto extract_start = std::chrono::steady_clock::now();
  result.best_restart = best;
  result.best_loss = chosen.best_hard;
  result.best_pair = chosen.best_pair;
  result.best_s = chosen.best_s;
  result.best_t = chosen.best_t;
  result.best_sparse = chosen.best_sparse;
  if (swapped)
    for (PlanEntry& e : result.best_sparse) std::swap(e.i, e.j);
  result.best_plan = Coupling::from_plan(densify(result.best_sparse, mu.size(), nu.size()));
  result.plan_extract_ms = ms_since(extract_start);
  result.wall_time_ms = ms_since(wall_start);
  return result;
}

AblationGrid ablation_grid(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cx,
                           const CostMatrix& cy, const SolverConfig& cfg) {
  AblationGrid grid;
  const SlicerKind kinds[2] = {SlicerKind::nonlinear, SlicerKind::linear};
  const SlicerRelation relations[2] = {SlicerRelation::dependent, SlicerRelation::independent};
  for (int k = 0; k < 2; ++k) {
    for (int r = 0; r < 2; ++r) {
      SolverConfig c = cfg;
      c.kind = kinds[k];
      c.relation = relations[r];
      grid.cells[static_cast<std::size_t>(k)][static_cast<std::size_t>(r)] = solve(mu, nu, cx, cy, c);
    }
  }
  return grid;
}

const char* to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "adamw"; }
const char* to_string(SlicerKind k) { return k == SlicerKind::nonlinear ? "nonlinear" : "linear"; }
const char* to_string(SlicerRelation r) { return r == SlicerRelation::dependent ? "dependent" : "independent"; }

}  // namespace gsgw
