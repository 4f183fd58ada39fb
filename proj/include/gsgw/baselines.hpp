#pragma once

#include "gsgw/measures.hpp"

#include <cstdint>
#include <vector>

namespace gsgw {

struct BruteForceResult {
  Permutation best_perm;
  double best_loss = 0.0;
  std::size_t evaluated = 0;
};

/// Exact Gromov-Monge minimizer by enumerating S_n; n = m <= 8.
BruteForceResult brute_force_gw(const CostMatrix& cx, const CostMatrix& cy);

struct Oracle1d {
  Permutation sigma;
  double loss = 0.0;
};

/// Squared-Euclidean cost matrix of 1-D samples.
CostMatrix cost_1d(const Vec& x);

/// Brute-force 1-D GW with squared Euclidean costs; n <= 8.
Oracle1d gw_1d_oracle(const Vec& x, const Vec& y);

/// Losses of the monotone and anti-monotone arrangements of 1-D samples.
struct MonotoneLosses {
  double monotone = 0.0;
  double anti_monotone = 0.0;
};
MonotoneLosses monotone_1d_losses(const Vec& x, const Vec& y);

/// Stored n = 4 regression instance for the monotone-suboptimality check: the
/// best candidate of a seeded hill-climb on min(monotone, anti) - best other
/// permutation. With uniform weights no n = 4 instance beats both monotone
/// arrangements (exhaustive grids agree), so on this instance the margin is 0.
struct WitnessInstance {
  Vec x;
  Vec y;
};
WitnessInstance monotone_suboptimality_witness();

/// Optimal assignment for a square cost matrix; result[i] is row i's column.
Permutation hungarian(const Mat& cost);

struct IterativeResult {
  Coupling coupling;
  /// Loss before the first update and after every outer iteration.
  std::vector<double> loss_trace;
  int iterations = 0;
};

/// Entropic GW: each outer iteration solves an entropic OT problem against the
/// current gradient in the log domain, then takes an exact line-search step
/// toward it, so the loss never increases. Starts from a seeded perturbation of
/// the product coupling (the product itself is stationary on symmetric inputs).
IterativeResult sinkhorn_gw(const CostMatrix& cx, const CostMatrix& cy, const Vec& a, const Vec& b, double epsilon,
                            int outer_iters, int inner_iters, std::uint64_t seed = 0);

/// Epsilon presets.
inline constexpr double kSinkhornEpsilons[3] = {0.05, 0.5, 1.0};

/// Frank-Wolfe with a Hungarian linear minimization oracle and closed-form line
/// search; n = m with uniform weights. Starts from the product coupling.
IterativeResult frank_wolfe_gw(const CostMatrix& cx, const CostMatrix& cy, int iters);

enum class SgwMode { shared, independent, maxmin };

struct SgwConfig {
  int num_directions = 500;
  SgwMode mode = SgwMode::shared;
  std::uint64_t seed = 0;
  int maxmin_iters = 100;
  int maxmin_restarts = 10;
};

struct SgwResult {
  double value = 0.0;
  /// maxmin: symmetrized value reached from each restart.
  std::vector<double> restart_values;
};

/// Sliced GW surrogates on uniform measures. Projected 1-D spaces use
/// squared Euclidean costs and the monotone coupling of the projections.
SgwResult sgw_detailed(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const SgwConfig& cfg);
inline double sgw(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const SgwConfig& cfg) {
  return sgw_detailed(mu, nu, cfg).value;
}

/// 1-D GW loss of a sparse plan between projected values with squared costs.
double gw_loss_1d(const Vec& s, const Vec& t, const SparsePlan& plan);

const char* to_string(SgwMode mode);

}  // namespace gsgw
