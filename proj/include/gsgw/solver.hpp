#pragma once

#include "gsgw/measures.hpp"
#include "gsgw/slicers.hpp"
#include "gsgw/softsort.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace gsgw {

enum class OptimizerKind { adam, adamw };

struct AdamState {
  Vec m;
  Vec v;
  long step = 0;
};

struct AdamConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Linear warmup: lr * min(1, (step + 1) / warmup).
double warmup_lr(double lr, int step, int warmup_steps);

/// Global-norm clipping at `clip`, then one Adam/AdamW update. Returns the
/// pre-clipping gradient norm. Non-finite gradients raise NumericError.
double adam_step(Vec& params, const Vec& grads, AdamState& state, double lr_t, double clip, const AdamConfig& cfg);

/// How the linear part of a nonlinear dependent lifting starts.
/// identity: zero-padding embedding. pca: principal axes of X mapped onto those
/// of Y, one sign pattern per restart.
enum class LiftingInit { identity, pca };

struct SolverConfig {
  int steps = 375;
  double lr = 3e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double weight_decay = 0.0;
  int warmup_steps = 0;
  double grad_clip = 1.0;
  int restarts = 3;
  AnnealSchedule anneal{1.0, 0.03, 375, AnnealShape::exponential};
  std::uint64_t seed = 42;

  SlicerKind kind = SlicerKind::nonlinear;
  SlicerRelation relation = SlicerRelation::dependent;
  MlpSpec f_spec;
  MlpSpec h_spec;
  LiftingInit lifting_init = LiftingInit::pca;

  void validate() const;

  /// Matching settings at full scale (width 1024, depth 6, 128 RFF, Adam
  /// lr 1e-4, 1500 steps, temperature 1e-4).
  static SolverConfig matching_full();
  /// Interpolation settings at full scale (AdamW lr 3e-3, 1000 steps, 3
  /// restarts, anneal 1.0 -> 0.03).
  static SolverConfig interpolation_full();
  /// Desk-scale variants: width and steps shrunk by 4.
  static SolverConfig matching_desk();
  static SolverConfig interpolation_desk();
};

struct SolveResult {
  Coupling best_plan;
  SparsePlan best_sparse;
  double best_loss = 0.0;
  /// Soft losses, restarts concatenated in order.
  std::vector<double> loss_trace;
  /// Best hard loss seen in each restart; NaN marks a diverged restart.
  std::vector<double> restart_losses;
  int best_restart = 0;
  SlicerPair best_pair;
  Vec best_s;
  Vec best_t;
  /// Plan is n x m in the caller's orientation even when the solver swapped
  /// the measures internally (p > q).
  bool swapped = false;
  double train_ms = 0.0;
  double plan_extract_ms = 0.0;
  double wall_time_ms = 0.0;
};

/// Minimizes the GW loss of the soft monotone plan over slicer pairs and
/// returns the best hard plan found. Hard losses are tracked at every step.
SolveResult solve(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cx, const CostMatrix& cy,
                  const SolverConfig& cfg);

/// Hard plan and loss of an explicit pair (orientation as stored in the pair).
double hard_loss_of(const SlicerPair& pair, const Mat& x, const Mat& y, const CostMatrix& cx, const CostMatrix& cy,
                    SparsePlan* plan = nullptr);

/// Slicer pair at the start of restart `restart`.
SlicerPair initial_pair(const Mat& x, const Mat& y, const SolverConfig& cfg, int restart);

/// cells[kind][relation] with kind 0 = nonlinear, 1 = linear and relation
/// 0 = dependent, 1 = independent.
struct AblationGrid {
  std::array<std::array<SolveResult, 2>, 2> cells;
};
AblationGrid ablation_grid(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cx,
                           const CostMatrix& cy, const SolverConfig& cfg);

namespace ad {
/// GW loss of a plan node against fixed costs.
Var gw_loss(Var plan, const CostMatrix& cx, const CostMatrix& cy);
}  // namespace ad

const char* to_string(OptimizerKind k);
const char* to_string(SlicerKind k);
const char* to_string(SlicerRelation r);

}  // namespace gsgw
