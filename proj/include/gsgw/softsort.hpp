#pragma once

#include "gsgw/autodiff.hpp"
#include "gsgw/measures.hpp"

namespace gsgw {

/// Doubly stochastic relaxation of a sorting permutation.
/// matrix(rank, index) follows the hard convention P[rank][index].
struct SoftPermutation {
  Mat matrix;
  double temperature = 1.0;
};

/// Soft top-k memberships p_k(i) = sigmoid((b_k - v_i) / tau), where the
/// threshold b_k solves sum_i p_k(i) = k, and P[k][i] = p_{k+1}(i) - p_k(i)
/// with p_0 = 0 and p_n = 1. Columns telescope to exactly 1; rows sum to 1 up
/// to the threshold solve. As tau -> 0 this is the stable-sort permutation for
/// distinct values; exact ties share their slots.
SoftPermutation soft_perm(const Vec& values, double tau);

/// P_s' T P_t with the soft permutations of s and t.
Coupling soft_plan(const Vec& s, const Vec& t, double tau);

enum class AnnealShape { exponential, linear };

struct AnnealSchedule {
  double alpha_start = 1.0;
  double alpha_end = 0.03;
  int steps = 1000;
  AnnealShape shape = AnnealShape::exponential;

  void validate() const;
};

/// Temperature at `step` in [0, steps).
double anneal(const AnnealSchedule& schedule, int step);

namespace ad {

/// Tape op for soft_perm; `values` is an n x 1 column.
Var soft_perm(Var values, double tau);

/// Tape op for soft_plan; s is n x 1 and t is m x 1.
Var soft_plan(Var s, Var t, double tau);

}  // namespace ad

}  // namespace gsgw
