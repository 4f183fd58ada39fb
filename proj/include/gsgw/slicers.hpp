#pragma once

#include "gsgw/autodiff.hpp"
#include "gsgw/measures.hpp"
#include "gsgw/rigid.hpp"

#include <cstdint>
#include <optional>
#include <utility>

namespace gsgw {

struct MlpSpec {
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  std::size_t hidden_width = 64;
  std::size_t depth = 3;
  ad::Activation activation = ad::Activation::gelu;
  std::size_t rff_features = 0;
  double rff_bandwidth = 1.0;

  void validate() const;
  /// Width of the first affine layer's input: raw input plus RFF features.
  std::size_t front_dim() const { return in_dim + rff_features; }
  std::size_t param_count() const;
};

/// Frozen random Fourier features sqrt(2/R) cos(x W + b).
struct RffFeatures {
  Mat frequencies;  // in_dim x R
  Mat phases;       // 1 x R
};

enum class SlicerKind { nonlinear, linear };
/// dependent: one slicer f shared through the lifting h. independent: separate
/// slicers on each space with no coupling between them.
enum class SlicerRelation { dependent, independent };

/// (f, h) pair. For the independent relation, `h_params` holds the X-side
/// slicer f_X : R^p -> R instead of a lifting.
///
/// Nonlinear dependent h_params layout: [A (p x q), c (q), MLP residual], so
/// h(x) = x A + c + mlp(x). Linear slicers store raw directions and are
/// normalized to the unit sphere on evaluation.
struct SlicerPair {
  SlicerKind kind = SlicerKind::nonlinear;
  SlicerRelation relation = SlicerRelation::dependent;
  std::size_t p = 0;
  std::size_t q = 0;
  MlpSpec f_spec;
  MlpSpec h_spec;
  Vec f_params;
  Vec h_params;
  RffFeatures f_rff;
  RffFeatures h_rff;

  /// Construction-level rigid frames: inputs arrive as g_X X and g_Y Y and are
  /// pulled back before evaluation, so values match the untransformed pair.
  std::optional<RigidTransform> frame_x;
  std::optional<RigidTransform> frame_y;

  std::size_t lifting_linear_size() const { return p * q + q; }
};

/// Builds an MLP spec with out_dim/in_dim filled in for the given role.
MlpSpec slicer_spec(std::size_t q, const MlpSpec& base);
MlpSpec lifting_spec(std::size_t p, std::size_t q, const MlpSpec& base);

SlicerPair init_slicer_pair(std::size_t p, std::size_t q, const MlpSpec& spec_f, const MlpSpec& spec_h,
                            std::uint64_t seed, SlicerRelation relation = SlicerRelation::dependent);

/// f a unit linear functional on R^q; h a linear map initialized to the
/// zero-padding embedding. Independent: f_X, f_Y drawn on S^{p-1}, S^{q-1}.
SlicerPair linear_slicer_pair(std::size_t p, std::size_t q, std::uint64_t seed,
                              SlicerRelation relation = SlicerRelation::dependent);

/// Same pair, evaluated on (g_X X, g_Y Y).
SlicerPair compose_rigid(const SlicerPair& pair, const RigidTransform& gx, const RigidTransform& gy);

/// Replaces the linear part A of a nonlinear dependent lifting (p x q).
void set_lifting_linear(SlicerPair& pair, const Mat& a);

/// s = f(h(X)) and t = f(Y) on the tape given parameter nodes (columns).
std::pair<ad::Var, ad::Var> pushforward(const SlicerPair& pair, ad::Var f_theta, ad::Var h_theta, const Mat& x,
                                        const Mat& y);

struct PushforwardVars {
  ad::Var s;
  ad::Var t;
  ad::Var f_theta;
  ad::Var h_theta;
};

/// Registers the pair's parameters as leaves and evaluates both clouds.
PushforwardVars pushforward_values(const SlicerPair& pair, const PointCloud& x, const PointCloud& y, ad::Tape& tape);

/// Plain evaluation without keeping a tape.
std::pair<Vec, Vec> evaluate_values(const SlicerPair& pair, const Mat& x, const Mat& y);

namespace ad {
/// Generic MLP on the tape, reading weights from `theta` starting at `offset`.
Var mlp(Var input, Var theta, std::size_t offset, const MlpSpec& spec, const RffFeatures& rff);
}  // namespace ad

/// Fan-in uniform initialization; if `zero_last` the final layer starts at 0.
Vec init_mlp_params(const MlpSpec& spec, class Rng& rng, bool zero_last);
RffFeatures init_rff(const MlpSpec& spec, class Rng& rng);

}  // namespace gsgw
