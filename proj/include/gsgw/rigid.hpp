#pragma once

#include "gsgw/autodiff.hpp"
#include "gsgw/linalg.hpp"

#include <cstdint>

namespace gsgw {

/// x -> R x + t acting on row points.
struct RigidTransform {
  Mat rotation;
  Vec translation;

  std::size_t dim() const { return static_cast<std::size_t>(rotation.rows()); }
  Mat apply(const Mat& points) const;
  Mat apply_inverse(const Mat& points) const;
  RigidTransform inverse() const;
  double orthogonality_error() const;

  static RigidTransform identity(std::size_t d);
};

/// Haar-distributed rotation from a QR-orthonormalized Gaussian matrix with the
/// determinant forced to +1 unless reflections are allowed; translation ~ N(0, I).
RigidTransform sample_rigid(std::size_t d, std::uint64_t seed, bool allow_reflection = false);

namespace ad {
Var apply_rigid(Var points, const RigidTransform& g);
Var apply_rigid_inverse(Var points, const RigidTransform& g);
}  // namespace ad

}  // namespace gsgw
