#include "gsgw/rigid.hpp"

#include "gsgw/errors.hpp"
#include "gsgw/rng.hpp"

#include <Eigen/QR>

namespace gsgw {

Mat RigidTransform::apply(const Mat& points) const {
  require(points.cols() == rotation.rows(), ErrorKind::ShapeError, "rigid transform dimension mismatch");
  Mat out = points * rotation.transpose();
  out.rowwise() += translation.transpose();
  return out;
}

Mat RigidTransform::apply_inverse(const Mat& points) const {
  require(points.cols() == rotation.rows(), ErrorKind::ShapeError, "rigid transform dimension mismatch");
  Mat shifted = points;
  shifted.rowwise() -= translation.transpose();
  return shifted * rotation;
}

RigidTransform RigidTransform::inverse() const {
  return {rotation.transpose(), -(rotation.transpose() * translation)};
}

double RigidTransform::orthogonality_error() const {
  const Mat gram = rotation.transpose() * rotation;
  return (gram - Mat::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

RigidTransform RigidTransform::identity(std::size_t d) {
  const auto k = static_cast<Eigen::Index>(d);
  return {Mat::Identity(k, k), Vec::Zero(k)};
}

RigidTransform sample_rigid(std::size_t d, std::uint64_t seed, bool allow_reflection) {
  require(d >= 1, ErrorKind::InvalidInput, "rigid transform needs d >= 1");
  Rng rng(seed);
  const auto k = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd g(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < k; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  if (!allow_reflection && q.determinant() < 0.0) q.col(0) *= -1.0;
  Vec t(k);
  for (Eigen::Index i = 0; i < k; ++i) t(i) = rng.normal();
  return {Mat(q), t};
}

namespace ad {

Var apply_rigid(Var points, const RigidTransform& g) {
  Tape& tape = *points.tape;
  Var rotated = matmul(points, tape.constant(g.rotation.transpose()));
  return add_bias(rotated, tape.constant(g.translation.transpose()));
}

Var apply_rigid_inverse(Var points, const RigidTransform& g) {
  Tape& tape = *points.tape;
  Var shifted = add_bias(points, tape.constant(-g.translation.transpose()));
  return matmul(shifted, tape.constant(g.rotation));
}

}  // namespace ad

}  // namespace gsgw
