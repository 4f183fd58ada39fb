#include "gsgw/slicers.hpp"

#include "gsgw/errors.hpp"
#include "gsgw/rng.hpp"

#include <cmath>
#include <numbers>

namespace gsgw {

void MlpSpec::validate() const {
  require(in_dim >= 1 && out_dim >= 1, ErrorKind::InvalidInput, "MLP dimensions must be positive");
  require(depth >= 1, ErrorKind::InvalidInput, "MLP depth must be >= 1");
  require(hidden_width >= 1, ErrorKind::InvalidInput, "MLP hidden width must be >= 1");
  require(rff_features == 0 || (rff_bandwidth > 0.0 && std::isfinite(rff_bandwidth)), ErrorKind::InvalidInput,
          "RFF bandwidth must be positive");
}

std::size_t MlpSpec::param_count() const {
  std::size_t count = 0;
  std::size_t fan_in = front_dim();
  for (std::size_t layer = 0; layer < depth; ++layer) {
    const std::size_t fan_out = layer + 1 == depth ? out_dim : hidden_width;
    count += fan_in * fan_out + fan_out;
    fan_in = fan_out;
  }
  return count;
}

MlpSpec slicer_spec(std::size_t q, const MlpSpec& base) {
  MlpSpec s = base;
  s.in_dim = q;
  s.out_dim = 1;
  return s;
}

MlpSpec lifting_spec(std::size_t p, std::size_t q, const MlpSpec& base) {
  MlpSpec s = base;
  s.in_dim = p;
  s.out_dim = q;
  return s;
}

Vec init_mlp_params(const MlpSpec& spec, Rng& rng, bool zero_last) {
  spec.validate();
  Vec theta(static_cast<Eigen::Index>(spec.param_count()));
  Eigen::Index at = 0;
  std::size_t fan_in = spec.front_dim();
  for (std::size_t layer = 0; layer < spec.depth; ++layer) {
    const bool last = layer + 1 == spec.depth;
    const std::size_t fan_out = last ? spec.out_dim : spec.hidden_width;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    const std::size_t count = fan_in * fan_out + fan_out;
    for (std::size_t k = 0; k < count; ++k) theta(at++) = (last && zero_last) ? 0.0 : rng.uniform(-bound, bound);
    fan_in = fan_out;
  }
  return theta;
}

RffFeatures init_rff(const MlpSpec& spec, Rng& rng) {
  RffFeatures rff;
  const auto in = static_cast<Eigen::Index>(spec.in_dim);
  const auto r = static_cast<Eigen::Index>(spec.rff_features);
  rff.frequencies = Mat::Zero(in, r);
  rff.phases = Mat::Zero(1, r);
  for (Eigen::Index i = 0; i < in; ++i)
    for (Eigen::Index j = 0; j < r; ++j) rff.frequencies(i, j) = rng.normal(0.0, 1.0 / spec.rff_bandwidth);
  for (Eigen::Index j = 0; j < r; ++j) rff.phases(0, j) = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return rff;
}

namespace {

Vec unit_direction(std::size_t d, Rng& rng) {
  Vec u(static_cast<Eigen::Index>(d));
  do {
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.normal();
  } while (u.norm() < 1e-12);
  return u / u.norm();
}

/// Zero-padding embedding R^p -> R^q as a p x q matrix acting on rows.
Mat padding_embedding(std::size_t p, std::size_t q) {
  return Mat::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q));
}

void check_dims(std::size_t p, std::size_t q) {
  require(p >= 1 && q >= 1, ErrorKind::InvalidInput, "ambient dimensions must be positive");
  require(p <= q, ErrorKind::InvalidInput, "slicer pair needs p <= q; swap the measures and transpose the plan");
}

/// theta / ||theta|| for a column parameter node.
ad::Var normalized(ad::Var theta) {
  ad::Var norm = ad::sqrt(ad::sum(ad::square(theta)));
  return ad::scale(theta, ad::reciprocal(norm));
}

}  // namespace

SlicerPair init_slicer_pair(std::size_t p, std::size_t q, const MlpSpec& spec_f, const MlpSpec& spec_h,
                            std::uint64_t seed, SlicerRelation relation) {
  check_dims(p, q);
  Rng rng(seed);
  SlicerPair pair;
  pair.kind = SlicerKind::nonlinear;
  pair.relation = relation;
  pair.p = p;
  pair.q = q;
  pair.f_spec = slicer_spec(q, spec_f);
  pair.f_params = init_mlp_params(pair.f_spec, rng, false);
  pair.f_rff = init_rff(pair.f_spec, rng);
  if (relation == SlicerRelation::independent) {
    pair.h_spec = slicer_spec(p, spec_h);
    pair.h_params = init_mlp_params(pair.h_spec, rng, false);
    pair.h_rff = init_rff(pair.h_spec, rng);
    return pair;
  }
  pair.h_spec = lifting_spec(p, q, spec_h);
  const Vec residual = init_mlp_params(pair.h_spec, rng, true);
  pair.h_rff = init_rff(pair.h_spec, rng);
  const auto lin = static_cast<Eigen::Index>(pair.lifting_linear_size());
  pair.h_params = Vec::Zero(lin + residual.size());
  pair.h_params.tail(residual.size()) = residual;
  set_lifting_linear(pair, padding_embedding(p, q));
  return pair;
}

SlicerPair linear_slicer_pair(std::size_t p, std::size_t q, std::uint64_t seed, SlicerRelation relation) {
  check_dims(p, q);
  Rng rng(seed);
  SlicerPair pair;
  pair.kind = SlicerKind::linear;
  pair.relation = relation;
  pair.p = p;
  pair.q = q;
  pair.f_params = unit_direction(q, rng);
  if (relation == SlicerRelation::independent) {
    pair.h_params = unit_direction(p, rng);
  } else {
    const Mat a = padding_embedding(p, q);
    pair.h_params = Eigen::Map<const Vec>(a.data(), a.size());
  }
  return pair;
}

SlicerPair compose_rigid(const SlicerPair& pair, const RigidTransform& gx, const RigidTransform& gy) {
  require(gx.dim() == pair.p && gy.dim() == pair.q, ErrorKind::ShapeError, "rigid frame dimension mismatch");
  SlicerPair out = pair;
  out.frame_x = gx;
  out.frame_y = gy;
  return out;
}

void set_lifting_linear(SlicerPair& pair, const Mat& a) {
  require(pair.kind == SlicerKind::nonlinear && pair.relation == SlicerRelation::dependent, ErrorKind::InvalidInput,
          "only nonlinear dependent pairs carry a lifting with a linear part");
  require(static_cast<std::size_t>(a.rows()) == pair.p && static_cast<std::size_t>(a.cols()) == pair.q,
          ErrorKind::ShapeError, "lifting matrix must be p x q");
  pair.h_params.head(a.size()) = Eigen::Map<const Vec>(a.data(), a.size());
}

namespace ad {

Var mlp(Var input, Var theta, std::size_t offset, const MlpSpec& spec, const RffFeatures& rff) {
  Tape& tape = *input.tape;
  Var v = input;
  if (spec.rff_features > 0) {
    const double amp = std::sqrt(2.0 / static_cast<double>(spec.rff_features));
    Var proj = add_bias(matmul(input, tape.constant(rff.frequencies)), tape.constant(rff.phases));
    v = concat_cols(input, scale(cos(proj), amp));
  }
  auto at = static_cast<Eigen::Index>(offset);
  auto fan_in = static_cast<Eigen::Index>(spec.front_dim());
  for (std::size_t layer = 0; layer < spec.depth; ++layer) {
    const bool last = layer + 1 == spec.depth;
    const auto fan_out = static_cast<Eigen::Index>(last ? spec.out_dim : spec.hidden_width);
    Var w = slice(theta, at, fan_in, fan_out);
    at += fan_in * fan_out;
    Var b = slice(theta, at, 1, fan_out);
    at += fan_out;
    v = add_bias(matmul(v, w), b);
    if (!last) v = activate(v, spec.activation);
    fan_in = fan_out;
  }
  return v;
}

}  // namespace ad

std::pair<ad::Var, ad::Var> pushforward(const SlicerPair& pair, ad::Var f_theta, ad::Var h_theta, const Mat& x,
                                        const Mat& y) {
  require(static_cast<std::size_t>(x.cols()) == pair.p, ErrorKind::ShapeError, "X dimension does not match slicer");
  require(static_cast<std::size_t>(y.cols()) == pair.q, ErrorKind::ShapeError, "Y dimension does not match slicer");
  ad::Tape& tape = *f_theta.tape;
  ad::Var vx = tape.constant(x);
  ad::Var vy = tape.constant(y);
  if (pair.frame_x) vx = ad::apply_rigid_inverse(vx, *pair.frame_x);
  if (pair.frame_y) vy = ad::apply_rigid_inverse(vy, *pair.frame_y);

  const auto p = static_cast<Eigen::Index>(pair.p);
  const auto q = static_cast<Eigen::Index>(pair.q);
  if (pair.kind == SlicerKind::linear) {
    ad::Var theta_y = normalized(f_theta);
    ad::Var t = ad::matmul(vy, theta_y);
    if (pair.relation == SlicerRelation::independent) return {ad::matmul(vx, normalized(h_theta)), t};
    ad::Var lifted = ad::matmul(vx, ad::slice(h_theta, 0, p, q));
    if (pair.frame_y) lifted = ad::apply_rigid_inverse(ad::apply_rigid(lifted, *pair.frame_y), *pair.frame_y);
    return {ad::matmul(lifted, theta_y), t};
  }

  auto f = [&](ad::Var in) { return ad::mlp(in, f_theta, 0, pair.f_spec, pair.f_rff); };
  if (pair.relation == SlicerRelation::independent) return {ad::mlp(vx, h_theta, 0, pair.h_spec, pair.h_rff), f(vy)};

  ad::Var linear = ad::add_bias(ad::matmul(vx, ad::slice(h_theta, 0, p, q)), ad::slice(h_theta, p * q, 1, q));
  ad::Var lifted = ad::add(linear, ad::mlp(vx, h_theta, pair.lifting_linear_size(), pair.h_spec, pair.h_rff));
  // f o g_Y^{-1} evaluated on g_Y o h o g_X^{-1}.
  if (pair.frame_y) lifted = ad::apply_rigid_inverse(ad::apply_rigid(lifted, *pair.frame_y), *pair.frame_y);
  return {f(lifted), f(vy)};
}

PushforwardVars pushforward_values(const SlicerPair& pair, const PointCloud& x, const PointCloud& y, ad::Tape& tape) {
  ad::Var f_theta = tape.leaf(Mat(pair.f_params));
  ad::Var h_theta = tape.leaf(Mat(pair.h_params));
  auto [s, t] = pushforward(pair, f_theta, h_theta, x.points(), y.points());
  return {s, t, f_theta, h_theta};
}

std::pair<Vec, Vec> evaluate_values(const SlicerPair& pair, const Mat& x, const Mat& y) {
  ad::Tape tape;
  auto [s, t] = pushforward(pair, tape.constant(Mat(pair.f_params)), tape.constant(Mat(pair.h_params)), x, y);
  return {Vec(s.value().col(0)), Vec(t.value().col(0))};
}

}  // namespace gsgw
