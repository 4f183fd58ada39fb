#include "fixtures.hpp"

#include "gsgw/rigid.hpp"
#include "gsgw/rng.hpp"

#include <cmath>
#include <numbers>

namespace gsgw::cli {

namespace {

constexpr double kPi = std::numbers::pi;

Mat gaussian(Rng& rng, std::size_t n, std::size_t d) {
  Mat m(n, d);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
  return m;
}

Eigen::Vector2d curve_point(int kind, double u, Rng& rng) {
  switch (kind) {
    case 0: {  // spiral
      const double th = 0.5 + u * 2.5 * kPi;
      const double r = th / (3.0 * kPi);
      return {r * std::cos(th), r * std::sin(th)};
    }
    case 1: {  // two moons
      const bool upper = rng.uniform() < 0.5;
      const double th = u * kPi;
      return upper ? Eigen::Vector2d(std::cos(th), std::sin(th)) : Eigen::Vector2d(1.0 - std::cos(th), 0.4 - std::sin(th));
    }
    case 2: {  // S-curve
      const double th = (u - 0.5) * 3.0 * kPi;
      return {std::sin(th), (th < 0 ? -1.0 : 1.0) * (std::cos(th) - 1.0)};
    }
    default: {  // L-shape with a longer vertical arm
      const double s = u * 3.0;
      return s < 2.0 ? Eigen::Vector2d(0.0, s) : Eigen::Vector2d(s - 2.0, 0.0);
    }
  }
}

}  // namespace

CloudPair two_point_fixture() {
  Mat x(2, 1), y(2, 1);
  x << 0.0, 1.0;
  y << 0.0, 2.0;
  return {PointCloud(x), PointCloud(y)};
}

CloudPair self_fixture(std::size_t n, std::size_t p, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud c(gaussian(rng, n, p));
  return {c, c};
}

CloudPair random_fixture(std::size_t n, std::size_t m, std::size_t p, std::size_t q, std::uint64_t seed) {
  Rng rng(seed);
  Mat x = gaussian(rng, n, p);
  Mat y = gaussian(rng, m, q);
  return {PointCloud(std::move(x)), PointCloud(std::move(y))};
}

CloudPair toy_2d3d_fixture(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const int kind = static_cast<int>(seed % 4);
  Mat x(n, 2), y(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d p = curve_point(kind, rng.uniform(), rng);
    x.row(static_cast<Eigen::Index>(i)) = p.transpose() + 0.01 * Eigen::RowVector2d(rng.normal(), rng.normal());
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d p = curve_point(kind, rng.uniform(), rng);
    y.row(static_cast<Eigen::Index>(i)) << p.x(), p.y(), 0.3 * std::sin(1.5 * p.x());
  }
  const RigidTransform g = sample_rigid(3, rng.next_u64());
  y = g.apply(y);
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index j = 0; j < 3; ++j) y(i, j) += 0.01 * rng.normal();
  return {PointCloud(std::move(x)), PointCloud(std::move(y))};
}

Mesh ellipsoid_mesh(std::size_t target_n) {
  const std::size_t seg = std::max<std::size_t>(6, static_cast<std::size_t>(std::lround(std::sqrt(2.0 * target_n))));
  const std::size_t rings = std::max<std::size_t>(3, (target_n > 2 ? target_n - 2 : 1) / seg + 1);
  const Eigen::Vector3d axes(1.0, 0.7, 0.5);
  const Eigen::Vector3d bump1 = Eigen::Vector3d(0.6, 0.5, 0.62).normalized();
  const Eigen::Vector3d bump2 = Eigen::Vector3d(-0.3, 0.8, -0.52).normalized();

  auto place = [&](const Eigen::Vector3d& u) {
    const double r = 1.0 + 0.25 * std::exp(-(u - bump1).squaredNorm() / 0.3) + 0.15 * std::exp(-(u - bump2).squaredNorm() / 0.2);
    return Eigen::Vector3d(r * u.cwiseProduct(axes));
  };

  std::vector<Eigen::Vector3d> verts;
  verts.push_back(place({0, 0, 1}));
  for (std::size_t r = 1; r < rings; ++r) {
    const double phi = kPi * static_cast<double>(r) / static_cast<double>(rings);
    for (std::size_t s = 0; s < seg; ++s) {
      const double th = 2.0 * kPi * static_cast<double>(s) / static_cast<double>(seg);
      verts.push_back(place({std::sin(phi) * std::cos(th), std::sin(phi) * std::sin(th), std::cos(phi)}));
    }
  }
  verts.push_back(place({0, 0, -1}));

  Mesh mesh;
  const std::size_t south = verts.size() - 1;
  auto at = [seg](std::size_t ring, std::size_t s) { return 1 + (ring - 1) * seg + s % seg; };
  for (std::size_t s = 0; s < seg; ++s) mesh.faces.push_back({0, at(1, s), at(1, s + 1)});
  for (std::size_t r = 1; r + 1 < rings; ++r)
    for (std::size_t s = 0; s < seg; ++s) {
      mesh.faces.push_back({at(r, s), at(r + 1, s), at(r + 1, s + 1)});
      mesh.faces.push_back({at(r, s), at(r + 1, s + 1), at(r, s + 1)});
    }
  for (std::size_t s = 0; s < seg; ++s) mesh.faces.push_back({south, at(rings - 1, s + 1), at(rings - 1, s)});

  Mat v(verts.size(), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  mesh.vertices = PointCloud(std::move(v));
  return mesh;
}

std::vector<PointCloud> toy_sequence(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PointCloud> out;
  for (int k = 0; k < 3; ++k) {
    const double twist = 0.5 * k;
    Mat c(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
      const double th = 2.0 * kPi * rng.uniform();
      const double w = 0.2 * (rng.uniform() - 0.5) * k;
      c.row(static_cast<Eigen::Index>(i)) << (1.0 + w * std::cos(twist * th)) * std::cos(th),
          (0.6 + 0.2 * k) * (1.0 + w * std::cos(twist * th)) * std::sin(th), w * std::sin(twist * th) + 0.3 * k * std::sin(2 * th);
    }
    out.emplace_back(std::move(c));
  }
  return out;
}

}  // namespace gsgw::cli
