#pragma once

#include "gsgw/geometry.hpp"
#include "gsgw/measures.hpp"

#include <cstdint>
#include <vector>

namespace gsgw::cli {

struct CloudPair {
  PointCloud x;
  PointCloud y;
};

/// x = {0, 1}, y = {0, 2} on the line. Both permutations give GW = 0.5.
CloudPair two_point_fixture();
/// One Gaussian cloud matched against itself.
CloudPair self_fixture(std::size_t n, std::size_t p, std::uint64_t seed);
/// Independent Gaussian clouds.
CloudPair random_fixture(std::size_t n, std::size_t m, std::size_t p, std::size_t q, std::uint64_t seed);

/// Planar curve (spiral, moons, S-curve or L-shape, picked by the seed) and an
/// independently sampled copy bent into R^3, rigidly moved and jittered.
CloudPair toy_2d3d_fixture(std::size_t n, std::uint64_t seed);

/// Closed triangulated ellipsoid with two off-axis bumps, so that no reflection
/// or rotation maps it onto itself. Vertex count is close to `target_n`.
Mesh ellipsoid_mesh(std::size_t target_n);

/// Three clouds morphing from a flat ring to a twisted band.
std::vector<PointCloud> toy_sequence(std::size_t n, std::uint64_t seed);

}  // namespace gsgw::cli
