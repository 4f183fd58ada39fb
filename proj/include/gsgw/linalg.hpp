#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace gsgw {

/// Dense row-major matrix used for point clouds, costs and plans.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

/// A permutation stored as an index vector: perm[i] is the image of i.
using Permutation = std::vector<std::size_t>;

inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace gsgw
