#pragma once

#include <Eigen/Dense>

namespace mgnet {

using Index = Eigen::Index;

// Batch-major dense storage: one row per sample, one column per feature.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// rho x 4 rows of (cx, cy, w, h).
using BoxSequence = Eigen::Matrix<double, Eigen::Dynamic, 4>;

}  // namespace mgnet
