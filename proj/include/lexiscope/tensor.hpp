#pragma once

#include <Eigen/Dense>

namespace lexiscope {

// Activations and weights are row-major so that one row is one token /
// one output unit, matching the checkpoint layout.
template <typename S>
using MatrixT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VectorT = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Matrix = MatrixT<float>;
using Vector = VectorT<float>;
using MatrixD = MatrixT<double>;
using VectorD = VectorT<double>;

}  // namespace lexiscope
