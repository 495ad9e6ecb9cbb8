// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_SRC_AUTODIFF_EIGEN_MAPS_H_
#define DENOISE_SRC_AUTODIFF_EIGEN_MAPS_H_

#include <cstddef>

#include <Eigen/Core>

namespace denoise::ad {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

inline Eigen::Map<RowMatrix> map(double* p, std::size_t rows, std::size_t cols) {
  return {p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
inline Eigen::Map<const RowMatrix> cmap(const double* p, std::size_t rows, std::size_t cols) {
  return {p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
inline Eigen::Map<RowVector> row(double* p, std::size_t n) {
  return {p, static_cast<Eigen::Index>(n)};
}
inline Eigen::Map<const RowVector> crow(const double* p, std::size_t n) {
  return {p, static_cast<Eigen::Index>(n)};
}

}  // namespace denoise::ad

#endif  // DENOISE_SRC_AUTODIFF_EIGEN_MAPS_H_
