#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>

namespace compmap {

using Index = std::size_t;

// Storage matrices are row-major so that one row is one sample and maps
// directly onto the on-disk layout.
using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixU8 = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorF = Eigen::VectorXf;
using VectorD = Eigen::VectorXd;

inline Eigen::Index eidx(Index i) { return static_cast<Eigen::Index>(i); }

template <class A, class B>
bool same_matrix(const A& a, const B& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || (a.array() == b.array()).all());
}

}  // namespace compmap
