#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

namespace geoxray {

template <int D> using Vec = Eigen::Matrix<double, D, 1>;
template <int D> using Mat = Eigen::Matrix<double, D, D>;

// Phase-space objects live in R^{2D}: (x, xi).
template <int D> using PhaseVec = Eigen::Matrix<double, 2 * D, 1>;
template <int D> using PhaseMat = Eigen::Matrix<double, 2 * D, 2 * D>;

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// Packing of symmetric DxD matrices into length D(D+1)/2 vectors,
// upper triangle in row-major order: (0,0),(0,1),...,(0,D-1),(1,1),...
constexpr int sym_dim(int d) { return d * (d + 1) / 2; }

template <int D> constexpr int sym_index(int i, int j) {
  if (i > j) std::swap(i, j);
  return i * D - i * (i - 1) / 2 + (j - i);
}

template <int D> inline std::array<std::pair<int, int>, sym_dim(D)> sym_pairs() {
  std::array<std::pair<int, int>, sym_dim(D)> out{};
  int k = 0;
  for (int i = 0; i < D; ++i)
    for (int j = i; j < D; ++j) out[k++] = {i, j};
  return out;
}

template <int D> inline Eigen::Matrix<double, sym_dim(D), 1> sym_pack(const Mat<D>& m) {
  Eigen::Matrix<double, sym_dim(D), 1> v;
  int k = 0;
  for (int i = 0; i < D; ++i)
    for (int j = i; j < D; ++j) v[k++] = m(i, j);
  return v;
}

template <int D> inline Mat<D> sym_unpack(const Eigen::Matrix<double, sym_dim(D), 1>& v) {
  Mat<D> m;
  int k = 0;
  for (int i = 0; i < D; ++i)
    for (int j = i; j < D; ++j) { m(i, j) = v[k]; m(j, i) = v[k]; ++k; }
  return m;
}

// sym(v (x) w): the symmetric product 1/2 (v_i w_j + v_j w_i).
template <int D> inline Mat<D> sym_outer(const Vec<D>& v, const Vec<D>& w) {
  return 0.5 * (v * w.transpose() + w * v.transpose());
}

template <int D> inline Mat<D> symmetrize(const Mat<D>& m) {
  return 0.5 * (m + m.transpose());
}

}  // namespace geoxray
