#pragma once

#include <unordered_map>

#include "geoxray/tensor_fields.hpp"
#include "geoxray/xray.hpp"

namespace geoxray {

// Sparse matrix of the grid first-order linearization operator: rows are
// weighted-field dofs (node, component k, pair p), columns tensor dofs.
template <int D>
Eigen::SparseMatrix<double> l_operator_matrix(const TensorCalculus<D>& calc) {
  constexpr int S = sym_dim(D);
  const auto& grid = calc.grid();
  const int nc = grid.num_nodes();
  auto pairs = sym_pairs<D>();
  std::vector<Eigen::Triplet<double>> trip;

  for (int node = 0; node < nc; ++node) {
    const MetricJet<D>& mj = calc.jet(node);
    ChristoffelJet<D> cj = calc.metric().christoffel_from(mj);
    // assemble row coefficients via the stencil structure
    for (int k = 0; k < D; ++k)
      for (int p = 0; p < S; ++p) {
        auto [i, j] = pairs[p];
        int row = wgt_dof<D>(node, k, p);
        // derivative part: 1/2 g^{lk} (d_i f_jl + d_j f_il - d_l f_ij)
        for (int l = 0; l < D; ++l) {
          double glk = mj.ginv(l, k);
          if (glk == 0.0) continue;
          const auto& sti = grid.free_deriv(node, i);
          for (int e = 0; e < sti.cnt; ++e) {
            int q = sym_index<D>(j, l);
            trip.emplace_back(row, ten_dof<D>(sti.e[e].node, q), 0.5 * glk * sti.e[e].w);
          }
          const auto& stj = grid.free_deriv(node, j);
          for (int e = 0; e < stj.cnt; ++e) {
            int q = sym_index<D>(i, l);
            trip.emplace_back(row, ten_dof<D>(stj.e[e].node, q), 0.5 * glk * stj.e[e].w);
          }
          const auto& stl = grid.free_deriv(node, l);
          for (int e = 0; e < stl.cnt; ++e) {
            int q = sym_index<D>(i, j);
            trip.emplace_back(row, ten_dof<D>(stl.e[e].node, q), -0.5 * glk * stl.e[e].w);
          }
        }
        // zero-order part: - g^{lk} Gamma^m_ij f_ml
        for (int l = 0; l < D; ++l)
          for (int mdx = 0; mdx < D; ++mdx) {
            double c = -mj.ginv(l, k) * cj.gamma[mdx](i, j);
            if (c != 0.0) trip.emplace_back(row, ten_dof<D>(node, sym_index<D>(mdx, l)), c);
          }
      }
  }
  Eigen::SparseMatrix<double> L(nc * D * S, nc * S);
  L.setFromTriplets(trip.begin(), trip.end());
  L.makeCompressed();
  return L;
}

// Pointwise evaluation of the normal operator N = (iota L)^+ M (iota L) on a
// grid tensor field, with the fiber-kernel form of M and the discrete
// weighted adjoint of the grid L. Fiber evaluations of M are cached per
// center node so localized pairings stay affordable.
template <int D> class NormalNEvaluator {
 public:
  static constexpr int S = sym_dim(D);

  NormalNEvaluator(const TensorCalculus<D>& calc, const VecX& f, const CutoffAlpha<D>& alpha,
                   const NormalOptions& opt, double horizon)
      : calc_(&calc),
        alpha_(&alpha),
        opt_(opt),
        horizon_(horizon),
        L_(l_operator_matrix<D>(calc)) {
    lf_ = VecX::Zero(L_.rows());
    if (f.size() != L_.cols()) throw std::invalid_argument("normal_n: field size mismatch");
    lf_ = L_ * f;
  }

  // Interpolated lifted weighted field at an arbitrary point.
  WeightedVal<D> lifted_lf(const Vec<D>& x) const {
    WeightedVal<D> out;
    for (auto& m : out) m.setZero();
    std::array<typename GridSpec<D>::Entry, (1 << D)> st;
    int cnt = 0;
    calc_->grid().interpolation(x, st, cnt);
    auto pairs = sym_pairs<D>();
    for (int e = 0; e < cnt; ++e)
      for (int k = 0; k < D; ++k)
        for (int p = 0; p < S; ++p) {
          double v = st[e].w * lf_[wgt_dof<D>(st[e].node, k, p)];
          out[D + k](pairs[p].first, pairs[p].second) += v;
          if (pairs[p].first != pairs[p].second)
            out[D + k](pairs[p].second, pairs[p].first) += v;
        }
    return out;
  }

  // M_alpha (iota L f) at a center node, cached.
  const WeightedVal<D>& m_at(int node) {
    auto it = cache_.find(node);
    if (it != cache_.end()) return it->second;
    auto Pi = [this](const Vec<D>& y) { return lifted_lf(y); };
    WeightedVal<D> val = normal_M_fiber<D>(calc_->metric(), Pi, calc_->grid().coord(node), opt_,
                                           horizon_, alpha_);
    return cache_.emplace(node, val).first->second;
  }

  // (N f)(x) at a center node: weighted adjoint row of L applied to the
  // cached M values.
  Mat<D> value(int node) {
    const auto& grid = calc_->grid();
    Eigen::Matrix<double, sym_dim(D), 1> acc = Eigen::Matrix<double, sym_dim(D), 1>::Zero();
    auto pairs = sym_pairs<D>();
    // column-major storage gives the reverse stencil directly per column
    for (int p = 0; p < S; ++p) {
      int col = ten_dof<D>(node, p);
      for (typename Eigen::SparseMatrix<double>::InnerIterator it(L_, col); it; ++it) {
        int lrow = (int)it.row();
        int ynode = lrow / (D * S);
        int rem = lrow % (D * S);
        int k = rem / S;
        int q = rem % S;
        const WeightedVal<D>& Q = m_at(ynode);
        const MetricJet<D>& mj = calc_->jet(ynode);
        double w = grid.cell_measure(ynode) * mj.sqrt_det;
        // weighted pairing of the (D+k) component with the packed index q
        Mat<D> weighted = mj.ginv * Q[D + k] * mj.ginv;
        double mult = (pairs[q].first == pairs[q].second) ? 1.0 : 2.0;
        acc[p] += it.value() * w * mult * weighted(pairs[q].first, pairs[q].second);
      }
    }
    // apply the inverse tensor mass block at the target node
    const MetricJet<D>& mj0 = calc_->jet(node);
    double w0 = grid.cell_measure(node) * mj0.sqrt_det;
    Eigen::Matrix<double, S, S> Gf = Eigen::Matrix<double, S, S>::Zero();
    {
      auto prs = sym_pairs<D>();
      for (int p = 0; p < S; ++p)
        for (int q = 0; q < S; ++q) {
          auto [i, j] = prs[p];
          auto [k, l] = prs[q];
          double mp = (i == j) ? 1.0 : 2.0, mq = (k == l) ? 1.0 : 2.0;
          Gf(p, q) = 0.5 * mp * mq *
                     (mj0.ginv(i, k) * mj0.ginv(j, l) + mj0.ginv(i, l) * mj0.ginv(j, k));
        }
    }
    Eigen::Matrix<double, S, 1> packed = (w0 * Gf).ldlt().solve(acc);
    return sym_unpack<D>(packed);
  }

 private:
  const TensorCalculus<D>* calc_;
  const CutoffAlpha<D>* alpha_;
  NormalOptions opt_;
  double horizon_;
  Eigen::SparseMatrix<double> L_;
  VecX lf_;
  std::unordered_map<int, WeightedVal<D>> cache_;
};

}  // namespace geoxray
