#pragma once

#include <Eigen/Eigenvalues>

#include "geoxray/xray.hpp"

namespace geoxray {

template <int D> struct SymbolOptions {
  int n_quad = 64;     // circle nodes in d = 3; d = 2 uses the two points
  double horizon = 3.0;
  double tol = 1e-9;
};

// Gram matrix of the weighted pointwise inner product on packed symmetric
// matrices: <f, h> = f_ij g^{ii'} g^{jj'} h_{i'j'}.
template <int D> Eigen::Matrix<double, sym_dim(D), sym_dim(D)> sym_gram(const Mat<D>& ginv) {
  constexpr int S = sym_dim(D);
  auto pairs = sym_pairs<D>();
  Eigen::Matrix<double, S, S> G;
  for (int p = 0; p < S; ++p) {
    auto [i, j] = pairs[p];
    for (int q = 0; q < S; ++q) {
      auto [k, l] = pairs[q];
      double mp = (i == j) ? 1.0 : 2.0, mq = (k == l) ? 1.0 : 2.0;
      G(p, q) = 0.5 * mp * mq * (ginv(i, k) * ginv(j, l) + ginv(i, l) * ginv(j, k));
    }
  }
  return G;
}

// Principal symbol of the near-diagonal part of the normal operator I^+I at
// (x, omega), realized as a matrix on R^{2D} (x) S2 in packed coordinates:
//   sigma^{mn}_ij = pi * int_{S_xM} |alpha#|^2 (Phi^T Phi)(x, xi)
//                        xi_i xi_j xi^m xi^n  delta(omega . xi)  d mu_x(xi).
// The delta reduces to the two antipodal points of the g-unit circle in
// d = 2 and to a circle quadrature in d = 3, with the coarea factor
// 1/|G^{-1/2} omega|. Homogeneity of degree -1 in omega is applied by
// explicit rescaling, so omega need not be unit.
template <int D>
MatX symbol_M1(const Metric<D>& metric, const CutoffAlpha<D>* alpha, const Vec<D>& x,
               const Vec<D>& omega, const SymbolOptions<D>& opt = {}) {
  constexpr int S = sym_dim(D);
  const int N = 2 * D * S;
  double omega_len = omega.norm();
  if (omega_len <= 0.0) throw std::invalid_argument("symbol_M1: omega must be nonzero");
  Vec<D> om = omega / omega_len;

  FiberFrame<D> frame(metric.jet(x).g);
  Vec<D> wt = frame.g_inv_sqrt * om;  // delta argument in the u parametrization
  double wt_len = wt.norm();

  // orthonormal basis of the subsphere {u : wt . u = 0}
  Mat<D> seed = Mat<D>::Zero();
  seed.col(0) = wt.normalized();
  Eigen::HouseholderQR<Mat<D>> qr(seed);
  Mat<D> Q = qr.householderQ();

  std::vector<Vec<D>> us;
  std::vector<double> ws;
  if constexpr (D == 2) {
    us = {Q.col(1), -Q.col(1)};
    ws = {1.0, 1.0};
  } else {
    for (int a = 0; a < opt.n_quad; ++a) {
      double phi = 2.0 * M_PI * a / opt.n_quad;
      Vec<D> u = std::cos(phi) * Q.col(1) + std::sin(phi) * Q.col(2);
      us.push_back(u);
      ws.push_back(2.0 * M_PI / opt.n_quad);
    }
  }

  MatX out = MatX::Zero(N, N);
  for (size_t a = 0; a < us.size(); ++a) {
    Vec<D> xi = frame.g_inv_sqrt * us[a];
    Vec<D> xi_low = frame.g_sqrt * us[a];
    ThroughRay<D> ray(metric, x, xi, opt.horizon, opt.tol);
    double aw = 1.0;
    if (alpha) {
      double av = (*alpha)(ray.entry());
      aw = av * av;
      if (aw == 0.0) continue;
    }
    PhaseMat<D> phi = ray.phi_fwd(0.0);
    PhaseMat<D> B = phi.transpose() * phi;
    Eigen::Matrix<double, S, 1> row = sym_pack<D>((xi_low * xi_low.transpose()).eval());
    Eigen::Matrix<double, S, 1> col = quad_contraction<D>(xi);
    double w = M_PI * ws[a] * aw / wt_len / omega_len;
    for (int k = 0; k < 2 * D; ++k)
      for (int kp = 0; kp < 2 * D; ++kp) {
        double bkk = w * B(k, kp);
        if (bkk == 0.0) continue;
        for (int p = 0; p < S; ++p)
          for (int q = 0; q < S; ++q)
            out(k * S + p, kp * S + q) += bkk * row[p] * col[q];
      }
  }
  return out;
}

// Real representative of the symbol of the lifted first-order operator:
// maps packed f to the 2D-component weighted value with
//   (R f)^{k+D}_{mn} = 1/2 g^{kl} (f_{ml} omega_n + f_{nl} omega_m - f_{mn} omega_l),
// first D components zero.
template <int D>
MatX l_symbol_matrix(const Mat<D>& ginv, const Vec<D>& omega) {
  constexpr int S = sym_dim(D);
  auto pairs = sym_pairs<D>();
  MatX R = MatX::Zero(2 * D * S, S);
  for (int k = 0; k < D; ++k)
    for (int p = 0; p < S; ++p) {
      auto [m, n] = pairs[p];
      for (int q = 0; q < S; ++q) {
        auto [a, b] = pairs[q];
        double val = 0.0;
        for (int l = 0; l < D; ++l) {
          // coefficient of f_{ab} in f_{ml} omega_n + f_{nl} omega_m - f_{mn} omega_l
          auto coeff = [&](int r, int c) {
            double cc = 0.0;
            if ((r == a && c == b) || (r == b && c == a)) cc = 1.0;
            return cc;
          };
          val += 0.5 * ginv(k, l) *
                 (coeff(m, l) * omega[n] + coeff(n, l) * omega[m] - coeff(m, n) * omega[l]);
        }
        R((D + k) * S + p, q) = val;
      }
    }
  return R;
}

// Symbol of the truncated normal operator of the full transform, composed as
// R^+ sigma(M1) R with adjoints in the weighted fiber inner products, then
// symmetrized in that metric.
template <int D>
MatX symbol_N1(const Metric<D>& metric, const CutoffAlpha<D>* alpha, const Vec<D>& x,
               const Vec<D>& omega, const SymbolOptions<D>& opt = {}) {
  constexpr int S = sym_dim(D);
  MatX M1 = symbol_M1<D>(metric, alpha, x, omega, opt);
  Mat<D> ginv = metric.jet(x).ginv;
  MatX R = l_symbol_matrix<D>(ginv, omega);

  Eigen::Matrix<double, S, S> Gf = sym_gram<D>(ginv);
  MatX Gpi = MatX::Zero(2 * D * S, 2 * D * S);
  for (int k = 0; k < 2 * D; ++k) Gpi.block(k * S, k * S, S, S) = Gf;

  // N1 = Gf^{-1} R^T Gpi M1 R; symmetrize via the Gf-metric
  MatX N1 = Gf.ldlt().solve(R.transpose() * Gpi * M1 * R);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, S, S>> es(Gf);
  Eigen::Matrix<double, S, S> Ghalf = es.operatorSqrt();
  Eigen::Matrix<double, S, S> Ghalf_inv = es.operatorInverseSqrt();
  MatX B = Ghalf * N1 * Ghalf_inv;
  B = 0.5 * (B + B.transpose()).eval();
  return Ghalf_inv * B * Ghalf;
}

// ---------------------------------------------------------------------------
// Kernel and positivity analysis.

struct SymbolKernelReport {
  int kernel_dim = 0;
  int rank = 0;
  double max_principal_angle = 0.0;   // vs the expected kernel subspace
  double min_rayleigh = 0.0;          // on the complement {f : f_ij omega^i = 0}
  double asymmetry = 0.0;             // metric-symmetrized asymmetry of the input
  bool borderline = false;
};

// Principal angles between the spans of two column sets (coordinates).
inline double max_principal_angle(const MatX& A, const MatX& B) {
  Eigen::HouseholderQR<MatX> qa(A), qb(B);
  MatX Qa = qa.householderQ() * MatX::Identity(A.rows(), A.cols());
  MatX Qb = qb.householderQ() * MatX::Identity(B.rows(), B.cols());
  Eigen::JacobiSVD<MatX> svd(Qa.transpose() * Qb);
  double cmin = svd.singularValues().minCoeff();
  return std::acos(std::min(1.0, std::max(-1.0, cmin)));
}

// Analysis of sigma(N1) on S2: kernel must equal {sym(v (x) omega)} and the
// operator must be positive definite on {f : f_ij omega^i = 0} (omega raised
// with the metric).
template <int D>
SymbolKernelReport kernel_analysis(const MatX& N1, const Metric<D>& metric, const Vec<D>& x,
                                   const Vec<D>& omega, double kernel_tol = 1e-8) {
  constexpr int S = sym_dim(D);
  SymbolKernelReport rep;
  Mat<D> ginv = metric.jet(x).ginv;
  Eigen::Matrix<double, S, S> Gf = sym_gram<D>(ginv);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, S, S>> ges(Gf);
  Eigen::Matrix<double, S, S> Ghalf = ges.operatorSqrt();
  Eigen::Matrix<double, S, S> Ghalf_inv = ges.operatorInverseSqrt();

  MatX B = Ghalf * N1 * Ghalf_inv;
  rep.asymmetry = (B - B.transpose()).norm() / std::max(1e-300, B.norm());
  B = 0.5 * (B + B.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<MatX> es(B);
  VecX ev = es.eigenvalues();
  double emax = ev.cwiseAbs().maxCoeff();
  MatX kernel_coords(S, S);
  int kd = 0;
  for (int i = 0; i < S; ++i) {
    if (std::abs(ev[i]) <= kernel_tol * emax) {
      kernel_coords.col(kd++) = Ghalf_inv * es.eigenvectors().col(i);
    }
    if (std::abs(ev[i]) > 0.1 * kernel_tol * emax && std::abs(ev[i]) <= 10.0 * kernel_tol * emax)
      rep.borderline = true;
  }
  rep.kernel_dim = kd;
  rep.rank = S - kd;

  // expected kernel: sym(e_i (x) omega)
  MatX expected(S, D);
  for (int i = 0; i < D; ++i) {
    Vec<D> e = Vec<D>::Unit(i);
    expected.col(i) = sym_pack<D>(sym_outer<D>(e, omega));
  }
  if (kd > 0) rep.max_principal_angle = max_principal_angle(kernel_coords.leftCols(kd), expected);

  // complement subspace {f : f_ij omega^i_raised = 0}
  Vec<D> omega_up = ginv * omega;
  MatX J = MatX::Zero(D, S);
  auto pairs = sym_pairs<D>();
  for (int i = 0; i < D; ++i)
    for (int p = 0; p < S; ++p) {
      auto [a, b] = pairs[p];
      if (a == i) J(i, p) += omega_up[b];
      if (b == i && a != b) J(i, p) += omega_up[a];
    }
  Eigen::JacobiSVD<MatX> jsvd(J, Eigen::ComputeFullV);
  MatX Kc = jsvd.matrixV().rightCols(S - D);  // null space of J

  MatX Q = Kc.transpose() * (Gf * N1) * Kc;
  Q = 0.5 * (Q + Q.transpose()).eval();
  MatX Gc = Kc.transpose() * Gf * Kc;
  Eigen::GeneralizedSelfAdjointEigenSolver<MatX> ges2(Q, Gc);
  rep.min_rayleigh = ges2.eigenvalues().minCoeff();
  return rep;
}

// Kernel analysis of sigma(M1) per R^{2D} block: expected kernel dimension D
// per block with the same sym(v (x) omega) structure.
template <int D> struct M1KernelReport {
  int kernel_dim = 0;          // of the full matrix
  double max_principal_angle = 0.0;
  int rank = 0;
};

template <int D>
M1KernelReport<D> m1_kernel_analysis(const MatX& M1, const Metric<D>& metric, const Vec<D>& x,
                                     const Vec<D>& omega, double kernel_tol = 1e-8) {
  constexpr int S = sym_dim(D);
  const int N = 2 * D * S;
  M1KernelReport<D> rep;
  // symmetrize in the product fiber metric
  Mat<D> ginv = metric.jet(x).ginv;
  Eigen::Matrix<double, S, S> Gf = sym_gram<D>(ginv);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, S, S>> ges(Gf);
  MatX Ghalf = MatX::Zero(N, N), Ghalf_inv = MatX::Zero(N, N);
  for (int k = 0; k < 2 * D; ++k) {
    Ghalf.block(k * S, k * S, S, S) = ges.operatorSqrt();
    Ghalf_inv.block(k * S, k * S, S, S) = ges.operatorInverseSqrt();
  }
  MatX B = Ghalf * M1 * Ghalf_inv;
  B = 0.5 * (B + B.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<MatX> es(B);
  VecX ev = es.eigenvalues();
  double emax = ev.cwiseAbs().maxCoeff();
  MatX kernel_coords(N, N);
  int kd = 0;
  for (int i = 0; i < N; ++i)
    if (std::abs(ev[i]) <= kernel_tol * emax)
      kernel_coords.col(kd++) = Ghalf_inv * es.eigenvectors().col(i);
  rep.kernel_dim = kd;
  rep.rank = N - kd;

  MatX expected = MatX::Zero(N, 2 * D * D);
  int c = 0;
  for (int k = 0; k < 2 * D; ++k)
    for (int i = 0; i < D; ++i) {
      expected.block(k * S, c, S, 1) = sym_pack<D>(sym_outer<D>(Vec<D>::Unit(i), omega));
      ++c;
    }
  if (kd > 0)
    rep.max_principal_angle = max_principal_angle(kernel_coords.leftCols(kd), expected);
  return rep;
}

// Cutoff built to make alpha nonzero on the geodesics through x normal to
// omega: one bump per subsphere quadrature ray, centered at its entry.
template <int D>
CutoffAlpha<D> make_complete_alpha(const Metric<D>& metric, const Vec<D>& x, const Vec<D>& omega,
                                   double horizon, int n_rays = 8, double point_width = 0.6,
                                   double dir_width = 0.6, double tol = 1e-9) {
  FiberFrame<D> frame(metric.jet(x).g);
  Vec<D> wt = (frame.g_inv_sqrt * omega.normalized()).normalized();
  Mat<D> seed = Mat<D>::Zero();
  seed.col(0) = wt;
  Eigen::HouseholderQR<Mat<D>> qr(seed);
  Mat<D> Q = qr.householderQ();

  std::vector<AlphaBump<D>> bumps;
  std::vector<Vec<D>> us;
  if constexpr (D == 2) {
    us = {Q.col(1), -Q.col(1)};
  } else {
    for (int a = 0; a < n_rays; ++a) {
      double phi = 2.0 * M_PI * a / n_rays;
      us.push_back(std::cos(phi) * Q.col(1) + std::sin(phi) * Q.col(2));
    }
  }
  for (const auto& u : us) {
    Vec<D> xi = frame.g_inv_sqrt * u;
    ThroughRay<D> ray(metric, x, xi, horizon, tol);
    AlphaBump<D> b;
    b.point = ray.entry().x;
    b.dir = ray.entry().xi;
    b.point_width = point_width;
    b.dir_width = dir_width;
    bumps.push_back(b);
  }
  return CutoffAlpha<D>(std::move(bumps));
}

}  // namespace geoxray
