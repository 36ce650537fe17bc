#pragma once

#include <functional>
#include <vector>

#include "geoxray/fields_analytic.hpp"
#include "geoxray/geodesic.hpp"
#include "geoxray/numerics.hpp"

namespace geoxray {

// Contraction functional pi -> pi_{mn} xi^m xi^n on packed coordinates.
template <int D> Eigen::Matrix<double, sym_dim(D), 1> quad_contraction(const Vec<D>& xi) {
  constexpr int S = sym_dim(D);
  auto pairs = sym_pairs<D>();
  Eigen::Matrix<double, S, 1> w;
  for (int p = 0; p < S; ++p) {
    auto [m, n] = pairs[p];
    w[p] = (m == n ? 1.0 : 2.0) * xi[m] * xi[n];
  }
  return w;
}

// A weighted tensor value: per component k a symmetric matrix Pi^k_ij.
template <int D> using WeightedVal = std::array<Mat<D>, 2 * D>;
template <int D> using WeightedValHalf = std::array<Mat<D>, D>;

// Lift: first D components zero, last D copied.
template <int D> WeightedVal<D> lift_iota(const WeightedValHalf<D>& p) {
  WeightedVal<D> out;
  for (int k = 0; k < D; ++k) out[k].setZero();
  for (int k = 0; k < D; ++k) out[D + k] = p[k];
  return out;
}

// Transport weight Phi(t) = Psi(T) Psi(t)^{-1} along a traced record.
template <int D> PhaseMat<D> weight_phi(const GeodesicRecord<D>& rec, double t) {
  if (rec.trapped) throw std::runtime_error("weight_phi: trapped record");
  return rec.psi(rec.horizon) * rec.psi(t).inverse();
}

// First-order linearization operator applied to a tensor-field jet:
//   (L f)^k_ij = 1/2 g^{lk} (d_i f_jl + d_j f_il - d_l f_ij) - g^{lk} Gamma^m_ij f_ml
template <int D>
WeightedValHalf<D> l_operator_jet(const MetricJet<D>& mj, const ChristoffelJet<D>& cj,
                                  const TensorJet<D>& fj) {
  WeightedValHalf<D> out;
  std::array<Mat<D>, D> S;  // S[l](i,j) = d_i f_jl + d_j f_il - d_l f_ij
  for (int l = 0; l < D; ++l)
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j)
        S[l](i, j) = fj.deriv[i](j, l) + fj.deriv[j](i, l) - fj.deriv[l](i, j);
  Mat<D> gf = mj.ginv * fj.value;  // (g^{lk} f_ml) as gf(k, m)... gf(k,m) = g^{kl} f_lm
  for (int k = 0; k < D; ++k) {
    out[k].setZero();
    for (int l = 0; l < D; ++l) out[k] += 0.5 * mj.ginv(l, k) * S[l];
    for (int m = 0; m < D; ++m) out[k] -= gf(k, m) * cj.gamma[m];
  }
  return out;
}

template <int D, class Field>
WeightedValHalf<D> l_operator(const Metric<D>& metric, const Field& f, const Vec<D>& x) {
  MetricJet<D> mj = metric.jet(x);
  return l_operator_jet<D>(mj, metric.christoffel_from(mj), f.jet(x));
}

// L f together with its first coordinate derivatives (for flows generated by
// perturbed connection coefficients).
template <int D>
void l_operator_jet2(const MetricJet<D>& mj, const ChristoffelJet<D>& cj, const TensorJet2<D>& fj,
                     WeightedValHalf<D>& val, std::array<WeightedValHalf<D>, D>& dval) {
  // d_m ginv = -ginv dg[m] ginv
  std::array<Mat<D>, D> dginv;
  for (int m = 0; m < D; ++m) dginv[m] = -mj.ginv * mj.dg[m] * mj.ginv;

  std::array<Mat<D>, D> S;
  std::array<std::array<Mat<D>, D>, D> dS;  // dS[m][l] = d_m S[l]
  for (int l = 0; l < D; ++l)
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j) {
        S[l](i, j) = fj.deriv[i](j, l) + fj.deriv[j](i, l) - fj.deriv[l](i, j);
        for (int m = 0; m < D; ++m)
          dS[m][l](i, j) = fj.dderiv[m][i](j, l) + fj.dderiv[m][j](i, l) - fj.dderiv[m][l](i, j);
      }

  Mat<D> gf = mj.ginv * fj.value;
  for (int k = 0; k < D; ++k) {
    val[k].setZero();
    for (int l = 0; l < D; ++l) val[k] += 0.5 * mj.ginv(l, k) * S[l];
    for (int m = 0; m < D; ++m) val[k] -= gf(k, m) * cj.gamma[m];
  }
  for (int m = 0; m < D; ++m) {
    Mat<D> dgf = dginv[m] * fj.value + mj.ginv * fj.deriv[m];
    for (int k = 0; k < D; ++k) {
      dval[m][k].setZero();
      for (int l = 0; l < D; ++l)
        dval[m][k] += 0.5 * (dginv[m](l, k) * S[l] + mj.ginv(l, k) * dS[m][l]);
      for (int n = 0; n < D; ++n)
        dval[m][k] -= dgf(k, n) * cj.gamma[n] + gf(k, n) * cj.dgamma[m][n];
    }
  }
}

// Connection Gamma(g) + eps * Gamma~, where the perturbation Gamma~^k is given
// by D independent analytic tensor fields.
template <int D> struct PerturbedConnection {
  const Metric<D>* metric;
  const std::array<BumpTensorField<D>, D>* tilde;
  double eps;

  ChristoffelJet<D> christoffel(const Vec<D>& x) const {
    ChristoffelJet<D> cj = metric->christoffel(x);
    for (int k = 0; k < D; ++k) {
      TensorJet<D> tj = (*tilde)[k].jet(x);
      cj.gamma[k] += eps * tj.value;
      for (int m = 0; m < D; ++m) cj.dgamma[m][k] += eps * tj.deriv[m];
    }
    return cj;
  }
  const Domain& domain() const { return metric->domain(); }
};

// ---------------------------------------------------------------------------
// Forward transform.

// Ray integral of Phi(s) * w(s) along a record, w^k(s) = Pi^k_ij(x(s)) xi^i xi^j.
// Pi is a functor Vec<D> -> WeightedVal<D>. Midpoint rule over [0, min(L, T)];
// the integrand vanishes smoothly at both ends for fields supported in M-hat.
template <int D, class PiFn>
PhaseVec<D> transform_I(const GeodesicRecord<D>& rec, const PiFn& Pi, int quad_n = 512) {
  if (rec.trapped) throw std::runtime_error("transform_I: trapped record");
  double s_end = std::min(rec.exit_time, rec.horizon);
  PhaseVec<D> acc = PhaseVec<D>::Zero();
  double h = s_end / quad_n;
  for (int q = 0; q < quad_n; ++q) {
    double t = (q + 0.5) * h;
    PhasePoint<D> p;
    PhaseMat<D> psi;
    rec.state(t, p, psi);
    WeightedVal<D> P = Pi(p.x);
    PhaseVec<D> w;
    for (int k = 0; k < 2 * D; ++k) w[k] = p.xi.dot(P[k] * p.xi);
    acc += psi.partialPivLu().solve(w);
  }
  return h * (rec.psi(rec.horizon) * acc);
}

// The linearization of the flow map in the metric: X f = dH^T/dg . f.
// Note the sign: a metric perturbation enters the generator through
// xidot^k = -Gamma^k_ij xi^i xi^j, so the Duhamel integrand carries -(L f).
template <int D, class Field>
PhaseVec<D> transform_X(const Metric<D>& metric, const Field& f, const GeodesicRecord<D>& rec,
                        int quad_n = 512) {
  auto Pi = [&](const Vec<D>& x) -> WeightedVal<D> {
    WeightedVal<D> out;
    WeightedValHalf<D> lf = l_operator<D>(metric, f, x);
    for (int k = 0; k < D; ++k) out[k].setZero();
    for (int k = 0; k < D; ++k) out[D + k] = -lf[k];
    return out;
  };
  return transform_I<D>(rec, Pi, quad_n);
}

template <int D, class Field>
PhaseVec<D> transform_X(const Metric<D>& metric, const Field& f, const PhasePoint<D>& entry,
                        double horizon, double tol = 1e-10, int quad_n = 512) {
  GeodesicRecord<D> rec = trace<D>(metric, entry, horizon, tol);
  return transform_X<D>(metric, f, rec, quad_n);
}

// ---------------------------------------------------------------------------
// Cutoffs on the inflow boundary.

// Smooth bump profile on [0, 1): value 1 at 0, vanishing to all orders at 1.
inline double compact_profile(double s) {
  if (s >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - s));
}

template <int D> struct AlphaBump {
  Vec<D> point = Vec<D>::Zero();  // boundary point of the center ray
  Vec<D> dir = Vec<D>::Zero();    // inward direction of the center ray
  double point_width = 0.3;       // chordal widths
  double dir_width = 0.3;
};

// alpha = 1 - prod_a (1 - b_a), smooth, with values in [0, 1] and compact
// support on S_-dM.
template <int D> class CutoffAlpha {
 public:
  CutoffAlpha() = default;
  explicit CutoffAlpha(std::vector<AlphaBump<D>> bumps) : bumps_(std::move(bumps)) {}

  const std::vector<AlphaBump<D>>& bumps() const { return bumps_; }
  bool empty() const { return bumps_.empty(); }

  double operator()(const PhasePoint<D>& entry) const {
    double prod = 1.0;
    for (const auto& b : bumps_) {
      double sp = (entry.x - b.point).squaredNorm() / (b.point_width * b.point_width);
      double sd = (entry.xi - b.dir).squaredNorm() / (b.dir_width * b.dir_width);
      prod *= 1.0 - compact_profile(sp) * compact_profile(sd);
    }
    return 1.0 - prod;
  }

 private:
  std::vector<AlphaBump<D>> bumps_;
};

// ---------------------------------------------------------------------------
// Rays through interior points.

// The geodesic through an interior phase point (x, xi), traced both ways.
// Exposes entry/exit data and transport weights at points of the forward
// branch without re-tracing from the boundary.
template <int D> class ThroughRay {
 public:
  ThroughRay(const Metric<D>& metric, const Vec<D>& x, const Vec<D>& xi, double horizon,
             double tol = 1e-10)
      : horizon_(horizon) {
    PhasePoint<D> fwd{x, xi};
    PhasePoint<D> bwd{x, -xi};
    rec_fwd_ = trace<D>(metric, fwd, horizon, tol);
    rec_bwd_ = trace<D>(metric, bwd, horizon, tol);
    if (rec_fwd_.trapped || rec_bwd_.trapped)
      throw std::runtime_error("through_ray: ray does not leave the domain within the horizon");
  }

  double t_base() const { return rec_bwd_.exit_time; }          // entry -> x time
  double forward_length() const { return rec_fwd_.exit_time; }  // x -> exit time
  double total_length() const { return t_base() + forward_length(); }

  PhasePoint<D> entry() const {
    return {rec_bwd_.exit_point.x, -rec_bwd_.exit_point.xi};
  }
  PhasePoint<D> exit() const { return rec_fwd_.exit_point; }
  PhasePoint<D> at(double r) const { return rec_fwd_.phase(r); }

  // Phi at (y(r), ydot(r)) on the forward branch, r >= 0 measured from x.
  PhaseMat<D> phi_fwd(double r) const {
    return rec_fwd_.psi(horizon_ - t_base()) * rec_fwd_.psi(r).inverse();
  }

  // Phi at the reversed phase point (y(r), -ydot(r)).
  PhaseMat<D> phi_bwd(double r) const {
    PhaseMat<D> rho = reversal();
    PhaseMat<D> tail = euclid_transport<D>(horizon_ - total_length());
    return tail * rec_bwd_.psi(t_base()) * rho * rec_fwd_.psi(r).inverse() * rho;
  }

  const GeodesicRecord<D>& forward_record() const { return rec_fwd_; }
  const GeodesicRecord<D>& backward_record() const { return rec_bwd_; }

  static PhaseMat<D> reversal() {
    PhaseMat<D> rho = PhaseMat<D>::Identity();
    rho.template block<D, D>(D, D) = -Mat<D>::Identity();
    return rho;
  }

 private:
  double horizon_;
  GeodesicRecord<D> rec_fwd_;
  GeodesicRecord<D> rec_bwd_;
};

// ---------------------------------------------------------------------------
// Adjoint transform and the fiber-kernel normal operator.

// Fiber directions of the g-unit sphere S_xM: xi = G^{-1/2} u over Euclidean
// unit u; with this parametrization d mu_x = (Euclidean sphere measure).
template <int D> struct FiberFrame {
  Mat<D> g_sqrt;      // G^{1/2}
  Mat<D> g_inv_sqrt;  // G^{-1/2}

  explicit FiberFrame(const Mat<D>& g) {
    Eigen::SelfAdjointEigenSolver<Mat<D>> es(g);
    Vec<D> sq = es.eigenvalues().cwiseSqrt();
    g_sqrt = es.eigenvectors() * sq.asDiagonal() * es.eigenvectors().transpose();
    g_inv_sqrt = es.eigenvectors() * sq.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  }
};

// Adjoint of the forward transform at a point:
//   (I^+ h)^k_ij(x) = int_{S_xM} (Phi^T h^sharp)(x, xi) xi_i xi_j d mu_x(xi),
// h^sharp evaluated by tracing each fiber direction back to the inflow boundary.
template <int D, class HFn>
WeightedVal<D> adjoint_I(const Metric<D>& metric, const HFn& h, const Vec<D>& x, int fiber_n,
                         double horizon, double tol = 1e-10) {
  WeightedVal<D> out;
  for (auto& m : out) m.setZero();
  FiberFrame<D> frame(metric.jet(x).g);
  std::vector<Vec<D>> dirs;
  std::vector<double> wts;
  sphere_rule<D>(fiber_n, dirs, wts);
  for (size_t a = 0; a < dirs.size(); ++a) {
    Vec<D> xi = frame.g_inv_sqrt * dirs[a];
    Vec<D> xi_low = frame.g_sqrt * dirs[a];  // g xi
    ThroughRay<D> ray(metric, x, xi, horizon, tol);
    PhaseVec<D> hv = h(ray.entry());
    PhaseVec<D> val = ray.phi_fwd(0.0).transpose() * hv;
    Mat<D> xx = xi_low * xi_low.transpose();
    for (int k = 0; k < 2 * D; ++k) out[k] += (wts[a] * val[k]) * xx;
  }
  return out;
}

enum class NormalSplit { All, Near, Far };

// Smooth radial split function: 1 for r < eps2, 0 for r > 2*eps2.
inline double chi_near(double r, double eps2) {
  if (r <= eps2) return 1.0;
  if (r >= 2.0 * eps2) return 0.0;
  double s = (r - eps2) / eps2;
  double a = std::exp(-1.0 / (1.0 - s));
  double b = std::exp(-1.0 / s);
  return a / (a + b);
}

struct NormalOptions {
  NormalSplit split = NormalSplit::All;
  double eps2 = 0.05;
  int fiber_n = 64;
  int radial_n = 64;
  double tol = 1e-10;
  int quad_n = 512;  // path nodes for composed-form evaluations
};

// Fiber-kernel form of the normal operator M = I^+ I at a point x, optionally
// truncated by a boundary cutoff alpha (constant along each ray):
//   (M Pi)_ij(x) = int_{S_x} int_0^inf  xi_i xi_j [Phi^T(x,xi) Phi(y,ydot)
//                  + Phi^T(x,-xi) Phi(y,-ydot)] Pi_mn(y) ydot^m ydot^n  dr dsigma(u)
template <int D, class PiFn>
WeightedVal<D> normal_M_fiber(const Metric<D>& metric, const PiFn& Pi, const Vec<D>& x,
                              const NormalOptions& opt, double horizon,
                              const CutoffAlpha<D>* alpha = nullptr) {
  WeightedVal<D> out;
  for (auto& m : out) m.setZero();
  FiberFrame<D> frame(metric.jet(x).g);
  std::vector<Vec<D>> dirs;
  std::vector<double> wts;
  sphere_rule<D>(opt.fiber_n, dirs, wts);

  for (size_t a = 0; a < dirs.size(); ++a) {
    Vec<D> xi = frame.g_inv_sqrt * dirs[a];
    Vec<D> xi_low = frame.g_sqrt * dirs[a];
    ThroughRay<D> ray(metric, x, xi, horizon, opt.tol);
    double aw = 1.0;
    if (alpha) {
      double av = (*alpha)(ray.entry());
      aw = av * av;
      if (aw == 0.0) continue;
    }
    Mat<D> xx = xi_low * xi_low.transpose();
    PhaseMat<D> phiT_f = ray.phi_fwd(0.0).transpose();
    PhaseMat<D> phiT_b = ray.phi_bwd(0.0).transpose();

    double r_max = ray.forward_length();
    double hr = r_max / opt.radial_n;
    for (int q = 0; q < opt.radial_n; ++q) {
      double r = (q + 0.5) * hr;
      double cf = 1.0;
      if (opt.split != NormalSplit::All) {
        double cn = chi_near(r, opt.eps2);
        cf = (opt.split == NormalSplit::Near) ? cn : 1.0 - cn;
      }
      if (cf == 0.0) continue;
      PhasePoint<D> y = ray.at(r);
      WeightedVal<D> piy = Pi(y.x);
      PhaseVec<D> pv;
      for (int k = 0; k < 2 * D; ++k) pv[k] = y.xi.dot(piy[k] * y.xi);
      PhaseMat<D> inv_psi_r = ray.forward_record().psi(r).inverse();
      PhaseMat<D> rho = ThroughRay<D>::reversal();
      PhaseMat<D> phi_f_r =
          ray.forward_record().psi(horizon - ray.t_base()) * inv_psi_r;
      PhaseMat<D> phi_b_r = euclid_transport<D>(horizon - ray.total_length()) *
                            ray.backward_record().psi(ray.t_base()) * rho * inv_psi_r * rho;
      PhaseVec<D> val = phiT_f * (phi_f_r * pv) + phiT_b * (phi_b_r * pv);
      double w = wts[a] * hr * cf * aw;
      for (int k = 0; k < 2 * D; ++k) out[k] += (w * val[k]) * xx;
    }
  }
  return out;
}

// Composed form of the normal operator: I^+ applied to the on-demand forward
// transform. Independent discretization from normal_M_fiber.
template <int D, class PiFn>
WeightedVal<D> normal_M_composed(const Metric<D>& metric, const PiFn& Pi, const Vec<D>& x,
                                 int fiber_n, double horizon, double tol = 1e-10,
                                 int quad_n = 512, const CutoffAlpha<D>* alpha = nullptr) {
  auto h = [&](const PhasePoint<D>& entry) -> PhaseVec<D> {
    GeodesicRecord<D> rec = trace<D>(metric, entry, horizon, tol);
    PhaseVec<D> v = transform_I<D>(rec, Pi, quad_n);
    if (alpha) v *= (*alpha)(entry) * (*alpha)(entry);
    return v;
  };
  return adjoint_I<D>(metric, h, x, fiber_n, horizon, tol);
}

}  // namespace geoxray
