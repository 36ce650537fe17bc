#pragma once

#include <Eigen/SVD>
#include <optional>
#include <vector>

#include "geoxray/geodesic.hpp"

namespace geoxray {

// One traced unit-speed ray from an interior base point, exposing the
// exponential map and its fiber differential along the ray.
//
// With t = |xi|_g and u = xi/t, exp_x(xi) is the position of H^t(x, u); the
// chain rule through the unit-speed reparametrization gives
//   d_xi exp_x(xi) = gdot (G u)^T + Psi_xv(t) (I - u (G u)^T) / t,
// where Psi_xv is the position-velocity block of the transport and gdot the
// velocity at time t.
template <int D> class RayExp {
 public:
  RayExp(const Metric<D>& metric, const Vec<D>& x, const Vec<D>& direction, double t_max,
         double tol = 1e-10)
      : metric_(&metric), x_(x) {
    g_ = metric.jet(x).g;
    unit_ = direction / std::sqrt(direction.dot(g_ * direction));
    PhasePoint<D> start{x, unit_};
    rec_ = trace<D>(metric, start, t_max, tol);
  }

  const GeodesicRecord<D>& record() const { return rec_; }
  const Vec<D>& base() const { return x_; }
  const Vec<D>& unit_direction() const { return unit_; }

  Vec<D> exp(double t) const { return rec_.phase(t).x; }
  Vec<D> velocity(double t) const { return rec_.phase(t).xi; }

  Mat<D> dexp(double t) const {
    if (t < 1e-12) return Mat<D>::Identity();
    PhasePoint<D> p;
    PhaseMat<D> psi;
    rec_.state(t, p, psi);
    Mat<D> psi_xv = psi.template block<D, D>(0, D);
    Vec<D> gu = g_ * unit_;
    return p.xi * gu.transpose() + psi_xv * (Mat<D>::Identity() - unit_ * gu.transpose()) / t;
  }

  double det_dexp(double t) const { return dexp(t).determinant(); }

 private:
  const Metric<D>* metric_;
  Vec<D> x_;
  Vec<D> unit_;
  Mat<D> g_;
  GeodesicRecord<D> rec_;
};

template <int D>
std::pair<Vec<D>, Vec<D>> exp_map(const Metric<D>& metric, const Vec<D>& x, const Vec<D>& xi,
                                  double tol = 1e-10) {
  Mat<D> g = metric.jet(x).g;
  double t = std::sqrt(xi.dot(g * xi));
  if (t < 1e-14) return {x, xi};
  RayExp<D> ray(metric, x, xi, t * 1.001, tol);
  return {ray.exp(t), ray.velocity(t)};
}

template <int D>
Mat<D> dexp(const Metric<D>& metric, const Vec<D>& x, const Vec<D>& xi, double tol = 1e-10) {
  Mat<D> g = metric.jet(x).g;
  double t = std::sqrt(xi.dot(g * xi));
  if (t < 1e-12) return Mat<D>::Identity();
  RayExp<D> ray(metric, x, xi, t * 1.001, tol);
  return ray.dexp(t);
}

// Conjugate radii along the ray: zeros of det d_xi exp_x(t u) for t in
// (0, t_max], found by scanning and bisection. Tangential near-zeros without
// a sign change are flagged as degenerate rather than bisected.
struct ConjugateScan {
  std::vector<double> radii;
  std::vector<double> degenerate_radii;
  double max_abs_det = 0.0;
};

template <int D>
ConjugateScan find_conjugate(const RayExp<D>& ray, double t_max, int n_scan = 256,
                             double t_tol = 1e-8) {
  ConjugateScan out;
  std::vector<double> ts(n_scan), dets(n_scan);
  for (int i = 0; i < n_scan; ++i) {
    ts[i] = t_max * (i + 1) / n_scan;
    dets[i] = ray.det_dexp(ts[i]);
    out.max_abs_det = std::max(out.max_abs_det, std::abs(dets[i]));
  }
  for (int i = 0; i + 1 < n_scan; ++i) {
    if (dets[i] == 0.0) {
      out.radii.push_back(ts[i]);
      continue;
    }
    if (dets[i] * dets[i + 1] < 0.0) {
      double lo = ts[i], hi = ts[i + 1], flo = dets[i];
      while (hi - lo > t_tol) {
        double mid = 0.5 * (lo + hi);
        double fm = ray.det_dexp(mid);
        if (flo * fm <= 0.0)
          hi = mid;
        else {
          lo = mid;
          flo = fm;
        }
      }
      out.radii.push_back(0.5 * (lo + hi));
    } else if (i > 0) {
      // local |det| minimum near zero without a sign change: a double zero
      // (two singular values vanishing together), flagged, not bisected
      if (std::abs(dets[i]) < 1e-4 * out.max_abs_det &&
          std::abs(dets[i]) <= std::abs(dets[i - 1]) &&
          std::abs(dets[i]) <= std::abs(dets[i + 1]) && dets[i - 1] * dets[i + 1] > 0.0)
        out.degenerate_radii.push_back(ts[i]);
    }
  }
  return out;
}

template <int D>
ConjugateScan find_conjugate(const Metric<D>& metric, const Vec<D>& x, const Vec<D>& direction,
                             double t_max, int n_scan = 256, double tol = 1e-10) {
  RayExp<D> ray(metric, x, direction, t_max * 1.01, tol);
  return find_conjugate<D>(ray, t_max, n_scan);
}

enum class FoldClass { Fold, NonFold, Degenerate };

template <int D> struct FoldReport {
  FoldClass cls = FoldClass::Degenerate;
  double t_star = 0.0;
  Vec<D> kernel = Vec<D>::Zero();        // unit kernel vector of d exp
  Vec<D> grad_det = Vec<D>::Zero();      // gradient of det d exp in xi
  double sigma_min = 0.0, sigma_next = 0.0, sigma_max = 0.0;
  double transversality = 0.0;           // |<n, grad>| / (|n| |grad|)
  bool rank_ok = false, order_ok = false, transversal_ok = false;
};

struct FoldTolerances {
  double sigma_tol = 1e-6;   // relative rank threshold
  double grad_tol = 1e-4;    // order-1 vanishing, scaled by local det variation
  double trans_tol = 1e-4;
  double fd_step = 1e-4;     // finite-difference step in xi
};

// Gradient of det d_xi exp_x at xi_star by central differences; each
// evaluation traces the ray of the perturbed fiber vector.
template <int D>
Vec<D> det_gradient(const Metric<D>& metric, const Vec<D>& x, const Vec<D>& xi_star, double step,
                    double tol = 1e-10) {
  Vec<D> grad;
  for (int i = 0; i < D; ++i) {
    Vec<D> xp = xi_star, xm = xi_star;
    xp[i] += step;
    xm[i] -= step;
    grad[i] = (dexp<D>(metric, x, xp, tol).determinant() -
               dexp<D>(metric, x, xm, tol).determinant()) /
              (2.0 * step);
  }
  return grad;
}

template <int D>
FoldReport<D> classify_fold(const Metric<D>& metric, const Vec<D>& x, const Vec<D>& xi_star,
                            const FoldTolerances& tols = {}, double det_scale = 1.0,
                            double tol = 1e-10) {
  FoldReport<D> rep;
  Mat<D> g = metric.jet(x).g;
  rep.t_star = std::sqrt(xi_star.dot(g * xi_star));

  Mat<D> J = dexp<D>(metric, x, xi_star, tol);
  Eigen::JacobiSVD<Mat<D>> svd(J, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec<D> sv = svd.singularValues();
  rep.sigma_max = sv[0];
  rep.sigma_min = sv[D - 1];
  rep.sigma_next = sv[D - 2];
  rep.kernel = svd.matrixV().col(D - 1);

  // (a) rank d-1: exactly one singular value below threshold
  rep.rank_ok = (rep.sigma_min <= tols.sigma_tol * rep.sigma_max) &&
                (rep.sigma_next > tols.sigma_tol * rep.sigma_max * 10.0);

  // (b) order-1 vanishing of det along xi
  rep.grad_det = det_gradient<D>(metric, x, xi_star, tols.fd_step, tol);
  double scale = std::max(det_scale, 1e-300) / std::max(rep.t_star, 1e-3);
  rep.order_ok = rep.grad_det.norm() >= tols.grad_tol * scale;

  // (c) kernel transversal to the singular set
  rep.transversality = std::abs(rep.kernel.dot(rep.grad_det)) /
                       std::max(1e-300, rep.kernel.norm() * rep.grad_det.norm());
  rep.transversal_ok = rep.transversality >= tols.trans_tol;

  if (rep.rank_ok && rep.order_ok && rep.transversal_ok)
    rep.cls = FoldClass::Fold;
  else if (!rep.rank_ok)
    rep.cls = FoldClass::NonFold;
  else
    rep.cls = FoldClass::Degenerate;
  return rep;
}

template <int D> struct StrongFoldReport {
  int rank_full_map = 0;     // rank of [F(eta_a)] as a map into R^D
  int rank_cokernel = 0;     // rank after projecting onto coker(d exp)
  double smallest_kept_sv = 0.0;
  bool borderline = false;
  bool full_rank() const { return rank_full_map == D - 1; }
};

// Rank test of the intrinsic derivative of d exp applied to the kernel
// direction, restricted to the tangent space of the singular set:
//   F(eta) = lim (d exp(xi* + s eta) - d exp(xi*)) / s . n
// over an orthonormal basis {eta_a} of (grad det)^perp.
template <int D>
StrongFoldReport<D> strong_fold_regular_test(const Metric<D>& metric, const Vec<D>& x,
                                             const Vec<D>& xi_star, const FoldReport<D>& fold,
                                             double fd_step = 1e-4, double tol = 1e-10) {
  StrongFoldReport<D> rep;
  // orthonormal complement of grad_det spans T_{xi*} S(x)
  Mat<D> seed = Mat<D>::Zero();
  seed.col(0) = fold.grad_det.normalized();
  Eigen::HouseholderQR<Mat<D>> qr(seed);
  Mat<D> Q = qr.householderQ();
  if (Q.col(0).dot(fold.grad_det) < 0.0) Q = -Q;
  Eigen::Matrix<double, D, D - 1> etas;
  for (int a = 0; a < D - 1; ++a) etas.col(a) = Q.col(a + 1);

  Eigen::Matrix<double, D, D - 1> F;
  for (int a = 0; a < D - 1; ++a) {
    Vec<D> xp = xi_star + fd_step * etas.col(a);
    Vec<D> xm = xi_star - fd_step * etas.col(a);
    Mat<D> dJ = (dexp<D>(metric, x, xp, tol) - dexp<D>(metric, x, xm, tol)) / (2.0 * fd_step);
    F.col(a) = dJ * fold.kernel;
  }

  Eigen::JacobiSVD<Eigen::Matrix<double, D, D - 1>> svd(F);
  auto sv = svd.singularValues();
  double smax = sv[0];
  double thresh = 1e-6 * std::max(smax, 1e-300);
  for (int i = 0; i < D - 1; ++i) {
    if (sv[i] > thresh) {
      ++rep.rank_full_map;
      rep.smallest_kept_sv = sv[i];
    }
    if (sv[i] > 0.1 * thresh && sv[i] <= 10.0 * thresh) rep.borderline = true;
  }

  // projection onto the cokernel of d exp(xi*)
  Mat<D> J = dexp<D>(metric, x, xi_star, tol);
  Eigen::JacobiSVD<Mat<D>> jsvd(J, Eigen::ComputeFullU);
  Vec<D> coker = jsvd.matrixU().col(D - 1);
  Eigen::Matrix<double, 1, D - 1> Fc = coker.transpose() * F;
  double cmax = Fc.cwiseAbs().maxCoeff();
  rep.rank_cokernel = (cmax > 1e-6 * std::max(smax, 1e-300)) ? 1 : 0;
  return rep;
}

// Completeness of a direction family Z at x: every g-unit xi must be
// g-orthogonal to some member, and every member ray must carry only
// fold-classified conjugate vectors and leave the domain transversely.
template <int D> struct CompletenessReport {
  double max_min_pairing = 0.0;  // max over xi of min over theta |<theta, xi>_g|
  bool complete = false;
  bool rays_admissible = false;
  int conjugate_count = 0;
  int non_fold_count = 0;
  double min_exit_transversality = 1.0;
};

template <int D>
CompletenessReport<D> completeness_test(const Metric<D>& metric, const Vec<D>& x,
                                        const std::vector<Vec<D>>& Z, double horizon,
                                        int sphere_samples = 4096, double pairing_tol = 5e-3,
                                        double tol = 1e-9) {
  if (Z.empty()) throw std::invalid_argument("completeness_test: empty direction family");
  CompletenessReport<D> rep;
  Mat<D> g = metric.jet(x).g;

  std::vector<Vec<D>> dirs;
  std::vector<double> wts;
  sphere_rule<D>(sphere_samples, dirs, wts);
  for (const auto& u : dirs) {
    double mn = std::numeric_limits<double>::max();
    for (const auto& th : Z) mn = std::min(mn, std::abs(th.dot(g * u)));
    rep.max_min_pairing = std::max(rep.max_min_pairing, mn);
  }
  rep.complete = rep.max_min_pairing <= pairing_tol;

  rep.rays_admissible = true;
  for (const auto& th : Z) {
    RayExp<D> ray(metric, x, th, horizon, tol);
    if (ray.record().trapped) {
      rep.rays_admissible = false;
      continue;
    }
    double exit_trans = std::abs(ray.record().exit_point.xi.dot(
        ray.record().exit_point.x.normalized()));
    rep.min_exit_transversality = std::min(rep.min_exit_transversality, exit_trans);
    if (exit_trans < 1e-3) rep.rays_admissible = false;

    ConjugateScan scan = find_conjugate<D>(ray, ray.record().exit_time, 256);
    rep.conjugate_count += (int)scan.radii.size();
    for (double t_star : scan.radii) {
      Vec<D> xi_star = t_star * ray.unit_direction();
      FoldReport<D> fr =
          classify_fold<D>(metric, x, xi_star, FoldTolerances{}, scan.max_abs_det, tol);
      if (fr.cls != FoldClass::Fold) {
        ++rep.non_fold_count;
        rep.rays_admissible = false;
      }
    }
  }
  return rep;
}

}  // namespace geoxray
