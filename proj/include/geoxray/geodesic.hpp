#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "geoxray/metric.hpp"

namespace geoxray {

template <int D> struct PhasePoint {
  Vec<D> x = Vec<D>::Zero();
  Vec<D> xi = Vec<D>::Zero();

  PhaseVec<D> packed() const {
    PhaseVec<D> v;
    v.template head<D>() = x;
    v.template tail<D>() = xi;
    return v;
  }
  static PhasePoint unpack(const PhaseVec<D>& v) {
    return {v.template head<D>(), v.template tail<D>()};
  }
};

// Euclidean flow: straight lines, constant velocity.
template <int D> PhasePoint<D> flow_euclid(const PhasePoint<D>& p, double t) {
  return {p.x + t * p.xi, p.xi};
}

// Transport propagator of the Euclidean linearized flow over time s.
template <int D> PhaseMat<D> euclid_transport(double s) {
  PhaseMat<D> e = PhaseMat<D>::Identity();
  e.template block<D, D>(0, D) = s * Mat<D>::Identity();
  return e;
}

// Generator H = (xi, -Gamma^k_ij xi^i xi^j) and its Jacobian A = (dH/dx, dH/dxi).
template <int D>
void hamiltonian_field(const ChristoffelJet<D>& cj, const PhasePoint<D>& p, PhaseVec<D>& H,
                       PhaseMat<D>& A) {
  H.template head<D>() = p.xi;
  for (int k = 0; k < D; ++k) H[D + k] = -p.xi.dot(cj.gamma[k] * p.xi);
  A.setZero();
  A.template block<D, D>(0, D) = Mat<D>::Identity();
  for (int k = 0; k < D; ++k) {
    for (int m = 0; m < D; ++m) A(D + k, m) = -p.xi.dot(cj.dgamma[m][k] * p.xi);
    A.template block<1, D>(D + k, D) = -2.0 * (cj.gamma[k] * p.xi).transpose();
  }
}

// Connection backed directly by a metric.
template <int D> struct MetricConnection {
  const Metric<D>* metric;
  ChristoffelJet<D> christoffel(const Vec<D>& x) const { return metric->christoffel(x); }
  const Domain& domain() const { return metric->domain(); }
};

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) with dense output.

template <int N> struct DenseStep {
  double t0 = 0.0, h = 0.0;
  Eigen::Matrix<double, N, 5> cont;  // dopri5 continuous-output coefficients

  Eigen::Matrix<double, N, 1> eval(double t) const {
    double th = (t - t0) / h;
    double th1 = 1.0 - th;
    return cont.col(0) +
           th * (cont.col(1) + th1 * (cont.col(2) + th * (cont.col(3) + th1 * cont.col(4))));
  }
};

struct IntegrationStats {
  int steps_accepted = 0;
  int steps_rejected = 0;
  bool ok = true;
  std::string message;
};

// Integrates dy/dt = rhs(t, y) from (t0, y0) to t1 (either direction).
// observer(step) is called after every accepted step; return false to stop.
template <int N, class RHS>
IntegrationStats integrate_dopri5(const RHS& rhs, double t0, double t1,
                                  Eigen::Matrix<double, N, 1>& y, double tol,
                                  const std::function<bool(const DenseStep<N>&)>& observer = {},
                                  int max_steps = 200000) {
  using VecN = Eigen::Matrix<double, N, 1>;
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                          a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

  IntegrationStats stats;
  if (t1 == t0) return stats;
  const double dir = (t1 > t0) ? 1.0 : -1.0;
  double t = t0;
  double h = dir * std::min(1e-2, std::abs(t1 - t0));
  VecN k1, k2, k3, k4, k5, k6, k7, ynew, yerr;
  rhs(t, y, k1);

  for (int step = 0; step < max_steps; ++step) {
    if (dir * (t - t1) >= 0.0) return stats;
    if (dir * (t + h - t1) > 0.0) h = t1 - t;
    if (std::abs(h) < 1e-15 * std::max(1.0, std::abs(t))) {
      stats.ok = false;
      stats.message = "step size underflow";
      return stats;
    }

    rhs(t + c2 * h, y + h * (a21 * k1), k2);
    rhs(t + c3 * h, y + h * (a31 * k1 + a32 * k2), k3);
    rhs(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3), k4);
    rhs(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), k5);
    rhs(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), k6);
    ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    rhs(t + h, ynew, k7);
    yerr = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err = 0.0;
    for (int i = 0; i < N; ++i) {
      double sc = tol + tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      err += (yerr[i] / sc) * (yerr[i] / sc);
    }
    err = std::sqrt(err / N);

    if (err <= 1.0) {
      if (observer) {
        DenseStep<N> ds;
        ds.t0 = t;
        ds.h = h;
        VecN ydiff = ynew - y;
        VecN bspl = h * k1 - ydiff;
        ds.cont.col(0) = y;
        ds.cont.col(1) = ydiff;
        ds.cont.col(2) = bspl;
        ds.cont.col(3) = ydiff - h * k7 - bspl;
        ds.cont.col(4) = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
        if (!observer(ds)) {
          y = ynew;
          return stats;
        }
      }
      t += h;
      y = ynew;
      k1 = k7;
      ++stats.steps_accepted;
      double fac = std::min(5.0, std::max(0.2, 0.9 * std::pow(err + 1e-300, -0.2)));
      h *= fac;
    } else {
      ++stats.steps_rejected;
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
    }
  }
  stats.ok = false;
  stats.message = "max step count exceeded";
  return stats;
}

// ---------------------------------------------------------------------------
// Geodesic tracing with joint variational transport.

template <int D> constexpr int flow_state_dim() { return 2 * D; }
template <int D> constexpr int transport_state_dim() { return 2 * D + 4 * D * D; }

template <int D>
void pack_transport(const PhasePoint<D>& p, const PhaseMat<D>& psi,
                    Eigen::Matrix<double, transport_state_dim<D>(), 1>& y) {
  y.template head<D>() = p.x;
  y.template segment<D>(D) = p.xi;
  for (int c = 0; c < 2 * D; ++c) y.template segment<2 * D>(2 * D + 2 * D * c) = psi.col(c);
}

template <int D>
void unpack_transport(const Eigen::Matrix<double, transport_state_dim<D>(), 1>& y,
                      PhasePoint<D>& p, PhaseMat<D>& psi) {
  p.x = y.template head<D>();
  p.xi = y.template segment<D>(D);
  for (int c = 0; c < 2 * D; ++c) psi.col(c) = y.template segment<2 * D>(2 * D + 2 * D * c);
}

// Record of one traced geodesic: dense-output steps of (x, xi, Psi) up to the
// boundary exit, then the exact Euclidean continuation out to the horizon.
template <int D> struct GeodesicRecord {
  static constexpr int NS = transport_state_dim<D>();

  PhasePoint<D> entry;
  double horizon = 0.0;
  double tol = 1e-10;
  double exit_time = 0.0;          // L
  PhasePoint<D> exit_point;        // Sigma
  PhaseMat<D> psi_exit = PhaseMat<D>::Identity();
  bool trapped = false;
  IntegrationStats stats;
  std::vector<DenseStep<NS>> steps;

  void state(double t, PhasePoint<D>& p, PhaseMat<D>& psi) const {
    if (!trapped && t >= exit_time) {
      p = flow_euclid(exit_point, t - exit_time);
      psi = euclid_transport<D>(t - exit_time) * psi_exit;
      return;
    }
    if (t <= 0.0) {  // Euclidean continuation before entry (g = e near the boundary)
      p = flow_euclid(entry, t);
      psi = euclid_transport<D>(t);
      return;
    }
    const DenseStep<NS>& s = find_step(t);
    Eigen::Matrix<double, NS, 1> y = s.eval(t);
    unpack_transport<D>(y, p, psi);
  }

  PhasePoint<D> phase(double t) const {
    PhasePoint<D> p;
    PhaseMat<D> psi;
    state(t, p, psi);
    return p;
  }

  PhaseMat<D> psi(double t) const {
    PhasePoint<D> p;
    PhaseMat<D> m;
    state(t, p, m);
    return m;
  }

 private:
  const DenseStep<NS>& find_step(double t) const {
    if (steps.empty()) throw std::runtime_error("geodesic record: empty");
    size_t lo = 0, hi = steps.size() - 1;
    while (lo < hi) {
      size_t mid = (lo + hi + 1) / 2;
      if (steps[mid].t0 <= t)
        lo = mid;
      else
        hi = mid - 1;
    }
    return steps[lo];
  }
};

namespace detail {

template <int D, class Connection> struct TransportRhs {
  const Connection* conn;
  void operator()(double, const Eigen::Matrix<double, transport_state_dim<D>(), 1>& y,
                  Eigen::Matrix<double, transport_state_dim<D>(), 1>& dy) const {
    PhasePoint<D> p;
    PhaseMat<D> psi;
    unpack_transport<D>(y, p, psi);
    ChristoffelJet<D> cj = conn->christoffel(p.x);
    PhaseVec<D> H;
    PhaseMat<D> A;
    hamiltonian_field<D>(cj, p, H, A);
    PhaseMat<D> dpsi = A * psi;
    dy.template head<2 * D>() = H;
    for (int c = 0; c < 2 * D; ++c) dy.template segment<2 * D>(2 * D + 2 * D * c) = dpsi.col(c);
  }
};

}  // namespace detail

// Traces the geodesic through `entry` (phase point on or inside the ball) with
// joint transport Psi' = A Psi, Psi(0) = Id. The boundary exit time is located
// by bisection on |x(t)|^2 - R^2 within the crossing step's dense output.
template <int D, class Connection>
GeodesicRecord<D> trace(const Connection& conn, const PhasePoint<D>& entry, double horizon,
                        double tol = 1e-10) {
  constexpr int NS = transport_state_dim<D>();
  const double R = conn.domain().radius;
  const double R2 = R * R;

  GeodesicRecord<D> rec;
  rec.entry = entry;
  rec.horizon = horizon;
  rec.tol = tol;

  Eigen::Matrix<double, NS, 1> y;
  pack_transport<D>(entry, PhaseMat<D>::Identity(), y);

  detail::TransportRhs<D, Connection> rhs{&conn};
  bool exited = false;
  double t_extent = horizon * 1.1 + 10.0 * tol;

  auto observer = [&](const DenseStep<NS>& s) -> bool {
    rec.steps.push_back(s);
    double t1 = s.t0 + s.h;
    Eigen::Matrix<double, NS, 1> yend = s.eval(t1);
    double r2_end = yend.template head<D>().squaredNorm();
    if (r2_end > R2 && t1 > 16.0 * tol) {
      // bracket the boundary crossing inside this step
      double lo = s.t0, hi = t1;
      // The entry itself sits on the boundary; make sure lo is strictly inside.
      if (s.eval(lo).template head<D>().squaredNorm() >= R2) {
        lo = std::min(t1, s.t0 + 16.0 * tol);
        if (s.eval(lo).template head<D>().squaredNorm() >= R2) lo = 0.5 * (s.t0 + t1);
      }
      for (int it = 0; it < 200 && (hi - lo) > 1e-10 * 0.5; ++it) {
        double mid = 0.5 * (lo + hi);
        if (s.eval(mid).template head<D>().squaredNorm() > R2)
          hi = mid;
        else
          lo = mid;
      }
      rec.exit_time = 0.5 * (lo + hi);
      Eigen::Matrix<double, NS, 1> ye = s.eval(rec.exit_time);
      unpack_transport<D>(ye, rec.exit_point, rec.psi_exit);
      exited = true;
      return false;
    }
    return true;
  };

  rec.stats = integrate_dopri5<NS>(rhs, 0.0, t_extent, y, tol, observer);
  if (!exited) {
    rec.trapped = true;
    rec.exit_time = std::numeric_limits<double>::infinity();
  }
  return rec;
}

template <int D>
GeodesicRecord<D> trace(const Metric<D>& metric, const PhasePoint<D>& entry, double horizon,
                        double tol = 1e-10) {
  return trace<D, MetricConnection<D>>(MetricConnection<D>{&metric}, entry, horizon, tol);
}

// Plain flow H^t without transport; works for either sign of t.
template <int D, class Connection>
PhasePoint<D> flow(const Connection& conn, const PhasePoint<D>& p, double t, double tol = 1e-10) {
  constexpr int NF = flow_state_dim<D>();
  Eigen::Matrix<double, NF, 1> y = p.packed();
  auto rhs = [&](double, const Eigen::Matrix<double, NF, 1>& s,
                 Eigen::Matrix<double, NF, 1>& dy) {
    PhasePoint<D> q = PhasePoint<D>::unpack(s);
    ChristoffelJet<D> cj = conn.christoffel(q.x);
    PhaseVec<D> H;
    H.template head<D>() = q.xi;
    for (int k = 0; k < D; ++k) H[D + k] = -q.xi.dot(cj.gamma[k] * q.xi);
    dy = H;
  };
  IntegrationStats st = integrate_dopri5<NF>(rhs, 0.0, t, y, tol);
  if (!st.ok) throw std::runtime_error("flow: integration failed: " + st.message);
  return PhasePoint<D>::unpack(y);
}

template <int D>
PhasePoint<D> flow(const Metric<D>& metric, const PhasePoint<D>& p, double t, double tol = 1e-10) {
  return flow<D, MetricConnection<D>>(MetricConnection<D>{&metric}, p, t, tol);
}

// First positive moment at which the backward Euclidean ray s -> x - s*xi
// meets the sphere |y| = R; nullopt when the ray misses the ball.
template <int D>
std::optional<double> kappa(const Domain& domain, const PhasePoint<D>& q) {
  double R2 = domain.radius * domain.radius;
  double a = q.xi.squaredNorm();
  double b = q.x.dot(q.xi);  // | x - t xi |^2 = a t^2 - 2 b t + |x|^2
  double c = q.x.squaredNorm() - R2;
  double disc = b * b - a * c;
  if (disc < 0.0 || a == 0.0) return std::nullopt;
  double sq = std::sqrt(disc);
  double t_small = (b - sq) / a;
  double t_large = (b + sq) / a;
  if (t_small >= -1e-12) return std::max(0.0, t_small);
  if (t_large >= -1e-12) return std::max(0.0, t_large);
  return std::nullopt;
}

// Residuals of the flow/scattering-relation identities for one entry ray:
//   (a) H^T(entry) vs Euclidean continuation of Sigma over T - L
//   (b) L vs T - kappa(H^T(entry))
//   (c) Sigma vs backward Euclidean flow of H^T(entry) over kappa
struct ScatterIdentityReport {
  double residual_flow = 0.0;
  double residual_length = 0.0;
  double residual_exit = 0.0;
  bool skipped = false;
  double max_residual() const {
    return std::max({residual_flow, residual_length, residual_exit});
  }
};

template <int D>
ScatterIdentityReport verify_flow_scatter(const Metric<D>& metric, const PhasePoint<D>& entry,
                                          double horizon, double tol = 1e-10) {
  ScatterIdentityReport rep;
  GeodesicRecord<D> rec = trace<D>(metric, entry, horizon, tol);
  if (rec.trapped) {
    rep.skipped = true;
    return rep;
  }
  PhasePoint<D> hT = rec.phase(horizon);
  PhasePoint<D> from_sigma = flow_euclid(rec.exit_point, horizon - rec.exit_time);
  rep.residual_flow = (hT.packed() - from_sigma.packed()).norm();

  std::optional<double> k = kappa<D>(metric.domain(), hT);
  if (!k) {
    rep.skipped = true;
    return rep;
  }
  rep.residual_length = std::abs(rec.exit_time - (horizon - *k));
  PhasePoint<D> back = flow_euclid(hT, -*k);
  rep.residual_exit = (back.packed() - rec.exit_point.packed()).norm();
  return rep;
}

// g-norm of a tangent vector.
template <int D>
double g_norm(const Metric<D>& metric, const Vec<D>& x, const Vec<D>& v) {
  return std::sqrt(v.dot(metric.jet(x).g * v));
}

// Entry phase point on S_-dM of the ball from a boundary angle parameter and
// an inward direction; xi is g-unit (g = e on the boundary).
template <int D>
PhasePoint<D> boundary_entry(const Domain& domain, const Vec<D>& boundary_unit,
                             const Vec<D>& inward_unit) {
  PhasePoint<D> p;
  p.x = domain.radius * boundary_unit;
  p.xi = inward_unit;
  if (p.x.dot(p.xi) >= 0.0)
    throw std::invalid_argument("boundary_entry: direction is not inward");
  return p;
}

}  // namespace geoxray
