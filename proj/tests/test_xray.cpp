#include "doctest.h"

#include <cmath>

#include "geoxray/normal_op.hpp"
#include "geoxray/sample_fields.hpp"
#include "geoxray/xray.hpp"

using namespace geoxray;

namespace {

MetricSpec base_spec() {
  MetricSpec s;
  s.domain.dimension = 2;
  Bump b;
  b.center = {0.1, -0.05};
  b.width = 0.3;
  b.conformal = true;
  b.amplitude = 0.25;
  s.bumps.push_back(b);
  return s;
}

MetricSpec euclid_spec() {
  MetricSpec s;
  s.domain.dimension = 2;
  return s;
}

// Linear (non-compact) tensor field f = x^1 * I for the closed-form check.
struct LinearTensorField {
  TensorJet<2> jet(const Vec<2>& x) const {
    TensorJet<2> j;
    j.value = x[0] * Mat<2>::Identity();
    j.deriv[0] = Mat<2>::Identity();
    j.deriv[1].setZero();
    return j;
  }
};

std::vector<PhasePoint<2>> test_entries(int n, unsigned long long seed = 5) {
  Rng rng(seed);
  std::vector<PhasePoint<2>> out;
  for (int i = 0; i < n; ++i) {
    double th = uniform(rng, 0.0, 2 * M_PI);
    double ph = uniform(rng, -1.2, 1.2);
    Vec<2> nrm(std::cos(th), std::sin(th));
    Vec<2> tg(-std::sin(th), std::cos(th));
    out.push_back({nrm, -std::cos(ph) * nrm + std::sin(ph) * tg});
  }
  return out;
}

}  // namespace

TEST_CASE("l_operator on the euclidean linear field") {
  Metric<2> m(euclid_spec());
  LinearTensorField f;
  WeightedValHalf<2> lf = l_operator<2>(m, f, Vec<2>(0.2, 0.1));
  CHECK(lf[0](0, 0) == doctest::Approx(0.5));
  CHECK(lf[0](1, 1) == doctest::Approx(-0.5));
  CHECK(lf[1](0, 1) == doctest::Approx(0.5));
  CHECK(lf[1](0, 0) == doctest::Approx(0.0));
}

TEST_CASE("l_operator is the derivative of the christoffel map") {
  // Gamma(g + eps f) - Gamma(g) - eps L f = O(eps^2)
  MetricSpec spec = base_spec();
  Metric<2> m(spec);
  Rng rng(3);
  BumpTensorField<2> f = random_tensor_field<2>(m.domain(), rng, 2);

  std::vector<double> eps = {1e-1, 1e-2, 1e-3};
  std::vector<double> errs;
  std::vector<Vec<2>> pts;
  for (int i = 0; i < 20; ++i) pts.push_back(random_in_ball<2>(rng, 0.7));
  for (double e : eps) {
    Metric<2> mp(f.perturb(spec, e));
    double worst = 0;
    for (const auto& x : pts) {
      ChristoffelJet<2> c0 = m.christoffel(x);
      ChristoffelJet<2> c1 = mp.christoffel(x);
      WeightedValHalf<2> lf = l_operator<2>(m, f, x);
      for (int k = 0; k < 2; ++k)
        worst = std::max(worst, (c1.gamma[k] - c0.gamma[k] - e * lf[k]).norm());
    }
    errs.push_back(worst);
  }
  CHECK(loglog_slope(eps, errs) == doctest::Approx(2.0).epsilon(0.08));
}

TEST_CASE("lift places components in the upper half") {
  WeightedValHalf<3> p;
  for (int k = 0; k < 3; ++k) p[k] = (k + 1.0) * Mat<3>::Identity();
  WeightedVal<3> q = lift_iota<3>(p);
  CHECK(q.size() == 6);
  for (int k = 0; k < 3; ++k) {
    CHECK(q[k].norm() == 0.0);
    CHECK((q[3 + k] - p[k]).norm() == 0.0);
  }
}

TEST_CASE("weight_phi: euclidean block form and endpoint identity") {
  Metric<2> m(euclid_spec());
  PhasePoint<2> entry{Vec<2>(-1.0, 0.0), Vec<2>(1.0, 0.0)};
  GeodesicRecord<2> rec = trace<2>(m, entry, 3.0);
  PhaseMat<2> expected = euclid_transport<2>(2.0);  // T - t with t = 1
  CHECK((weight_phi<2>(rec, 1.0) - expected).norm() < 1e-9);
  CHECK((weight_phi<2>(rec, 3.0) - PhaseMat<2>::Identity()).norm() < 1e-9);
  // past the exit the weight keeps the euclidean block form
  CHECK((weight_phi<2>(rec, 2.5) - euclid_transport<2>(0.5)).norm() < 1e-9);
}

TEST_CASE("weight_phi agrees with the direct phi-ODE on a bump metric") {
  // phi' = -phi A along the ray, phi(0) = Id; then Phi = phi(T)^{-1} phi(t).
  Metric<2> m(base_spec());
  PhasePoint<2> entry{Vec<2>(-1.0, 0.02), Vec<2>(1.0, 0.0)};
  double T = 3.0, tol = 1e-10;
  GeodesicRecord<2> rec = trace<2>(m, entry, T, tol);

  constexpr int NS = transport_state_dim<2>();
  using VecS = Eigen::Matrix<double, NS, 1>;
  auto rhs = [&](double, const VecS& y, VecS& dy) {
    PhasePoint<2> p;
    PhaseMat<2> phi;
    unpack_transport<2>(y, p, phi);
    ChristoffelJet<2> cj = m.christoffel(p.x);
    PhaseVec<2> H;
    PhaseMat<2> A;
    hamiltonian_field<2>(cj, p, H, A);
    PhaseMat<2> dphi = -phi * A;
    dy.head<4>() = H;
    for (int c = 0; c < 4; ++c) dy.segment<4>(4 + 4 * c) = dphi.col(c);
  };

  std::vector<double> sample_ts = {0.4, 0.9, 1.3, 1.8};
  VecS y;
  pack_transport<2>(entry, PhaseMat<2>::Identity(), y);
  double t_cur = 0.0;
  PhaseMat<2> phi_at_T;
  std::vector<PhaseMat<2>> phis;
  for (double t_next : sample_ts) {
    integrate_dopri5<NS>(rhs, t_cur, t_next, y, tol);
    PhasePoint<2> p;
    PhaseMat<2> phi;
    unpack_transport<2>(y, p, phi);
    phis.push_back(phi);
    // phi(t) Psi(t) = Id along the way
    CHECK((phi * rec.psi(t_next) - PhaseMat<2>::Identity()).norm() < 1e-7);
    t_cur = t_next;
  }
  integrate_dopri5<NS>(rhs, t_cur, T, y, tol);
  {
    PhasePoint<2> p;
    unpack_transport<2>(y, p, phi_at_T);
  }
  for (size_t i = 0; i < sample_ts.size(); ++i) {
    PhaseMat<2> phi_route = phi_at_T.inverse() * phis[i];
    CHECK((phi_route - weight_phi<2>(rec, sample_ts[i])).norm() < 1e-7);
  }
}

TEST_CASE("transform_I: zero field, linearity, adaptive-quadrature oracle") {
  Metric<2> m(euclid_spec());
  PhasePoint<2> entry{Vec<2>(-1.0, 0.1), Vec<2>(1.0, 0.0)};
  entry.xi = (Vec<2>(1.0, -0.05)).normalized();
  GeodesicRecord<2> rec = trace<2>(m, entry, 3.0);

  Rng rng(17);
  RandomWeightedField<2> P1(m.domain(), rng, 2);
  RandomWeightedField<2> P2(m.domain(), rng, 2);

  auto zero = [](const Vec<2>&) {
    WeightedVal<2> z;
    for (auto& mm : z) mm.setZero();
    return z;
  };
  CHECK(transform_I<2>(rec, zero, 128).norm() == 0.0);

  double a = 0.7, b = -1.3;
  auto combo = [&](const Vec<2>& x) {
    WeightedVal<2> va = P1(x), vb = P2(x), out;
    for (int k = 0; k < 4; ++k) out[k] = a * va[k] + b * vb[k];
    return out;
  };
  PhaseVec<2> lhs = transform_I<2>(rec, combo, 256);
  PhaseVec<2> rhs = a * transform_I<2>(rec, P1, 256) + b * transform_I<2>(rec, P2, 256);
  CHECK((lhs - rhs).norm() < 1e-12 * std::max(1.0, rhs.norm()));

  // adaptive Simpson oracle on each component of the integrand
  PhaseVec<2> fine = transform_I<2>(rec, P1, 4096);
  PhaseVec<2> coarse = transform_I<2>(rec, P1, 512);
  CHECK((fine - coarse).norm() <= 1e-8);

  std::function<double(double, double, double, double, double, int, int)> adapt;
  auto integrand = [&](double t, int k) {
    PhasePoint<2> p;
    PhaseMat<2> psi;
    rec.state(t, p, psi);
    WeightedVal<2> P = P1(p.x);
    PhaseVec<2> w;
    for (int c = 0; c < 4; ++c) w[c] = p.xi.dot(P[c] * p.xi);
    PhaseVec<2> val = rec.psi(rec.horizon) * psi.partialPivLu().solve(w);
    return val[k];
  };
  adapt = [&](double lo, double hi, double flo, double fhi, double fmid, int k,
              int depth) -> double {
    double mid = 0.5 * (lo + hi);
    double fl = integrand(0.5 * (lo + mid), k), fr = integrand(0.5 * (mid + hi), k);
    double s1 = (hi - lo) / 6.0 * (flo + 4 * fmid + fhi);
    double s2 = (hi - lo) / 12.0 * (flo + 4 * fl + 2 * fmid + 4 * fr + fhi);
    if (depth > 14 || std::abs(s2 - s1) < 1e-11) return s2 + (s2 - s1) / 15.0;
    return adapt(lo, mid, flo, fmid, fl, k, depth + 1) +
           adapt(mid, hi, fmid, fhi, fr, k, depth + 1);
  };
  for (int k = 0; k < 4; ++k) {
    double lo = 0.0, hi = rec.exit_time;
    double oracle =
        adapt(lo, hi, integrand(lo, k), integrand(hi, k), integrand(0.5 * (lo + hi), k), k, 0);
    CHECK(fine[k] == doctest::Approx(oracle).epsilon(1e-8).scale(1.0));
  }
}

TEST_CASE("linearization of the flow map: sign and quadratic remainder") {
  MetricSpec spec = base_spec();
  Metric<2> m(spec);
  Rng rng(23);
  BumpTensorField<2> f = random_tensor_field<2>(m.domain(), rng, 2);
  double T = 3.0, tol = 1e-11;

  auto entries = test_entries(8);
  std::vector<GeodesicRecord<2>> recs;
  for (const auto& e : entries) recs.push_back(trace<2>(m, e, T, tol));

  std::vector<double> eps = {1e-1, 3.16e-2, 1e-2, 3.16e-3, 1e-3};
  std::vector<double> errs, errs_flipped;
  for (double e : eps) {
    Metric<2> mp(f.perturb(spec, e));
    double worst = 0, worst_flip = 0;
    for (size_t i = 0; i < entries.size(); ++i) {
      PhaseVec<2> moved = trace<2>(mp, entries[i], T, tol).phase(T).packed();
      PhaseVec<2> base = recs[i].phase(T).packed();
      PhaseVec<2> xf = transform_X<2>(m, f, recs[i], 1024);
      worst = std::max(worst, (moved - base - e * xf).norm());
      worst_flip = std::max(worst_flip, (moved - base + e * xf).norm());
    }
    errs.push_back(worst);
    errs_flipped.push_back(worst_flip);
  }
  double slope = loglog_slope(eps, errs);
  CHECK(slope == doctest::Approx(2.0).epsilon(0.08));
  // with the wrong sign the remainder is first order, not second
  CHECK(loglog_slope(eps, errs_flipped) < 1.2);
}

TEST_CASE("potential fields are annihilated by the transform") {
  Metric<2> m(base_spec());
  Rng rng(31);
  BumpCovectorField<2> v = random_covector_field<2>(m.domain(), rng, 2);
  DsymField<2> dsv(m, v);
  double scale = v.c1_scale();
  REQUIRE(scale > 1e-3);

  double worst = 0.0;
  for (const auto& e : test_entries(16)) {
    GeodesicRecord<2> rec = trace<2>(m, e, 3.0, 1e-10);
    worst = std::max(worst, transform_X<2>(m, dsv, rec, 512).norm());
  }
  CHECK(worst <= 1e-6 * scale);

  // quadrature refinement: error drops at order >= 2 (in practice much faster)
  PhasePoint<2> e0{Vec<2>(-1.0, 0.0), Vec<2>(1.0, 0.03).normalized()};
  GeodesicRecord<2> rec = trace<2>(m, e0, 3.0, 1e-10);
  std::vector<double> ns = {64, 128, 256};
  std::vector<double> errs;
  for (double n : ns) errs.push_back(transform_X<2>(m, dsv, rec, (int)n).norm());
  CHECK(loglog_slope(ns, errs, 1e-12) < -2.0);
}

TEST_CASE("flow linearization in the connection coefficients") {
  // H^T(Gamma + eps G~) - H^T(Gamma) + eps I(iota G~) = O(eps^2)
  MetricSpec spec = base_spec();
  Metric<2> m(spec);
  Rng rng(41);
  std::array<BumpTensorField<2>, 2> tilde = {random_tensor_field<2>(m.domain(), rng, 1),
                                             random_tensor_field<2>(m.domain(), rng, 1)};
  double T = 3.0, tol = 1e-11;
  auto entries = test_entries(8, 77);

  auto Pi = [&](const Vec<2>& x) -> WeightedVal<2> {
    WeightedVal<2> out;
    for (int k = 0; k < 2; ++k) out[k].setZero();
    for (int k = 0; k < 2; ++k) out[2 + k] = tilde[k].value(x);
    return out;
  };

  std::vector<double> eps = {1e-1, 1e-2, 1e-3};
  std::vector<double> errs;
  for (double e : eps) {
    PerturbedConnection<2> pc{&m, &tilde, e};
    double worst = 0;
    for (const auto& en : entries) {
      GeodesicRecord<2> rec0 = trace<2>(m, en, T, tol);
      GeodesicRecord<2> rec1 = trace<2, PerturbedConnection<2>>(pc, en, T, tol);
      PhaseVec<2> ii = transform_I<2>(rec0, Pi, 1024);
      worst = std::max(worst,
                       (rec1.phase(T).packed() - rec0.phase(T).packed() + e * ii).norm());
    }
    errs.push_back(worst);
  }
  CHECK(loglog_slope(eps, errs) == doctest::Approx(2.0).epsilon(0.08));
}

TEST_CASE("through-ray weights match records traced from the boundary") {
  Metric<2> m(base_spec());
  double T = 3.0, tol = 1e-10;
  Vec<2> x(0.2, -0.1);
  Vec<2> xi = Vec<2>(0.8, 0.5).normalized();
  xi /= g_norm<2>(m, x, xi);
  ThroughRay<2> ray(m, x, xi, T, tol);

  // entry-based record of the same geodesic
  GeodesicRecord<2> rec = trace<2>(m, ray.entry(), T, tol);
  double tb = ray.t_base();
  CHECK((rec.phase(tb).packed() - PhasePoint<2>{x, xi}.packed()).norm() < 1e-8);
  CHECK(std::abs(rec.exit_time - ray.total_length()) < 1e-8);

  for (double r : {0.0, 0.3, 0.8}) {
    CHECK((ray.phi_fwd(r) - weight_phi<2>(rec, tb + r)).norm() < 1e-7);
  }

  // reversed geodesic record for the backward weights
  PhasePoint<2> rev_entry{rec.exit_point.x, -rec.exit_point.xi};
  GeodesicRecord<2> rev = trace<2>(m, rev_entry, T, tol);
  for (double r : {0.0, 0.3, 0.8}) {
    double t_rev = rec.exit_time - (tb + r);
    CHECK((ray.phi_bwd(r) - weight_phi<2>(rev, t_rev)).norm() < 1e-7);
  }
}

TEST_CASE("adjoint basics: zero data and interior isotropy") {
  Metric<2> m(euclid_spec());
  auto zero = [](const PhasePoint<2>&) { return PhaseVec<2>::Zero().eval(); };
  WeightedVal<2> z = adjoint_I<2>(m, zero, Vec<2>(0.1, 0.2), 32, 3.0);
  for (const auto& mm : z) CHECK(mm.norm() == 0.0);

  // Constant h supported in the velocity block: Phi^T fixes it, so the
  // euclidean fiber integral is independent of x. (A constant position block
  // would pick up the boundary-distance moment through Phi^T.)
  auto hconst = [](const PhasePoint<2>&) {
    PhaseVec<2> v;
    v << 0.0, 0.0, 0.5, 0.1;
    return v;
  };
  std::vector<Vec<2>> pts = {{0.0, 0.0}, {0.3, 0.1}, {-0.2, 0.25}, {0.05, -0.4}, {0.5, 0.2}};
  WeightedVal<2> ref = adjoint_I<2>(m, hconst, pts[0], 128, 3.0);
  for (size_t i = 1; i < pts.size(); ++i) {
    WeightedVal<2> cur = adjoint_I<2>(m, hconst, pts[i], 128, 3.0);
    double diff = 0;
    for (int k = 0; k < 4; ++k) diff = std::max(diff, (cur[k] - ref[k]).norm());
    CHECK(diff < 1e-6);
  }
}

TEST_CASE("santalo duality at desk quadrature") {
  // Correlated pairing h = I(Pi), so the two sides measure ||I Pi||^2 and
  // no cancellation inflates the relative mismatch. Rays are restricted to
  // |phi| <= 0.9: chords with larger inward angle miss supp(Pi) entirely.
  for (bool euclid : {true, false}) {
    CAPTURE(euclid);
    Metric<2> m(euclid ? euclid_spec() : base_spec());
    Rng rng(53);
    RandomWeightedField<2> Pi = RandomWeightedField<2>::smooth(m.domain(), rng);
    double T = 3.0, tol = 1e-9;
    auto h = [&](const PhasePoint<2>& entry) {
      GeodesicRecord<2> rec = trace<2>(m, entry, T, tol);
      return transform_I<2>(rec, Pi, 192);
    };

    // <I Pi, h> over S_-dM
    RayQuadrature2 q = inflow_rays_2d(m.domain(), 16, 8, 0.9);
    double lhs = 0.0;
    for (size_t i = 0; i < q.rays.size(); ++i) {
      GeodesicRecord<2> rec = trace<2>(m, q.rays[i], T, tol);
      lhs += q.weights[i] * h(q.rays[i]).dot(transform_I<2>(rec, Pi, 192));
    }

    // <Pi, I^+ h> over M with the weighted pairing
    int n = 25;
    double R = m.domain().radius;
    double hx = 2.0 * R / (n - 1);
    double rhs = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        Vec<2> x(-R + hx * i, -R + hx * j);
        if (x.norm() > 0.74) continue;  // support of Pi is inside M-hat
        WeightedVal<2> pv = Pi(x);
        double pnorm = 0;
        for (const auto& mm : pv) pnorm += mm.norm();
        if (pnorm < 1e-14) continue;
        double cell = 0.0;
        MetricJet<2> mj = m.jet(x);
        WeightedVal<2> av = adjoint_I<2>(m, h, x, 64, T, tol);
        for (int k = 0; k < 4; ++k)
          cell += (mj.ginv * av[k] * mj.ginv * pv[k]).trace();
        rhs += cell * mj.sqrt_det * hx * hx;
      }
    double scale = std::max(std::abs(lhs), std::abs(rhs));
    REQUIRE(scale > 1e-3);
    CHECK(std::abs(lhs - rhs) / scale < 1e-3);
  }
}

TEST_CASE("normal operator: fiber kernel vs composed form, near+far split") {
  Metric<2> m(base_spec());
  Rng rng(61);
  RandomWeightedField<2> Pi(m.domain(), rng, 1);
  double T = 3.0;
  Vec<2> x(0.15, -0.2);

  NormalOptions opt;
  opt.fiber_n = 48;
  opt.radial_n = 48;
  opt.tol = 1e-9;

  WeightedVal<2> all = normal_M_fiber<2>(m, Pi, x, opt, T);
  NormalOptions near_opt = opt;
  near_opt.split = NormalSplit::Near;
  NormalOptions far_opt = opt;
  far_opt.split = NormalSplit::Far;
  WeightedVal<2> nearv = normal_M_fiber<2>(m, Pi, x, near_opt, T);
  WeightedVal<2> farv = normal_M_fiber<2>(m, Pi, x, far_opt, T);
  double split_err = 0, norm_all = 0;
  for (int k = 0; k < 4; ++k) {
    split_err = std::max(split_err, (nearv[k] + farv[k] - all[k]).norm());
    norm_all = std::max(norm_all, all[k].norm());
  }
  REQUIRE(norm_all > 1e-8);
  CHECK(split_err <= 1e-12 * std::max(1.0, norm_all));

  WeightedVal<2> composed = normal_M_composed<2>(m, Pi, x, 48, T, 1e-9, 512);
  double diff = 0;
  for (int k = 0; k < 4; ++k) diff = std::max(diff, (composed[k] - all[k]).norm());
  CHECK(diff / norm_all <= 1e-2);

  // zero field maps to zero
  auto zero = [](const Vec<2>&) {
    WeightedVal<2> z;
    for (auto& mm : z) mm.setZero();
    return z;
  };
  WeightedVal<2> zv = normal_M_fiber<2>(m, zero, x, opt, T);
  for (const auto& mm : zv) CHECK(mm.norm() == 0.0);
}

TEST_CASE("grid first-order operator: matrix and direct application agree") {
  Metric<2> m(base_spec());
  TensorCalculus<2> calc(m, 17);
  Rng rng(71);
  VecX f(calc.num_ten_dofs());
  for (int i = 0; i < f.size(); ++i) f[i] = uniform(rng, -1, 1);
  VecX via_matrix = l_operator_matrix<2>(calc) * f;
  VecX direct = calc.l_operator_grid(f);
  CHECK((via_matrix - direct).norm() < 1e-13 * std::max(1.0, direct.norm()));
}

TEST_CASE("normal operator N on the grid") {
  Metric<2> m(base_spec());
  TensorCalculus<2> calc(m, 17);
  double T = 3.0;
  NormalOptions opt;
  opt.fiber_n = 16;
  opt.radial_n = 16;
  opt.tol = 1e-8;

  // wide cutoff covering most inflow directions
  std::vector<AlphaBump<2>> bumps;
  for (int i = 0; i < 8; ++i) {
    double th = 2.0 * M_PI * i / 8;
    Vec<2> n(std::cos(th), std::sin(th));
    AlphaBump<2> b;
    b.point = n;
    b.dir = -n;
    b.point_width = 1.2;
    b.dir_width = 1.6;
    bumps.push_back(b);
  }
  CutoffAlpha<2> alpha(std::move(bumps));

  Rng rng(73);
  BumpTensorField<2> fan = random_tensor_field<2>(m.domain(), rng, 1, 0.8);
  VecX fg = sample_tensor<2>(calc.grid(), fan);

  SUBCASE("zero cutoff gives zero") {
    CutoffAlpha<2> zero;  // empty bump list: alpha identically zero
    NormalNEvaluator<2> ev(calc, fg, zero, opt, T);
    int node = calc.grid().num_nodes() / 2;
    CHECK(ev.value(node).norm() == 0.0);
  }

  SUBCASE("potential fields are annihilated up to discretization") {
    // needs a grid fine enough that the grid L of the sampled potential is
    // close to the analytic one
    TensorCalculus<2> fine(m, 33);
    VecX fg_fine = sample_tensor<2>(fine.grid(), fan);
    BumpCovectorField<2> v = random_covector_field<2>(m.domain(), rng, 1);
    DsymField<2> dsv(m, v);
    VecX fpot = sample_tensor<2>(fine.grid(), dsv);
    NormalNEvaluator<2> ev_pot(fine, fpot, alpha, opt, T);
    NormalNEvaluator<2> ev_gen(fine, fg_fine, alpha, opt, T);
    double scale_pot = fine.norm_tensor(fpot, true);
    double scale_gen = fine.norm_tensor(fg_fine, true);
    double npot = 0, ngen = 0;
    for (int node : {fine.grid().num_nodes() / 2, fine.grid().num_nodes() / 3}) {
      npot = std::max(npot, ev_pot.value(node).norm() / scale_pot);
      ngen = std::max(ngen, ev_gen.value(node).norm() / scale_gen);
    }
    REQUIRE(ngen > 1e-10);
    CHECK(npot < 0.02 * ngen);
  }

  SUBCASE("self-adjointness on localized fields") {
    // two narrow bumps with nearby supports
    auto make_local = [&](Vec<2> c) {
      Bump b;
      b.center = {c[0], c[1]};
      b.width = 0.12;
      b.conformal = false;
      b.amplitude_matrix = {0.3, -0.1, 0.2};
      Domain fd = m.domain();
      fd.inner_radius = 0.5;
      return BumpTensorField<2>(fd, {b}, 1.0);
    };
    BumpTensorField<2> f1 = make_local(Vec<2>(0.05, 0.1));
    BumpTensorField<2> f2 = make_local(Vec<2>(-0.1, -0.05));
    VecX g1 = sample_tensor<2>(calc.grid(), f1);
    VecX g2 = sample_tensor<2>(calc.grid(), f2);
    NormalNEvaluator<2> ev1(calc, g1, alpha, opt, T);
    NormalNEvaluator<2> ev2(calc, g2, alpha, opt, T);

    double lhs = 0, rhs = 0;
    for (int node = 0; node < calc.grid().num_nodes(); ++node) {
      const MetricJet<2>& mj = calc.jet(node);
      double w = calc.grid().cell_measure(node) * mj.sqrt_det;
      Mat<2> f2v = tensor_at<2>(g2, node);
      Mat<2> f1v = tensor_at<2>(g1, node);
      if (f2v.norm() > 1e-9 * calc.norm_tensor(g2)) {
        Mat<2> nf1 = ev1.value(node);
        lhs += w * (mj.ginv * nf1 * mj.ginv * f2v).trace();
      }
      if (f1v.norm() > 1e-9 * calc.norm_tensor(g1)) {
        Mat<2> nf2 = ev2.value(node);
        rhs += w * (mj.ginv * nf2 * mj.ginv * f1v).trace();
      }
    }
    double scale = std::max(std::abs(lhs), std::abs(rhs));
    REQUIRE(scale > 1e-12);
    CHECK(std::abs(lhs - rhs) / scale < 1e-3);
  }
}
