#include "doctest.h"

#include <cmath>

#include "geoxray/sample_fields.hpp"
#include "geoxray/tensor_fields.hpp"

using namespace geoxray;

namespace {

MetricSpec euclid_spec() {
  MetricSpec s;
  s.domain.dimension = 2;
  return s;
}

// Gentle metric used for the decomposition experiments: the cutoff shoulder
// of sharper profiles is under-resolved on the coarse grids of the
// convergence ladders.
MetricSpec bump_spec() {
  MetricSpec s = euclid_spec();
  s.cutoff_sharpness = 1.0;
  Bump b;
  b.center = {0.1, -0.05};
  b.width = 0.35;
  b.conformal = true;
  b.amplitude = 0.3;
  s.bumps.push_back(b);
  Bump b2;
  b2.center = {-0.15, 0.2};
  b2.width = 0.3;
  b2.conformal = false;
  b2.amplitude_matrix = {0.12, 0.05, -0.08};
  s.bumps.push_back(b2);
  return s;
}

// Test tensor field kept well inside the cutoff shoulder.
BumpTensorField<2> decomposition_field(const Domain& dom) {
  Domain fdom = dom;
  fdom.inner_radius = 0.6;
  Bump b;
  b.center = {0.08, -0.05};
  b.width = 0.2;
  b.conformal = false;
  b.amplitude_matrix = {0.25, 0.1, -0.15};
  return BumpTensorField<2>(fdom, {b}, 1.2);
}

// Airy-type stream construction: exactly divergence-free symmetric tensor in
// the euclidean metric, from the Hessian of a compactly supported psi.
VecX airy_solenoidal(const GridSpec<2>& grid, const Domain& dom) {
  Bump b;
  b.center = {0.05, 0.1};
  b.width = 0.3;
  VecX f = VecX::Zero(grid.num_nodes() * 3);
  for (int node = 0; node < grid.num_nodes(); ++node) {
    ScalarJet<2> p = bump_profile<2>(b, 0.6, 1.0, grid.coord(node));
    Mat<2> m;
    m(0, 0) = p.hess(1, 1);
    m(0, 1) = -p.hess(0, 1);
    m(1, 0) = -p.hess(0, 1);
    m(1, 1) = p.hess(0, 0);
    set_tensor<2>(f, node, m);
  }
  return f;
}

}  // namespace

TEST_CASE("grid pair: classification, spacing, staggering") {
  Domain dom;
  Metric<2> m(euclid_spec());
  TensorCalculus<2> calc(m, 33);
  const auto& corners = calc.corner_grid();
  const auto& centers = calc.grid();
  CHECK(corners.spacing() * (corners.n() - 1) == doctest::Approx(2.0 * dom.radius));
  CHECK(centers.spacing() == doctest::Approx(corners.spacing()));
  CHECK(centers.n() == corners.n() - 1);
  for (int node = 0; node < corners.num_nodes(); ++node)
    CHECK(corners.coord(node).norm() < dom.radius);
  // center nodes sit at cell midpoints, half a spacing off the corner lattice
  Vec<2> c0 = centers.coord(0);
  double frac = (c0[0] + dom.radius) / corners.spacing();
  CHECK(std::abs(frac - std::round(frac)) == doctest::Approx(0.5));
}

TEST_CASE("dsym of a linear covector is exact away from the rim") {
  Metric<2> m(euclid_spec());
  TensorCalculus<2> calc(m, 33);
  const auto& corners = calc.corner_grid();
  VecX v = VecX::Zero(calc.num_cov_dofs());
  for (int node = 0; node < corners.num_nodes(); ++node) {
    Vec<2> x = corners.coord(node);
    v[cov_dof<2>(node, 0)] = x[1];
    v[cov_dof<2>(node, 1)] = x[0];
  }
  VecX f = calc.dsym(v);
  Mat<2> expected;
  expected << 0, 1, 1, 0;
  double h = corners.spacing();
  for (int node = 0; node < calc.grid().num_nodes(); ++node) {
    if (calc.grid().coord(node).norm() > 1.0 - 1.5 * h) continue;  // ghost-free cells
    CHECK((tensor_at<2>(f, node) - expected).norm() < 1e-12);
  }
  VecX zero = VecX::Zero(calc.num_cov_dofs());
  CHECK(calc.dsym(zero).norm() == 0.0);
}

TEST_CASE("dsym matches the analytic symmetric differential at second order") {
  Metric<2> m(bump_spec());
  Rng rng(7);
  BumpCovectorField<2> v = random_covector_field<2>(m.domain(), rng, 2);
  DsymField<2> dsv(m, v);

  std::vector<double> hs, errs;
  for (int n : {33, 65}) {
    TensorCalculus<2> calc(m, n);
    VecX vg = sample_covector<2>(calc.corner_grid(), v);
    VecX fg = calc.dsym(vg);
    double worst = 0;
    for (int node = 0; node < calc.grid().num_nodes(); ++node)
      worst = std::max(worst,
                       (tensor_at<2>(fg, node) - dsv.value(calc.grid().coord(node))).norm());
    hs.push_back(calc.grid().spacing());
    errs.push_back(worst);
  }
  CHECK(loglog_slope(hs, errs) == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("strong divergence: linear exactness and zero field") {
  Metric<2> m(euclid_spec());
  TensorCalculus<2> calc(m, 33);
  const auto& centers = calc.grid();
  VecX f = VecX::Zero(calc.num_ten_dofs());
  for (int node = 0; node < centers.num_nodes(); ++node) {
    Mat<2> mm = Mat<2>::Zero();
    mm(0, 0) = centers.coord(node)[0];
    set_tensor<2>(f, node, mm);
  }
  VecX div = calc.div_s(f);
  for (int node = 0; node < centers.num_nodes(); ++node) {
    if (!centers.fully_interior(node)) continue;
    Vec<2> d = covector_at<2>(div, node);
    CHECK(d[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(d[1]) < 1e-12);
  }
  CHECK(calc.div_s(VecX::Zero(calc.num_ten_dofs())).norm() == 0.0);
}

TEST_CASE("d^s and -delta^s are adjoint up to discretization") {
  Metric<2> m(bump_spec());
  Rng rng(11);
  BumpCovectorField<2> v = random_covector_field<2>(m.domain(), rng, 2);
  BumpTensorField<2> f = random_tensor_field<2>(m.domain(), rng, 2, 0.8);

  std::vector<double> hs, errs;
  for (int n : {17, 33}) {
    TensorCalculus<2> calc(m, n);
    VecX vg = sample_covector<2>(calc.corner_grid(), v);
    VecX fg = sample_tensor<2>(calc.grid(), f);
    double lhs = calc.inner_tensor(calc.dsym(vg), fg, true);
    // pair the strong divergence with v interpolated to the centers
    VecX vc = VecX::Zero(calc.grid().num_nodes() * 2);
    for (int node = 0; node < calc.grid().num_nodes(); ++node) {
      Vec<2> val = v.value(calc.grid().coord(node));
      for (int i = 0; i < 2; ++i) vc[cov_dof<2>(node, i)] = val[i];
    }
    double rhs = -calc.inner_cov_on(calc.grid(), vc, calc.div_s(fg), true);
    hs.push_back(calc.grid().spacing());
    errs.push_back(std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)));
  }
  CHECK(errs[1] < errs[0]);
  CHECK(errs[1] < 1e-3);
}

TEST_CASE("dirichlet elliptic solve: zero and manufactured solutions") {
  Metric<2> m(bump_spec());

  SUBCASE("zero right-hand side gives the zero solution") {
    TensorCalculus<2> calc(m, 33);
    VecX v;
    SolveReport rep = calc.solve_delta_s(VecX::Zero(calc.num_cov_dofs()), v);
    CHECK(rep.converged);
    CHECK(v.norm() == 0.0);
  }

  SUBCASE("manufactured compactly supported solution, O(h^2) recovery") {
    Rng rng(17);
    BumpCovectorField<2> v0 = random_covector_field<2>(m.domain(), rng, 2);
    DsymField<2> dsv0(m, v0);
    std::vector<double> hs, errs;
    for (int n : {33, 65, 129}) {
      TensorCalculus<2> c(m, n);
      VecX rhs = VecX::Zero(c.num_cov_dofs());
      for (int node = 0; node < c.corner_grid().num_nodes(); ++node) {
        Vec<2> r = div_s_analytic<2>(m, dsv0, c.corner_grid().coord(node));
        for (int i = 0; i < 2; ++i) rhs[cov_dof<2>(node, i)] = r[i];
      }
      VecX v;
      SolveReport rep = c.solve_delta_s(rhs, v);
      REQUIRE(rep.converged);
      VecX vex = sample_covector<2>(c.corner_grid(), v0);
      hs.push_back(c.grid().spacing());
      errs.push_back(c.norm_cov_corner(v - vex, false) / c.norm_cov_corner(vex, false));
    }
    CHECK(loglog_slope(hs, errs) == doctest::Approx(2.0).epsilon(0.25));
  }

  SUBCASE("euclidean sine field under the ball cutoff") {
    Metric<2> me(euclid_spec());
    // psi = sin(pi x) sin(pi y) * chi(|x|^2); v0 = (psi, 0)
    double rhat = me.domain().inner_radius;
    double s = 0.5 * rhat;
    auto psi_jet = [&](const Vec<2>& x, double& val, Vec<2>& grad, Mat<2>& hess) {
      double u = x.squaredNorm();
      double c, c1, c2;
      detail::cutoff_u(u, rhat * rhat, s * s, c, c1, c2);
      Vec<2> dchi = 2.0 * c1 * x;
      Mat<2> d2chi = 4.0 * c2 * x * x.transpose() + 2.0 * c1 * Mat<2>::Identity();
      double sx = std::sin(M_PI * x[0]), cx = std::cos(M_PI * x[0]);
      double sy = std::sin(M_PI * x[1]), cy = std::cos(M_PI * x[1]);
      double f = sx * sy;
      Vec<2> df(M_PI * cx * sy, M_PI * sx * cy);
      Mat<2> d2f;
      d2f << -M_PI * M_PI * f, M_PI * M_PI * cx * cy, M_PI * M_PI * cx * cy,
          -M_PI * M_PI * f;
      val = f * c;
      grad = df * c + f * dchi;
      hess = d2f * c + df * dchi.transpose() + dchi * df.transpose() + f * d2chi;
    };
    std::vector<double> hs, errs;
    for (int n : {33, 65, 129}) {
      TensorCalculus<2> c(me, n);
      VecX rhs = VecX::Zero(c.num_cov_dofs());
      VecX vex = VecX::Zero(c.num_cov_dofs());
      for (int node = 0; node < c.corner_grid().num_nodes(); ++node) {
        double val;
        Vec<2> grad;
        Mat<2> hess;
        psi_jet(c.corner_grid().coord(node), val, grad, hess);
        // Delta^s (psi, 0) = (1/2 (psi_11 + lap psi), 1/2 psi_12) in flat metric
        rhs[cov_dof<2>(node, 0)] = 0.5 * (hess(0, 0) + hess.trace());
        rhs[cov_dof<2>(node, 1)] = 0.5 * hess(0, 1);
        vex[cov_dof<2>(node, 0)] = val;
      }
      VecX v;
      SolveReport rep = c.solve_delta_s(rhs, v);
      REQUIRE(rep.converged);
      hs.push_back(c.grid().spacing());
      errs.push_back(c.norm_cov_corner(v - vex, false) / c.norm_cov_corner(vex, false));
    }
    CHECK(loglog_slope(hs, errs) == doctest::Approx(2.0).epsilon(0.25));
  }
}

TEST_CASE("solenoidal projection") {
  Metric<2> m(bump_spec());

  SUBCASE("zero maps to zero") {
    TensorCalculus<2> calc(m, 33);
    VecX fs, v;
    SolveReport rep = calc.solenoidal_project(VecX::Zero(calc.num_ten_dofs()), fs, v);
    CHECK(rep.converged);
    CHECK(fs.norm() == 0.0);
    CHECK(v.norm() == 0.0);
  }

  SUBCASE("potential input projects to zero at O(h^2)") {
    Rng rng(19);
    BumpCovectorField<2> v0 = random_covector_field<2>(m.domain(), rng, 2);
    DsymField<2> dsv0(m, v0);
    std::vector<double> hs, errs;
    for (int n : {33, 65, 129}) {
      TensorCalculus<2> c(m, n);
      VecX f = sample_tensor<2>(c.grid(), dsv0);
      VecX fs, v;
      REQUIRE(c.solenoidal_project(f, fs, v).converged);
      hs.push_back(c.grid().spacing());
      errs.push_back(c.norm_tensor(fs) / c.norm_tensor(f));
    }
    CHECK(loglog_slope(hs, errs) == doctest::Approx(2.0).epsilon(0.25));
  }

  SUBCASE("exactly solenoidal input leaves a small potential part") {
    Metric<2> me(euclid_spec());
    std::vector<double> hs, errs;
    for (int n : {33, 65}) {
      TensorCalculus<2> c(me, n);
      VecX f = airy_solenoidal(c.grid(), me.domain());
      VecX fs, v;
      REQUIRE(c.solenoidal_project(f, fs, v).converged);
      hs.push_back(c.grid().spacing());
      errs.push_back(c.norm_cov_corner(v, false) / c.norm_tensor(f, false));
    }
    CHECK(loglog_slope(hs, errs) > 1.6);
  }

  SUBCASE("reassembly, idempotence, orthogonality, annihilation") {
    BumpTensorField<2> f = decomposition_field(m.domain());
    TensorCalculus<2> calc(m, 65);
    VecX fg = sample_tensor<2>(calc.grid(), f);
    VecX fs, v;
    REQUIRE(calc.solenoidal_project(fg, fs, v).converged);

    // exact reassembly by construction
    CHECK((fg - (fs + calc.dsym(v))).norm() < 1e-13 * fg.norm());

    // idempotence: projecting f^s changes it very little
    VecX fs2, v2;
    REQUIRE(calc.solenoidal_project(fs, fs2, v2).converged);
    CHECK((fs2 - fs).norm() / fs.norm() < 1e-7);

    // orthogonality in the weighted pairing
    double ortho = std::abs(calc.inner_tensor(fs, calc.dsym(v), true)) /
                   (calc.norm_tensor(fs) * std::max(1e-30, calc.norm_tensor(calc.dsym(v))));
    CHECK(ortho < 1e-8);

    // the strong divergence of f^s is small on the support region
    double ann = calc.div_residual_norm(fs, 0.75) / calc.norm_tensor(fg, true);
    CHECK(ann < 0.02);
  }

  SUBCASE("annihilation shrinks at second order") {
    BumpTensorField<2> f = decomposition_field(m.domain());
    std::vector<double> hs, ann;
    for (int n : {33, 65, 129}) {
      TensorCalculus<2> c(m, n);
      VecX fg = sample_tensor<2>(c.grid(), f);
      VecX fs, v;
      REQUIRE(c.solenoidal_project(fg, fs, v, 1e-12).converged);
      hs.push_back(c.grid().spacing());
      ann.push_back(c.div_residual_norm(fs, 0.75) / c.norm_tensor(fg, true));
    }
    CHECK(loglog_slope(hs, ann) == doctest::Approx(2.0).epsilon(0.3));
  }
}

TEST_CASE("inner products and discrete norms") {
  Metric<2> me(euclid_spec());
  Metric<2> mb(bump_spec());
  TensorCalculus<2> ce(me, 33);
  TensorCalculus<2> cb(mb, 33);
  Rng rng(31);
  BumpTensorField<2> f = random_tensor_field<2>(me.domain(), rng, 2);
  VecX fg = sample_tensor<2>(ce.grid(), f);

  // euclidean: weighted and flat coincide
  CHECK(ce.inner_tensor(fg, fg, true) == doctest::Approx(ce.inner_tensor(fg, fg, false)));

  // positivity
  CHECK(cb.inner_tensor(fg, fg, true) > 0.0);
  CHECK(ce.inner_tensor(VecX::Zero(fg.size()), VecX::Zero(fg.size()), true) == 0.0);

  // weighted/flat ratio bounded by sampled eigenvalue bounds of g
  double lo = 1e300, hi = -1e300;
  for (int node = 0; node < cb.grid().num_nodes(); ++node) {
    const MetricJet<2>& mj = cb.jet(node);
    Eigen::SelfAdjointEigenSolver<Mat<2>> es(mj.g);
    double lmin = es.eigenvalues().minCoeff(), lmax = es.eigenvalues().maxCoeff();
    lo = std::min(lo, mj.sqrt_det / (lmax * lmax));
    hi = std::max(hi, mj.sqrt_det / (lmin * lmin));
  }
  double ratio = cb.inner_tensor(fg, fg, true) / cb.inner_tensor(fg, fg, false);
  CHECK(ratio >= lo);
  CHECK(ratio <= hi);

  // discrete Sobolev norms
  CHECK(ce.norm_hk_tensor(VecX::Zero(fg.size()), 2) == 0.0);
  double h0 = ce.norm_hk_tensor(fg, 0), h1 = ce.norm_hk_tensor(fg, 1),
         h2 = ce.norm_hk_tensor(fg, 2);
  CHECK(h0 <= h1);
  CHECK(h1 <= h2);
  CHECK(ce.norm_hk_tensor((3.0 * fg).eval(), 1) == doctest::Approx(3.0 * h1));
}

TEST_CASE("pointwise symmetric splitting") {
  SUBCASE("worked 2d example") {
    Mat<2> f = Mat<2>::Identity();
    Vec<2> x(1.0, 0.0);
    Mat<2> h;
    Vec<2> v;
    pointwise_decompose<2>(f, x, h, v);
    Mat<2> hexp;
    hexp << 0, 0, 0, 1;
    CHECK((h - hexp).norm() < 1e-14);
    CHECK((v - Vec<2>(1.0, 0.0)).norm() < 1e-14);
  }

  SUBCASE("pure symmetric products are recovered exactly") {
    Rng rng(37);
    for (int trial = 0; trial < 20; ++trial) {
      Vec<2> x = random_unit<2>(rng) * uniform(rng, 0.3, 2.0);
      Vec<2> v0(uniform(rng, -1, 1), uniform(rng, -1, 1));
      Mat<2> f = sym_outer<2>(v0, x);
      Mat<2> h;
      Vec<2> v;
      pointwise_decompose<2>(f, x, h, v);
      CHECK(h.norm() < 1e-12);
      CHECK((v - v0).norm() < 1e-12);
    }
  }

  SUBCASE("3d random case against a dense linear-system oracle") {
    Rng rng(41);
    for (int trial = 0; trial < 10; ++trial) {
      Vec<3> x = random_unit<3>(rng) * uniform(rng, 0.5, 1.5);
      Mat<3> f;
      for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) f(i, j) = f(j, i) = uniform(rng, -1, 1);
      Mat<3> h;
      Vec<3> v;
      pointwise_decompose<3>(f, x, h, v);
      CHECK((h + sym_outer<3>(v, x) - f).norm() < 1e-12);
      CHECK((h * x).norm() < 1e-12);

      // oracle: unknowns (h packed, v), equations (reassembly, j_x h = 0)
      MatX A = MatX::Zero(9, 9);
      VecX b = VecX::Zero(9);
      auto pairs = sym_pairs<3>();
      for (int r = 0; r < 6; ++r) {
        auto [i, j] = pairs[r];
        A(r, r) = 1.0;
        A(r, 6 + i) += 0.5 * x[j];
        A(r, 6 + j) += 0.5 * x[i];
        b[r] = f(i, j);
      }
      for (int i = 0; i < 3; ++i)
        for (int p = 0; p < 6; ++p) {
          auto [a1, a2] = pairs[p];
          if (a1 == i) A(6 + i, p) += x[a2];
          if (a2 == i && a1 != a2) A(6 + i, p) += x[a1];
        }
      VecX sol = A.fullPivLu().solve(b);
      Mat<3> h_oracle = sym_unpack<3>(Eigen::Matrix<double, 6, 1>(sol.head<6>()));
      Vec<3> v_oracle = sol.tail<3>();
      CHECK((h - h_oracle).norm() < 1e-10);
      CHECK((v - v_oracle).norm() < 1e-10);
    }
  }

  SUBCASE("zero direction is rejected") {
    Mat<2> h;
    Vec<2> v;
    CHECK_THROWS_AS(pointwise_decompose<2>(Mat<2>::Identity(), Vec<2>::Zero(), h, v),
                    std::invalid_argument);
  }
}

TEST_CASE("tensor field export/import round trip") {
  Metric<2> m(bump_spec());
  TensorCalculus<2> calc(m, 17);
  Rng rng(43);
  BumpTensorField<2> f = random_tensor_field<2>(m.domain(), rng, 1);
  VecX fg = sample_tensor<2>(calc.grid(), f);
  std::string path = "/tmp/geoxray_field_test.txt";
  export_tensor_field<2>(calc.grid(), fg, path);
  VecX back = import_tensor_field<2>(calc.grid(), path);
  CHECK((back - fg).norm() == 0.0);
}
