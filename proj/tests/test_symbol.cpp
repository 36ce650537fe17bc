#include "doctest.h"

#include <cmath>

#include "geoxray/symbol.hpp"

using namespace geoxray;

namespace {

MetricSpec euclid_spec(int d = 2) {
  MetricSpec s;
  s.domain.dimension = d;
  return s;
}

MetricSpec bump_spec(int d = 2) {
  MetricSpec s = euclid_spec(d);
  Bump b;
  b.center.assign(d, 0.0);
  b.center[0] = 0.1;
  b.width = 0.3;
  b.conformal = true;
  b.amplitude = 0.25;
  s.bumps.push_back(b);
  return s;
}

}  // namespace

TEST_CASE("symbol of M1 in the euclidean plane against the two-point closed form") {
  Metric<2> m(euclid_spec());
  Vec<2> x(0.15, -0.1);
  Vec<2> omega = Vec<2>(0.6, 0.8).normalized();
  SymbolOptions<2> opt;
  opt.horizon = 3.0;
  MatX sig = symbol_M1<2>(m, nullptr, x, omega, opt);

  // independent evaluation: xi0 = rotate(omega, 90deg); Phi = E(T - t_x)
  Vec<2> xi0(-omega[1], omega[0]);
  MatX oracle = MatX::Zero(12, 12);
  for (double sign : {1.0, -1.0}) {
    Vec<2> xi = sign * xi0;
    double b = x.dot(xi);
    double t_x = b + std::sqrt(b * b + 1.0 - x.squaredNorm());
    PhaseMat<2> E = euclid_transport<2>(opt.horizon - t_x);
    PhaseMat<2> B = E.transpose() * E;
    auto pairs = sym_pairs<2>();
    for (int k = 0; k < 4; ++k)
      for (int kp = 0; kp < 4; ++kp)
        for (int p = 0; p < 3; ++p)
          for (int q = 0; q < 3; ++q) {
            auto [i, j] = pairs[p];
            auto [mm, nn] = pairs[q];
            double mult = (mm == nn) ? 1.0 : 2.0;
            oracle(k * 3 + p, kp * 3 + q) +=
                M_PI * B(k, kp) * xi[i] * xi[j] * mult * xi[mm] * xi[nn];
          }
  }
  CHECK((sig - oracle).norm() / oracle.norm() < 1e-6);
}

TEST_CASE("symbol symmetries") {
  Metric<2> m(bump_spec());
  Vec<2> x(0.05, 0.1);
  Vec<2> omega = Vec<2>(1.0, 0.4).normalized();
  SymbolOptions<2> opt;
  opt.horizon = 3.0;

  MatX s1 = symbol_M1<2>(m, nullptr, x, omega, opt);
  MatX s2 = symbol_M1<2>(m, nullptr, x, (-omega).eval(), opt);
  CHECK((s1 - s2).norm() / s1.norm() < 1e-12);

  // degree -1 homogeneity by explicit rescaling
  MatX s4 = symbol_M1<2>(m, nullptr, x, (2.0 * omega).eval(), opt);
  CHECK((s4 - 0.5 * s1).norm() / s1.norm() < 1e-12);

  // empty cutoff means alpha identically zero
  CutoffAlpha<2> zero_alpha;
  MatX s0 = symbol_M1<2>(m, &zero_alpha, x, omega, opt);
  CHECK(s0.norm() == 0.0);
}

TEST_CASE("kernel structure of the M1 symbol") {
  for (bool euclid : {true, false}) {
    CAPTURE(euclid);
    Metric<2> m(euclid ? euclid_spec() : bump_spec());
    Vec<2> x(0.1, -0.05);
    Vec<2> omega = Vec<2>(0.3, -1.0).normalized();
    SymbolOptions<2> opt;
    opt.horizon = 3.0;
    CutoffAlpha<2> alpha = make_complete_alpha<2>(m, x, omega, opt.horizon);
    MatX M1 = symbol_M1<2>(m, &alpha, x, omega, opt);
    M1KernelReport<2> rep = m1_kernel_analysis<2>(M1, m, x, omega);
    CHECK(rep.kernel_dim == 2 * 2 * 2);  // dimension D per R^{2D} block
    CHECK(rep.max_principal_angle <= 1e-4);
    CHECK(rep.kernel_dim + rep.rank == 12);
  }
}

TEST_CASE("N1 symbol annihilates symmetrized products with omega") {
  Metric<2> m(bump_spec());
  Rng rng(3);
  SymbolOptions<2> opt;
  opt.horizon = 3.0;
  for (int trial = 0; trial < 4; ++trial) {
    Vec<2> x = random_in_ball<2>(rng, 0.3);
    Vec<2> omega = random_unit<2>(rng);
    CutoffAlpha<2> alpha = make_complete_alpha<2>(m, x, omega, opt.horizon);
    MatX N1 = symbol_N1<2>(m, &alpha, x, omega, opt);
    double opnorm = N1.norm();
    REQUIRE(opnorm > 1e-12);
    for (int k = 0; k < 3; ++k) {
      Vec<2> v = random_unit<2>(rng);
      VecX f = sym_pack<2>(sym_outer<2>(v, omega));
      CHECK((N1 * f).norm() <= 1e-6 * opnorm * f.norm());
    }
  }
}

TEST_CASE("N1 kernel dimension and positivity, d = 2") {
  for (bool euclid : {true, false}) {
    CAPTURE(euclid);
    Metric<2> m(euclid ? euclid_spec() : bump_spec());
    Rng rng(11);
    SymbolOptions<2> opt;
    opt.horizon = 3.0;
    for (int trial = 0; trial < 4; ++trial) {
      Vec<2> x = random_in_ball<2>(rng, 0.25);
      Vec<2> omega = random_unit<2>(rng);
      CutoffAlpha<2> alpha = make_complete_alpha<2>(m, x, omega, opt.horizon);
      MatX N1 = symbol_N1<2>(m, &alpha, x, omega, opt);
      SymbolKernelReport rep = kernel_analysis<2>(N1, m, x, omega);
      CHECK(rep.kernel_dim == 2);
      CHECK(rep.rank == 1);
      CHECK(rep.max_principal_angle <= 1e-4);
      CHECK(rep.min_rayleigh > 0.0);
    }
  }
}

TEST_CASE("N1 kernel dimension and positivity, d = 3") {
  Metric<3> m(bump_spec(3));
  Rng rng(13);
  SymbolOptions<3> opt;
  opt.horizon = 3.0;
  opt.n_quad = 32;
  for (int trial = 0; trial < 2; ++trial) {
    Vec<3> x = random_in_ball<3>(rng, 0.2);
    Vec<3> omega = random_unit<3>(rng);
    CutoffAlpha<3> alpha = make_complete_alpha<3>(m, x, omega, opt.horizon, 8);
    MatX N1 = symbol_N1<3>(m, &alpha, x, omega, opt);
    SymbolKernelReport rep = kernel_analysis<3>(N1, m, x, omega);
    CHECK(rep.kernel_dim == 3);
    CHECK(rep.rank == 3);
    CHECK(rep.max_principal_angle <= 1e-4);
    CHECK(rep.min_rayleigh > 0.0);
  }
}
