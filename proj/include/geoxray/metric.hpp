#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "geoxray/linalg.hpp"
#include "geoxray/numerics.hpp"

namespace geoxray {

// Open ball M of the given radius; the metric may differ from the Euclidean
// one only inside the concentric ball of inner_radius (M-hat).
struct Domain {
  int dimension = 2;
  double radius = 1.0;
  double inner_radius = 0.75;

  void validate() const {
    if (dimension < 2) throw std::invalid_argument("domain: dimension must be >= 2");
    if (!(0.0 < inner_radius && inner_radius < radius))
      throw std::invalid_argument("domain: need 0 < inner_radius < radius");
  }
};

// One Gaussian-profile perturbation. Conformal bumps add amplitude*profile*I,
// anisotropic ones add profile * (packed symmetric amplitude matrix).
struct Bump {
  std::vector<double> center;     // dimension entries
  double width = 0.3;             // Gaussian sigma
  bool conformal = true;
  double amplitude = 0.0;         // conformal amplitude
  std::vector<double> amplitude_matrix;  // sym-packed, anisotropic case
};

struct MetricSpec {
  Domain domain;
  std::vector<Bump> bumps;
  // Flat-top cutoff chi(x) = exp(-s^2 / (inner_radius^2 - |x|^2)), s = sharpness * inner_radius.
  // Multiplies every bump profile, so g - e vanishes identically outside M-hat.
  double cutoff_sharpness = 0.5;

  bool euclidean() const { return bumps.empty(); }
};

// Value, gradient and Hessian of a scalar profile.
template <int D> struct ScalarJet {
  double value = 0.0;
  Vec<D> grad = Vec<D>::Zero();
  Mat<D> hess = Mat<D>::Zero();
};

// Metric, inverse, sqrt(det) and first/second coordinate derivatives at a point.
template <int D> struct MetricJet {
  Mat<D> g;
  Mat<D> ginv;
  double sqrt_det = 1.0;
  std::array<Mat<D>, D> dg;                  // dg[k](i,j) = d_k g_ij
  std::array<std::array<Mat<D>, D>, D> ddg;  // ddg[k][l] = d_k d_l g
};

// Christoffel symbols Gamma^k_ij and their coordinate derivatives.
template <int D> struct ChristoffelJet {
  std::array<Mat<D>, D> gamma;                  // gamma[k](i,j) = Gamma^k_ij
  std::array<std::array<Mat<D>, D>, D> dgamma;  // dgamma[m][k] = d_m Gamma^k
};

namespace detail {

// chi(u) = exp(-s2/(r2hat - u)) as a function of u = |x|^2, with d/du jets.
inline void cutoff_u(double u, double r2hat, double s2, double& c, double& c1, double& c2) {
  if (u >= r2hat) { c = c1 = c2 = 0.0; return; }
  double inv = 1.0 / (r2hat - u);
  double f = -s2 * inv;
  double f1 = -s2 * inv * inv;
  double f2 = -2.0 * s2 * inv * inv * inv;
  c = std::exp(f);
  c1 = f1 * c;
  c2 = (f2 + f1 * f1) * c;
}

}  // namespace detail

// Smooth compactly supported profile of one bump (Gaussian times cutoff),
// exactly zero for |x| >= inner_radius.
template <int D>
ScalarJet<D> bump_profile(const Bump& b, double inner_radius, double sharpness, const Vec<D>& x) {
  ScalarJet<D> out;
  double u = x.squaredNorm();
  double r2hat = inner_radius * inner_radius;
  if (u >= r2hat) return out;

  double s = sharpness * inner_radius;
  double c, c1, c2;
  detail::cutoff_u(u, r2hat, s * s, c, c1, c2);
  // x-derivatives of chi through u = |x|^2
  Vec<D> dchi = 2.0 * c1 * x;
  Mat<D> d2chi = 4.0 * c2 * x * x.transpose() + 2.0 * c1 * Mat<D>::Identity();

  Vec<D> cen;
  for (int i = 0; i < D; ++i) cen[i] = b.center.at(i);
  Vec<D> r = x - cen;
  double s2 = b.width * b.width;
  double gauss = std::exp(-r.squaredNorm() / (2.0 * s2));
  Vec<D> dg = (-1.0 / s2) * gauss * r;
  Mat<D> d2g = gauss * (r * r.transpose() / (s2 * s2) - Mat<D>::Identity() / s2);

  out.value = gauss * c;
  out.grad = dg * c + gauss * dchi;
  out.hess = d2g * c + dg * dchi.transpose() + dchi * dg.transpose() + gauss * d2chi;
  return out;
}

template <int D> class Metric {
 public:
  explicit Metric(MetricSpec spec) : spec_(std::move(spec)) {
    spec_.domain.validate();
    if (spec_.domain.dimension != D)
      throw std::invalid_argument("metric: spec dimension does not match template dimension");
    for (const auto& b : spec_.bumps) {
      if ((int)b.center.size() != D)
        throw std::invalid_argument("metric: bump center has wrong dimension");
      if (!b.conformal && (int)b.amplitude_matrix.size() != sym_dim(D))
        throw std::invalid_argument("metric: anisotropic bump needs sym-packed amplitude matrix");
      if (b.width <= 0.0) throw std::invalid_argument("metric: bump width must be positive");
    }
  }

  const MetricSpec& spec() const { return spec_; }
  const Domain& domain() const { return spec_.domain; }

  // Metric matrix only, with no invertibility requirement.
  Mat<D> metric_matrix(const Vec<D>& x) const {
    Mat<D> g = Mat<D>::Identity();
    if (x.squaredNorm() < spec_.domain.inner_radius * spec_.domain.inner_radius)
      for (const auto& b : spec_.bumps)
        g += bump_profile<D>(b, spec_.domain.inner_radius, spec_.cutoff_sharpness, x).value *
             amplitude_matrix(b);
    return g;
  }

  // Metric jet; defined on all of R^D (identity outside the support ball).
  MetricJet<D> jet(const Vec<D>& x) const {
    MetricJet<D> out;
    out.g = Mat<D>::Identity();
    for (auto& m : out.dg) m.setZero();
    for (auto& row : out.ddg)
      for (auto& m : row) m.setZero();

    if (x.squaredNorm() < spec_.domain.inner_radius * spec_.domain.inner_radius) {
      for (const auto& b : spec_.bumps) {
        ScalarJet<D> p = bump_profile<D>(b, spec_.domain.inner_radius, spec_.cutoff_sharpness, x);
        Mat<D> amp = amplitude_matrix(b);
        out.g += p.value * amp;
        for (int k = 0; k < D; ++k) out.dg[k] += p.grad[k] * amp;
        for (int k = 0; k < D; ++k)
          for (int l = 0; l < D; ++l) out.ddg[k][l] += p.hess(k, l) * amp;
      }
    }
    double det = out.g.determinant();
    if (det <= 0.0) throw std::runtime_error("metric: non-positive determinant at sample point");
    out.ginv = out.g.inverse();
    out.sqrt_det = std::sqrt(det);
    return out;
  }

  // Checked evaluation: x must lie in the closed ball.
  MetricJet<D> eval(const Vec<D>& x) const {
    require_in_domain(x);
    return jet(x);
  }

  ChristoffelJet<D> christoffel_from(const MetricJet<D>& mj) const {
    ChristoffelJet<D> out;
    // C_lij = d_i g_jl + d_j g_il - d_l g_ij
    std::array<Mat<D>, D> C;  // C[l](i,j)
    for (int l = 0; l < D; ++l)
      for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j)
          C[l](i, j) = mj.dg[i](j, l) + mj.dg[j](i, l) - mj.dg[l](i, j);
    for (int k = 0; k < D; ++k) {
      out.gamma[k].setZero();
      for (int l = 0; l < D; ++l) out.gamma[k] += 0.5 * mj.ginv(k, l) * C[l];
    }
    // d_m ginv = -ginv dg[m] ginv
    std::array<Mat<D>, D> dginv;
    for (int m = 0; m < D; ++m) dginv[m] = -mj.ginv * mj.dg[m] * mj.ginv;
    for (int m = 0; m < D; ++m)
      for (int k = 0; k < D; ++k) {
        out.dgamma[m][k].setZero();
        for (int l = 0; l < D; ++l) {
          out.dgamma[m][k] += 0.5 * dginv[m](k, l) * C[l];
          Mat<D> dC;
          for (int i = 0; i < D; ++i)
            for (int j = 0; j < D; ++j)
              dC(i, j) = mj.ddg[m][i](j, l) + mj.ddg[m][j](i, l) - mj.ddg[m][l](i, j);
          out.dgamma[m][k] += 0.5 * mj.ginv(k, l) * dC;
        }
      }
    return out;
  }

  ChristoffelJet<D> christoffel(const Vec<D>& x) const { return christoffel_from(jet(x)); }

  ChristoffelJet<D> christoffel_checked(const Vec<D>& x) const {
    require_in_domain(x);
    return christoffel(x);
  }

  void require_in_domain(const Vec<D>& x) const {
    if (x.norm() > spec_.domain.radius * (1.0 + 1e-12))
      throw std::invalid_argument("metric: point outside closure(M)");
  }

  // Minimum eigenvalue of g over a dense grid in M.
  double sampled_min_eigenvalue(int n_per_axis = 41) const {
    double mn = std::numeric_limits<double>::max();
    double R = spec_.domain.radius;
    std::vector<int> idx(D, 0);
    int total = 1;
    for (int i = 0; i < D; ++i) total *= n_per_axis;
    for (int flat = 0; flat < total; ++flat) {
      int rem = flat;
      Vec<D> x;
      for (int i = 0; i < D; ++i) {
        int ii = rem % n_per_axis;
        rem /= n_per_axis;
        x[i] = -R + 2.0 * R * ii / (n_per_axis - 1);
      }
      if (x.norm() > R) continue;
      Eigen::SelfAdjointEigenSolver<Mat<D>> es(metric_matrix(x));
      mn = std::min(mn, es.eigenvalues().minCoeff());
    }
    return mn;
  }

 private:
  Mat<D> amplitude_matrix(const Bump& b) const {
    if (b.conformal) return b.amplitude * Mat<D>::Identity();
    Eigen::Matrix<double, sym_dim(D), 1> packed;
    for (int k = 0; k < sym_dim(D); ++k) packed[k] = b.amplitude_matrix[k];
    return sym_unpack<D>(packed);
  }

  MetricSpec spec_;
};

struct SupportReport {
  double max_deviation_on_annulus = 0.0;  // max |g - e| on inner_radius <= |x| <= radius
  double min_eigenvalue = 1.0;
  bool flat_outside_support = false;
  bool positive_definite = false;
  bool ok() const { return flat_outside_support && positive_definite; }
};

// Samples the annulus between M-hat and the boundary (deviation must be exactly
// zero there) and the interior (eigenvalues must stay positive).
template <int D>
SupportReport verify_support(const Metric<D>& metric, int annulus_samples = 10000,
                             int grid_per_axis = 41, unsigned long long seed = 12345) {
  SupportReport rep;
  const auto& dom = metric.domain();
  Rng rng(seed);
  for (int s = 0; s < annulus_samples; ++s) {
    double r = uniform(rng, dom.inner_radius, dom.radius);
    Vec<D> x = r * random_unit<D>(rng);
    Mat<D> dev = metric.jet(x).g - Mat<D>::Identity();
    rep.max_deviation_on_annulus =
        std::max(rep.max_deviation_on_annulus, dev.template lpNorm<Eigen::Infinity>());
  }
  rep.flat_outside_support = (rep.max_deviation_on_annulus == 0.0);
  rep.min_eigenvalue = metric.sampled_min_eigenvalue(grid_per_axis);
  rep.positive_definite = (rep.min_eigenvalue > 0.0);
  return rep;
}

}  // namespace geoxray
