#pragma once

#include "geoxray/fields_analytic.hpp"
#include "geoxray/xray.hpp"

namespace geoxray {

// Canonical experiment inputs shared by tests, the acceptance suite and the
// CLI drivers. Everything is seeded and analytic.

template <int D>
Bump random_tensor_bump(Rng& rng, double support_radius, double width_lo = 0.15,
                        double width_hi = 0.3, double amp = 0.3) {
  Bump b;
  Vec<D> c = random_in_ball<D>(rng, 0.6 * support_radius);
  b.center.assign(c.data(), c.data() + D);
  b.width = uniform(rng, width_lo, width_hi);
  b.conformal = false;
  b.amplitude_matrix.resize(sym_dim(D));
  for (auto& a : b.amplitude_matrix) a = uniform(rng, -amp, amp);
  return b;
}

template <int D>
BumpTensorField<D> random_tensor_field(const Domain& dom, Rng& rng, int n_bumps = 2,
                                       double cutoff_sharpness = 0.5) {
  std::vector<Bump> bumps;
  for (int i = 0; i < n_bumps; ++i)
    bumps.push_back(random_tensor_bump<D>(rng, dom.inner_radius));
  return BumpTensorField<D>(dom, std::move(bumps), cutoff_sharpness);
}

// Shipped potentials sit well inside the cutoff shoulder (centers <= 0.3 R-hat,
// gentle sharpness) so path quadratures of their transforms converge fast.
template <int D>
BumpCovectorField<D> random_covector_field(const Domain& dom, Rng& rng, int n_bumps = 2,
                                           double cutoff_sharpness = 0.8) {
  std::vector<VectorBump<D>> bumps;
  for (int i = 0; i < n_bumps; ++i) {
    VectorBump<D> b;
    b.center = random_in_ball<D>(rng, 0.3 * dom.inner_radius);
    b.width = uniform(rng, 0.2, 0.3);
    for (int k = 0; k < D; ++k) b.amplitude[k] = uniform(rng, -0.5, 0.5);
    bumps.push_back(b);
  }
  return BumpCovectorField<D>(dom, std::move(bumps), cutoff_sharpness);
}

// A random analytic weighted field (2D components, each a bump tensor field).
template <int D> class RandomWeightedField {
 public:
  RandomWeightedField(const Domain& dom, Rng& rng, int n_bumps = 1) {
    comps_.reserve(2 * D);
    for (int k = 0; k < 2 * D; ++k)
      comps_.push_back(random_tensor_field<D>(dom, rng, n_bumps));
  }

  // One broad, well-centered bump per component; resolves on coarse ray and
  // fiber quadratures.
  static RandomWeightedField smooth(const Domain& dom, Rng& rng) {
    RandomWeightedField out;
    for (int k = 0; k < 2 * D; ++k) {
      Bump b;
      Vec<D> c = random_in_ball<D>(rng, 0.2 * dom.inner_radius);
      b.center.assign(c.data(), c.data() + D);
      b.width = uniform(rng, 0.4, 0.55);
      b.conformal = false;
      b.amplitude_matrix.resize(sym_dim(D));
      for (auto& a : b.amplitude_matrix) a = uniform(rng, -0.3, 0.3);
      out.comps_.emplace_back(dom, std::vector<Bump>{b}, 1.0);
    }
    return out;
  }

  WeightedVal<D> operator()(const Vec<D>& x) const {
    WeightedVal<D> out;
    for (int k = 0; k < 2 * D; ++k) out[k] = comps_[k].value(x);
    return out;
  }

 private:
  RandomWeightedField() = default;
  std::vector<BumpTensorField<D>> comps_;
};

// Smooth compactly supported boundary function on S_-dM, built from the same
// cutoff bumps as CutoffAlpha, with a fixed vector amplitude per bump.
template <int D> class BoundaryBumpFunction {
 public:
  struct Item {
    AlphaBump<D> bump;
    PhaseVec<D> amplitude;
  };

  explicit BoundaryBumpFunction(std::vector<Item> items) : items_(std::move(items)) {}

  static BoundaryBumpFunction random(const Domain& dom, Rng& rng, int n_items = 3) {
    std::vector<Item> items;
    for (int i = 0; i < n_items; ++i) {
      Item it;
      Vec<D> n = random_unit<D>(rng);
      it.bump.point = dom.radius * n;
      Vec<D> tangential = random_unit<D>(rng);
      tangential -= tangential.dot(n) * n;
      if (tangential.norm() < 0.3) tangential = random_unit<D>(rng) - n;
      tangential.normalize();
      double phi = uniform(rng, -0.9, 0.9);
      it.bump.dir = -std::cos(phi) * n + std::sin(phi) * tangential;
      it.bump.point_width = uniform(rng, 0.4, 0.8);
      it.bump.dir_width = uniform(rng, 0.4, 0.8);
      for (int k = 0; k < 2 * D; ++k) it.amplitude[k] = uniform(rng, -1.0, 1.0);
      items.push_back(it);
    }
    return BoundaryBumpFunction(std::move(items));
  }

  PhaseVec<D> operator()(const PhasePoint<D>& entry) const {
    PhaseVec<D> out = PhaseVec<D>::Zero();
    for (const auto& it : items_) {
      double sp = (entry.x - it.bump.point).squaredNorm() /
                  (it.bump.point_width * it.bump.point_width);
      double sd =
          (entry.xi - it.bump.dir).squaredNorm() / (it.bump.dir_width * it.bump.dir_width);
      out += compact_profile(sp) * compact_profile(sd) * it.amplitude;
    }
    return out;
  }

 private:
  std::vector<Item> items_;
};

// Inflow boundary quadrature for the ball in D = 2: periodic trapezoid in the
// boundary angle, Gauss-Legendre in the inward angle, with the canonical
// weight |<nu, xi>| = cos(phi) folded in.
struct RayQuadrature2 {
  std::vector<PhasePoint<2>> rays;
  std::vector<double> weights;  // includes R * dtheta * w_phi * cos(phi)
};

inline RayQuadrature2 inflow_rays_2d(const Domain& dom, int n_theta, int n_phi,
                                     double phi_max = M_PI / 2) {
  RayQuadrature2 q;
  double dth = 2.0 * M_PI / n_theta;
  std::vector<double> pn, pw;
  gauss_legendre(n_phi, pn, pw);
  for (int i = 0; i < n_theta; ++i) {
    double th = (i + 0.5) * dth;
    Vec<2> n(std::cos(th), std::sin(th));
    Vec<2> tg(-std::sin(th), std::cos(th));
    for (int j = 0; j < n_phi; ++j) {
      double ph = phi_max * pn[j];
      PhasePoint<2> e;
      e.x = dom.radius * n;
      e.xi = -std::cos(ph) * n + std::sin(ph) * tg;
      q.rays.push_back(e);
      q.weights.push_back(dom.radius * dth * phi_max * pw[j] * std::cos(ph));
    }
  }
  return q;
}

}  // namespace geoxray
