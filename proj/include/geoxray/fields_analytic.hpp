#pragma once

#include <vector>

#include "geoxray/metric.hpp"

namespace geoxray {

// Value and first derivatives of a symmetric-matrix field.
template <int D> struct TensorJet {
  Mat<D> value = Mat<D>::Zero();
  std::array<Mat<D>, D> deriv{};  // deriv[k] = d_k f
};

// Value, first and second derivatives.
template <int D> struct TensorJet2 {
  Mat<D> value = Mat<D>::Zero();
  std::array<Mat<D>, D> deriv{};
  std::array<std::array<Mat<D>, D>, D> dderiv{};
};

// Smooth symmetric 2-tensor field built from Gaussian bumps under the same
// flat-top cutoff as the metric family, so it is supported strictly inside
// the inner ball and all derivatives are available in closed form.
template <int D> class BumpTensorField {
 public:
  BumpTensorField(Domain domain, std::vector<Bump> bumps, double cutoff_sharpness = 0.5)
      : domain_(domain), bumps_(std::move(bumps)), sharpness_(cutoff_sharpness) {
    for (auto& b : bumps_) {
      if ((int)b.center.size() != D)
        throw std::invalid_argument("tensor field: bump center has wrong dimension");
      if (!b.conformal && (int)b.amplitude_matrix.size() != sym_dim(D))
        throw std::invalid_argument("tensor field: bad amplitude matrix");
    }
  }

  const Domain& domain() const { return domain_; }
  const std::vector<Bump>& bumps() const { return bumps_; }

  Mat<D> value(const Vec<D>& x) const { return jet2(x).value; }
  TensorJet<D> jet(const Vec<D>& x) const {
    TensorJet2<D> j = jet2(x);
    TensorJet<D> out;
    out.value = j.value;
    out.deriv = j.deriv;
    return out;
  }

  TensorJet2<D> jet2(const Vec<D>& x) const {
    TensorJet2<D> out;
    for (auto& m : out.deriv) m.setZero();
    for (auto& row : out.dderiv)
      for (auto& m : row) m.setZero();
    if (x.squaredNorm() >= domain_.inner_radius * domain_.inner_radius) return out;
    for (const auto& b : bumps_) {
      ScalarJet<D> p = bump_profile<D>(b, domain_.inner_radius, sharpness_, x);
      Mat<D> amp = amplitude(b);
      out.value += p.value * amp;
      for (int k = 0; k < D; ++k) out.deriv[k] += p.grad[k] * amp;
      for (int k = 0; k < D; ++k)
        for (int l = 0; l < D; ++l) out.dderiv[k][l] += p.hess(k, l) * amp;
    }
    return out;
  }

  // The metric spec for g + eps * f within the same analytic family.
  MetricSpec perturb(const MetricSpec& base, double eps) const {
    MetricSpec out = base;
    for (const auto& b : bumps_) {
      Bump scaled = b;
      if (scaled.conformal)
        scaled.amplitude *= eps;
      else
        for (auto& a : scaled.amplitude_matrix) a *= eps;
      out.bumps.push_back(scaled);
    }
    return out;
  }

 private:
  Mat<D> amplitude(const Bump& b) const {
    if (b.conformal) return b.amplitude * Mat<D>::Identity();
    Eigen::Matrix<double, sym_dim(D), 1> packed;
    for (int k = 0; k < sym_dim(D); ++k) packed[k] = b.amplitude_matrix[k];
    return sym_unpack<D>(packed);
  }

  Domain domain_;
  std::vector<Bump> bumps_;
  double sharpness_;
};

// One vector-amplitude bump for covector fields.
template <int D> struct VectorBump {
  Vec<D> center = Vec<D>::Zero();
  double width = 0.3;
  Vec<D> amplitude = Vec<D>::Zero();
};

// Smooth compactly supported covector field with closed-form first and second
// derivatives; used for potentials v (vanishing near the boundary, hence an
// H^1_0 element with room to spare).
template <int D> class BumpCovectorField {
 public:
  BumpCovectorField(Domain domain, std::vector<VectorBump<D>> bumps,
                    double cutoff_sharpness = 0.5)
      : domain_(domain), bumps_(std::move(bumps)), sharpness_(cutoff_sharpness) {}

  const Domain& domain() const { return domain_; }

  Vec<D> value(const Vec<D>& x) const {
    Vec<D> v = Vec<D>::Zero();
    for_each_profile(x, [&](const ScalarJet<D>& p, const Vec<D>& amp) { v += p.value * amp; });
    return v;
  }

  // jac(i, j) = d_j v_i
  void jet(const Vec<D>& x, Vec<D>& value, Mat<D>& jac) const {
    value.setZero();
    jac.setZero();
    for_each_profile(x, [&](const ScalarJet<D>& p, const Vec<D>& amp) {
      value += p.value * amp;
      jac += amp * p.grad.transpose();
    });
  }

  // hess[i](j, k) = d_j d_k v_i
  void jet2(const Vec<D>& x, Vec<D>& value, Mat<D>& jac, std::array<Mat<D>, D>& hess) const {
    value.setZero();
    jac.setZero();
    for (auto& m : hess) m.setZero();
    for_each_profile(x, [&](const ScalarJet<D>& p, const Vec<D>& amp) {
      value += p.value * amp;
      jac += amp * p.grad.transpose();
      for (int i = 0; i < D; ++i) hess[i] += amp[i] * p.hess;
    });
  }

  // C1 scale used to normalize annihilation residuals.
  double c1_scale(int samples = 4096, unsigned long long seed = 99) const {
    Rng rng(seed);
    double s = 0.0;
    for (int i = 0; i < samples; ++i) {
      Vec<D> x = random_in_ball<D>(rng, domain_.inner_radius);
      Vec<D> v;
      Mat<D> j;
      jet(x, v, j);
      s = std::max(s, v.template lpNorm<Eigen::Infinity>() + j.template lpNorm<Eigen::Infinity>());
    }
    return s;
  }

 private:
  template <class F> void for_each_profile(const Vec<D>& x, const F& f) const {
    if (x.squaredNorm() >= domain_.inner_radius * domain_.inner_radius) return;
    for (const auto& b : bumps_) {
      Bump sb;
      sb.center.assign(b.center.data(), b.center.data() + D);
      sb.width = b.width;
      ScalarJet<D> p = bump_profile<D>(sb, domain_.inner_radius, sharpness_, x);
      f(p, b.amplitude);
    }
  }

  Domain domain_;
  std::vector<VectorBump<D>> bumps_;
  double sharpness_;
};

// Symmetric differential d^s v of an analytic covector field:
//   (d^s v)_ij = 1/2 (d_i v_j + d_j v_i) - Gamma^k_ij v_k.
// Provides the same tensor-jet interface as BumpTensorField, so it can feed
// the first-order linearization operator directly.
template <int D> class DsymField {
 public:
  DsymField(const Metric<D>& metric, const BumpCovectorField<D>& v) : metric_(&metric), v_(&v) {}

  Mat<D> value(const Vec<D>& x) const {
    Vec<D> val;
    Mat<D> jac;
    v_->jet(x, val, jac);
    ChristoffelJet<D> cj = metric_->christoffel(x);
    Mat<D> h = 0.5 * (jac + jac.transpose());
    for (int k = 0; k < D; ++k) h -= val[k] * cj.gamma[k];
    return h;
  }

  TensorJet<D> jet(const Vec<D>& x) const {
    Vec<D> val;
    Mat<D> jac;
    std::array<Mat<D>, D> hess;
    v_->jet2(x, val, jac, hess);
    ChristoffelJet<D> cj = metric_->christoffel(x);
    TensorJet<D> out;
    out.value = 0.5 * (jac + jac.transpose());
    for (int k = 0; k < D; ++k) out.value -= val[k] * cj.gamma[k];
    for (int m = 0; m < D; ++m) {
      // d_m h_ij = 1/2 (d_m d_i v_j + d_m d_j v_i) - d_m Gamma^k_ij v_k - Gamma^k_ij d_m v_k
      Mat<D> dm;
      for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) dm(i, j) = 0.5 * (hess[j](m, i) + hess[i](m, j));
      for (int k = 0; k < D; ++k) dm -= val[k] * cj.dgamma[m][k] + jac(k, m) * cj.gamma[k];
      out.deriv[m] = dm;
    }
    return out;
  }

 private:
  const Metric<D>* metric_;
  const BumpCovectorField<D>* v_;
};

// Covariant divergence of an analytic tensor-field jet:
//   (delta^s h)_i = g^{jk} (d_k h_ij - Gamma^l_ki h_lj - Gamma^l_kj h_il)
template <int D, class Field>
Vec<D> div_s_analytic(const Metric<D>& metric, const Field& h, const Vec<D>& x) {
  TensorJet<D> hj = h.jet(x);
  MetricJet<D> mj = metric.jet(x);
  ChristoffelJet<D> cj = metric.christoffel_from(mj);
  Vec<D> out = Vec<D>::Zero();
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j)
      for (int k = 0; k < D; ++k) {
        double nab = hj.deriv[k](i, j);
        for (int l = 0; l < D; ++l)
          nab -= cj.gamma[l](k, i) * hj.value(l, j) + cj.gamma[l](k, j) * hj.value(i, l);
        out[i] += mj.ginv(j, k) * nab;
      }
  return out;
}

}  // namespace geoxray
