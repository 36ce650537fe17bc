#pragma once

#include <Eigen/Sparse>
#include <cstdint>
#include <fstream>
#include <vector>

#include "geoxray/fields_analytic.hpp"
#include "geoxray/metric.hpp"
#include <functional>

namespace geoxray {

// ---------------------------------------------------------------------------
// A regular lattice clipped to the ball. Two instances make up the staggered
// pair used by the tensor calculus: covector potentials live at cell corners,
// symmetric tensor fields at cell centers.

template <int D> class GridSpec {
 public:
  struct Entry {
    int32_t node = -1;
    double w = 0.0;
  };
  struct Stencil {
    std::array<Entry, 3> e{};
    int cnt = 0;
  };

  // n points per axis at spacing h starting from `origin` per axis. A node is
  // active when `keep` accepts its position (default: strictly inside the
  // ball). Every cell carries the full measure h^D, so midpoint sums over the
  // active set integrate the element-space support polygon exactly.
  GridSpec(const Domain& domain, int n, double origin, double h,
           const std::function<bool(const Vec<D>&)>& keep = {})
      : domain_(domain), n_(n), origin_(origin), h_(h) {
    if (n < 3) throw std::invalid_argument("grid: need at least 3 nodes per axis");
    int total = 1;
    for (int a = 0; a < D; ++a) total *= n;
    lattice_to_node_.assign(total, -1);
    const double R = domain.radius;
    for (int flat = 0; flat < total; ++flat) {
      Vec<D> x = lattice_coord(flat);
      bool active = keep ? keep(x) : (x.norm() < R);
      if (!active) continue;
      lattice_to_node_[flat] = (int32_t)node_to_lattice_.size();
      node_to_lattice_.push_back(flat);
      coords_.push_back(x);
    }

    int nn = (int)node_to_lattice_.size();
    for (int a = 0; a < D; ++a) free_[a].resize(nn);
    for (int i = 0; i < nn; ++i) build_stencils(i);
  }

  // Corner lattice covering [-R, R]^D with n points per axis; active corners
  // are strictly inside the ball (Dirichlet zero outside).
  static GridSpec corners(const Domain& domain, int n) {
    return GridSpec(domain, n, -domain.radius, 2.0 * domain.radius / (n - 1));
  }

  // Center lattice of the same mesh: n-1 points per axis, offset by h/2. A
  // center is active when its cell touches at least one active corner, i.e.
  // the cell meets the support of the corner element space.
  static GridSpec centers(const Domain& domain, int n) {
    double h = 2.0 * domain.radius / (n - 1);
    double R = domain.radius;
    auto keep = [R, h](const Vec<D>& c) {
      for (int corner = 0; corner < (1 << D); ++corner) {
        Vec<D> x = c;
        for (int a = 0; a < D; ++a) x[a] += ((corner >> a) & 1) ? 0.5 * h : -0.5 * h;
        if (x.norm() < R) return true;
      }
      return false;
    };
    return GridSpec(domain, n - 1, -domain.radius + 0.5 * h, h, keep);
  }

  const Domain& domain() const { return domain_; }
  int n() const { return n_; }
  double spacing() const { return h_; }
  double origin() const { return origin_; }
  int num_nodes() const { return (int)coords_.size(); }
  const Vec<D>& coord(int node) const { return coords_[node]; }
  const std::vector<Vec<D>>& coords() const { return coords_; }
  double cell_measure(int) const { return std::pow(h_, D); }

  int node_at(const std::array<int, D>& idx) const {
    for (int a = 0; a < D; ++a)
      if (idx[a] < 0 || idx[a] >= n_) return -1;
    return lattice_to_node_[flatten(idx)];
  }

  std::array<int, D> lattice_index(int node) const { return unflatten(node_to_lattice_[node]); }

  const Stencil& free_deriv(int node, int axis) const { return free_[axis][node]; }

  bool fully_interior(int node) const {
    auto idx = lattice_index(node);
    for (int a = 0; a < D; ++a)
      for (int s = -1; s <= 1; s += 2) {
        auto nb = idx;
        nb[a] += s;
        if (node_at(nb) < 0) return false;
      }
    return true;
  }

  // Multilinear interpolation stencil at an arbitrary point; inactive lattice
  // points contribute zero.
  void interpolation(const Vec<D>& x, std::array<Entry, (1 << D)>& out, int& cnt) const {
    std::array<int, D> base;
    Vec<D> frac;
    for (int a = 0; a < D; ++a) {
      double t = (x[a] - origin_) / h_;
      int i = (int)std::floor(t);
      i = std::max(0, std::min(n_ - 2, i));
      base[a] = i;
      frac[a] = t - i;
    }
    cnt = 0;
    for (int corner = 0; corner < (1 << D); ++corner) {
      std::array<int, D> idx = base;
      double w = 1.0;
      for (int a = 0; a < D; ++a) {
        if (corner & (1 << a)) {
          idx[a] += 1;
          w *= frac[a];
        } else {
          w *= 1.0 - frac[a];
        }
      }
      int node = node_at(idx);
      if (node >= 0 && w != 0.0) out[cnt++] = {node, w};
    }
  }

 private:
  int flatten(const std::array<int, D>& idx) const {
    int f = 0;
    for (int a = D - 1; a >= 0; --a) f = f * n_ + idx[a];
    return f;
  }
  std::array<int, D> unflatten(int flat) const {
    std::array<int, D> idx;
    for (int a = 0; a < D; ++a) {
      idx[a] = flat % n_;
      flat /= n_;
    }
    return idx;
  }
  Vec<D> lattice_coord(int flat) const {
    auto idx = unflatten(flat);
    Vec<D> x;
    for (int a = 0; a < D; ++a) x[a] = origin_ + h_ * idx[a];
    return x;
  }

  // Centered where both neighbors are active, else one-sided second order,
  // else one-sided first order; values at inactive points are zero.
  void build_stencils(int node) {
    auto idx = lattice_index(node);
    for (int a = 0; a < D; ++a) {
      auto plus = idx, minus = idx;
      plus[a] += 1;
      minus[a] -= 1;
      int np = node_at(plus), nm = node_at(minus);
      Stencil s;
      if (np >= 0 && nm >= 0) {
        s.e[s.cnt++] = {(int32_t)np, 0.5 / h_};
        s.e[s.cnt++] = {(int32_t)nm, -0.5 / h_};
      } else if (np >= 0) {
        auto plus2 = idx;
        plus2[a] += 2;
        int np2 = node_at(plus2);
        if (np2 >= 0) {
          s.e[s.cnt++] = {(int32_t)node, -1.5 / h_};
          s.e[s.cnt++] = {(int32_t)np, 2.0 / h_};
          s.e[s.cnt++] = {(int32_t)np2, -0.5 / h_};
        } else {
          s.e[s.cnt++] = {(int32_t)node, -1.0 / h_};
          s.e[s.cnt++] = {(int32_t)np, 1.0 / h_};
        }
      } else if (nm >= 0) {
        auto minus2 = idx;
        minus2[a] -= 2;
        int nm2 = node_at(minus2);
        if (nm2 >= 0) {
          s.e[s.cnt++] = {(int32_t)node, 1.5 / h_};
          s.e[s.cnt++] = {(int32_t)nm, -2.0 / h_};
          s.e[s.cnt++] = {(int32_t)nm2, 0.5 / h_};
        } else {
          s.e[s.cnt++] = {(int32_t)node, 1.0 / h_};
          s.e[s.cnt++] = {(int32_t)nm, -1.0 / h_};
        }
      }
      free_[a][node] = s;
    }
  }

  Domain domain_;
  int n_ = 0;
  double origin_ = 0.0;
  double h_ = 0.0;
  std::vector<int32_t> lattice_to_node_;
  std::vector<int32_t> node_to_lattice_;
  std::vector<Vec<D>> coords_;
  std::array<std::vector<Stencil>, D> free_;
};

// ---------------------------------------------------------------------------
// Packed fields. Covectors: node-major blocks of D (corner grid); symmetric
// tensors: node-major blocks of sym_dim(D) (center grid), upper triangle.

template <int D> int cov_dof(int node, int i) { return node * D + i; }
template <int D> int ten_dof(int node, int p) { return node * sym_dim(D) + p; }
template <int D> int wgt_dof(int node, int k, int p) {
  return (node * D + k) * sym_dim(D) + p;
}

template <int D> Mat<D> tensor_at(const VecX& f, int node) {
  Eigen::Matrix<double, sym_dim(D), 1> packed;
  for (int p = 0; p < sym_dim(D); ++p) packed[p] = f[ten_dof<D>(node, p)];
  return sym_unpack<D>(packed);
}

template <int D> void set_tensor(VecX& f, int node, const Mat<D>& m) {
  auto packed = sym_pack<D>(m);
  for (int p = 0; p < sym_dim(D); ++p) f[ten_dof<D>(node, p)] = packed[p];
}

template <int D> Vec<D> covector_at(const VecX& v, int node) {
  Vec<D> out;
  for (int i = 0; i < D; ++i) out[i] = v[cov_dof<D>(node, i)];
  return out;
}

struct SolveReport {
  bool converged = false;
  int iterations = 0;
  double relative_residual = 0.0;
};

// Preconditioned conjugate gradient for SPD operators.
template <class ApplyFn>
SolveReport conjugate_gradient(const ApplyFn& apply, const VecX& b, VecX& x,
                               const VecX& inv_diag, double rel_tol = 1e-10,
                               int max_iter = 50000) {
  SolveReport rep;
  double bnorm = b.norm();
  if (bnorm == 0.0) {
    x.setZero();
    rep.converged = true;
    return rep;
  }
  if (x.size() != b.size()) x = VecX::Zero(b.size());
  VecX r = b - apply(x);
  VecX z = inv_diag.cwiseProduct(r);
  VecX p = z;
  double rz = r.dot(z);
  for (int it = 0; it < max_iter; ++it) {
    VecX Ap = apply(p);
    double alpha = rz / p.dot(Ap);
    x += alpha * p;
    r -= alpha * Ap;
    rep.iterations = it + 1;
    rep.relative_residual = r.norm() / bnorm;
    if (rep.relative_residual <= rel_tol) {
      rep.converged = true;
      return rep;
    }
    z = inv_diag.cwiseProduct(r);
    double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Discrete tensor calculus on the staggered pair of grids.
//
// d^s v is evaluated at cell centers from the surrounding corner values (the
// multilinear element gradient at its superconvergence point), so the
// projection below is the least-squares splitting in a genuine element space:
// no spurious rim layers, exact discrete orthogonality, and O(h^2) accuracy
// at the centers.

template <int D> class TensorCalculus {
 public:
  using Sparse = Eigen::SparseMatrix<double>;
  static constexpr int S = sym_dim(D);

  TensorCalculus(const Metric<D>& metric, int n)
      : metric_(&metric),
        corner_grid_(GridSpec<D>::corners(metric.domain(), n)),
        center_grid_(GridSpec<D>::centers(metric.domain(), n)) {
    const int nc = center_grid_.num_nodes();
    jets_.reserve(nc);
    gammas_.reserve(nc);
    for (int i = 0; i < nc; ++i) {
      MetricJet<D> mj = metric.jet(center_grid_.coord(i));
      jets_.push_back(mj);
      gammas_.push_back(metric.christoffel_from(mj).gamma);
    }
    build_dsym();
    build_tensor_mass();
    normal_matrix_ = dsym_.transpose() * (tensor_mass_ * dsym_).eval();
    inv_diag_ = normal_matrix_.diagonal().unaryExpr(
        [](double d) { return d > 0.0 ? 1.0 / d : 1.0; });
  }

  const Metric<D>& metric() const { return *metric_; }
  const GridSpec<D>& grid() const { return center_grid_; }         // tensor fields
  const GridSpec<D>& corner_grid() const { return corner_grid_; }  // potentials
  const MetricJet<D>& jet(int center_node) const { return jets_[center_node]; }
  const Sparse& dsym_matrix() const { return dsym_; }

  int num_cov_dofs() const { return corner_grid_.num_nodes() * D; }
  int num_ten_dofs() const { return center_grid_.num_nodes() * S; }

  VecX dsym(const VecX& v) const { return dsym_ * v; }

  // Strong covariant divergence on the center grid:
  //   (delta^s f)_i = g^{jk} (d_k f_ij - Gamma^l_ki f_lj - Gamma^l_kj f_il)
  VecX div_s(const VecX& f) const {
    const int nc = center_grid_.num_nodes();
    VecX out = VecX::Zero(nc * D);
    for (int node = 0; node < nc; ++node) {
      std::array<Mat<D>, D> df;
      for (int k = 0; k < D; ++k) {
        const auto& st = center_grid_.free_deriv(node, k);
        Mat<D> acc = Mat<D>::Zero();
        for (int e = 0; e < st.cnt; ++e) acc += st.e[e].w * tensor_at<D>(f, st.e[e].node);
        df[k] = acc;
      }
      Mat<D> fval = tensor_at<D>(f, node);
      const Mat<D>& ginv = jets_[node].ginv;
      const auto& gam = gammas_[node];
      for (int i = 0; i < D; ++i) {
        double acc = 0;
        for (int j = 0; j < D; ++j)
          for (int k = 0; k < D; ++k) {
            double nab = df[k](i, j);
            for (int l = 0; l < D; ++l)
              nab -= gam[l](k, i) * fval(l, j) + gam[l](k, j) * fval(i, l);
            acc += ginv(j, k) * nab;
          }
        out[cov_dof<D>(node, i)] = acc;
      }
    }
    return out;
  }

  double inner_tensor(const VecX& f, const VecX& h, bool weighted = true) const {
    double acc = 0;
    for (int node = 0; node < center_grid_.num_nodes(); ++node) {
      double w = center_grid_.cell_measure(node);
      Mat<D> fm = tensor_at<D>(f, node), hm = tensor_at<D>(h, node);
      if (weighted) {
        const auto& mj = jets_[node];
        acc += w * mj.sqrt_det * (mj.ginv * fm * mj.ginv * hm).trace();
      } else {
        acc += w * fm.cwiseProduct(hm).sum();
      }
    }
    return acc;
  }

  // Covector pairing; `grid` selects corners (potentials) or centers (strong
  // divergences).
  double inner_cov_on(const GridSpec<D>& grid, const VecX& v, const VecX& u,
                      bool weighted = true) const {
    double acc = 0;
    for (int node = 0; node < grid.num_nodes(); ++node) {
      double w = grid.cell_measure(node);
      Vec<D> vv = covector_at<D>(v, node), uu = covector_at<D>(u, node);
      if (weighted) {
        MetricJet<D> mj = metric_->jet(grid.coord(node));
        acc += w * mj.sqrt_det * vv.dot(mj.ginv * uu);
      } else {
        acc += w * vv.dot(uu);
      }
    }
    return acc;
  }

  double norm_tensor(const VecX& f, bool weighted = true) const {
    return std::sqrt(std::max(0.0, inner_tensor(f, f, weighted)));
  }
  double norm_cov_corner(const VecX& v, bool weighted = true) const {
    return std::sqrt(std::max(0.0, inner_cov_on(corner_grid_, v, v, weighted)));
  }
  double norm_cov_center(const VecX& v, bool weighted = true) const {
    return std::sqrt(std::max(0.0, inner_cov_on(center_grid_, v, v, weighted)));
  }

  // Discrete H^k norm of a center-grid tensor field (flat product), k <= 2.
  double norm_hk_tensor(const VecX& f, int k) const {
    if (k < 0 || k > 2) throw std::invalid_argument("norm_hk_tensor: k must be 0, 1 or 2");
    double acc = inner_tensor(f, f, false);
    if (k >= 1) {
      std::array<VecX, D> grads;
      for (int a = 0; a < D; ++a) grads[a] = component_gradient(f, a);
      for (int a = 0; a < D; ++a) acc += inner_tensor(grads[a], grads[a], false);
      if (k == 2)
        for (int a = 0; a < D; ++a)
          for (int b = 0; b < D; ++b) {
            VecX gg = component_gradient(grads[a], b);
            acc += inner_tensor(gg, gg, false);
          }
    }
    return std::sqrt(std::max(0.0, acc));
  }

  // Dirichlet solve of delta^s d^s v = rhs (rhs given on corner nodes) in the
  // Galerkin normal form D^T M D v = -M_cov rhs.
  SolveReport solve_delta_s(const VecX& rhs_cov, VecX& v, double rel_tol = 1e-10) const {
    VecX b = VecX::Zero(num_cov_dofs());
    for (int node = 0; node < corner_grid_.num_nodes(); ++node) {
      double w = corner_grid_.cell_measure(node);
      MetricJet<D> mj = metric_->jet(corner_grid_.coord(node));
      Vec<D> r = covector_at<D>(rhs_cov, node);
      Vec<D> br = -w * mj.sqrt_det * (mj.ginv * r);
      for (int i = 0; i < D; ++i) b[cov_dof<D>(node, i)] = br[i];
    }
    v = VecX::Zero(num_cov_dofs());
    return run_cg(b, v, rel_tol);
  }

  // Orthogonal splitting f = f^s + d^s v: v minimizes || d^s v - f ||_M.
  SolveReport solenoidal_project(const VecX& f, VecX& fs, VecX& v,
                                 double rel_tol = 1e-10) const {
    VecX b = dsym_.transpose() * (tensor_mass_ * f);
    v = VecX::Zero(num_cov_dofs());
    SolveReport rep = run_cg(b, v, rel_tol);
    fs = f - dsym_ * v;
    return rep;
  }

  // Weighted L2 norm of the strong divergence over |x| <= region_radius. The
  // region keeps the diagnostic away from the one-sided rim stencils.
  double div_residual_norm(const VecX& f, double region_radius) const {
    VecX dv = div_s(f);
    double acc = 0;
    for (int node = 0; node < center_grid_.num_nodes(); ++node) {
      if (center_grid_.coord(node).norm() > region_radius) continue;
      Vec<D> val = covector_at<D>(dv, node);
      const auto& mj = jets_[node];
      acc += center_grid_.cell_measure(node) * mj.sqrt_det * val.dot(mj.ginv * val);
    }
    return std::sqrt(acc);
  }

  // Grid version of the first-order linearization operator on the center grid.
  VecX l_operator_grid(const VecX& f) const {
    const int nc = center_grid_.num_nodes();
    VecX out = VecX::Zero(nc * D * S);
    auto pairs = sym_pairs<D>();
    for (int node = 0; node < nc; ++node) {
      std::array<Mat<D>, D> df;
      for (int k = 0; k < D; ++k) {
        const auto& st = center_grid_.free_deriv(node, k);
        Mat<D> acc = Mat<D>::Zero();
        for (int e = 0; e < st.cnt; ++e) acc += st.e[e].w * tensor_at<D>(f, st.e[e].node);
        df[k] = acc;
      }
      Mat<D> fval = tensor_at<D>(f, node);
      const auto& mj = jets_[node];
      std::array<Mat<D>, D> Sm;
      for (int l = 0; l < D; ++l)
        for (int i = 0; i < D; ++i)
          for (int j = 0; j < D; ++j)
            Sm[l](i, j) = df[i](j, l) + df[j](i, l) - df[l](i, j);
      Mat<D> gf = mj.ginv * fval;
      for (int k = 0; k < D; ++k) {
        Mat<D> lk = Mat<D>::Zero();
        for (int l = 0; l < D; ++l) lk += 0.5 * mj.ginv(l, k) * Sm[l];
        for (int m = 0; m < D; ++m) lk -= gf(k, m) * gammas_[node][m];
        for (int p = 0; p < S; ++p)
          out[wgt_dof<D>(node, k, p)] = lk(pairs[p].first, pairs[p].second);
      }
    }
    return out;
  }

  const Sparse& normal_matrix() const { return normal_matrix_; }
  const Sparse& tensor_mass() const { return tensor_mass_; }

 private:
  SolveReport run_cg(const VecX& b, VecX& x, double rel_tol) const {
    auto apply = [&](const VecX& p) -> VecX { return normal_matrix_ * p; };
    return conjugate_gradient(apply, b, x, inv_diag_, rel_tol);
  }

  // Staggered symmetric differential: rows at cell centers, columns at the
  // 2^D surrounding corners. The axis derivative at the center is the face
  // average difference; the zero-order Christoffel term uses the corner mean.
  // Ghost corners outside the ball carry the odd reflection through the
  // circle, v(y) = -v(mirror(y)), which keeps the Dirichlet geometry
  // second-order instead of the O(h) staircase.
  void build_dsym() {
    const int nc = center_grid_.num_nodes();
    std::vector<Eigen::Triplet<double>> trip;
    auto pairs = sym_pairs<D>();
    const double h = corner_grid_.spacing();
    const double R = corner_grid_.domain().radius;
    const int corners = 1 << D;

    // substitution list per cell corner: (dof, factor) pairs
    using Sub = std::vector<std::pair<int32_t, double>>;
    for (int node = 0; node < nc; ++node) {
      auto cidx = center_grid_.lattice_index(node);
      std::array<Sub, (1 << D)> subs;
      for (int c = 0; c < corners; ++c) {
        std::array<int, D> idx;
        Vec<D> y;
        for (int a = 0; a < D; ++a) {
          idx[a] = cidx[a] + ((c >> a) & 1);
          y[a] = corner_grid_.origin() + corner_grid_.spacing() * idx[a];
        }
        int cn = corner_grid_.node_at(idx);
        if (cn >= 0) {
          subs[c].push_back({(int32_t)cn, 1.0});
          continue;
        }
        double r = y.norm();
        if (r < R || r >= R + h * std::sqrt((double)D)) continue;  // distant ghosts stay zero
        Vec<D> mirror = (2.0 * R - r) / r * y;
        std::array<typename GridSpec<D>::Entry, (1 << D)> st;
        int cnt = 0;
        corner_grid_.interpolation(mirror, st, cnt);
        double wsum = 0;
        for (int e = 0; e < cnt; ++e) wsum += st[e].w;
        if (wsum < 0.25) continue;
        for (int e = 0; e < cnt; ++e) subs[c].push_back({st[e].node, -st[e].w / wsum});
      }

      const auto& gam = gammas_[node];
      for (int p = 0; p < S; ++p) {
        auto [i, j] = pairs[p];
        int row = ten_dof<D>(node, p);
        for (int c = 0; c < corners; ++c) {
          if (subs[c].empty()) continue;
          double wi = (((c >> i) & 1) ? 1.0 : -1.0) / (h * (corners / 2));
          double wj = (((c >> j) & 1) ? 1.0 : -1.0) / (h * (corners / 2));
          double wmean = 1.0 / corners;
          for (const auto& [dof, fac] : subs[c]) {
            // (d^s v)_ij = (d_i v_j + d_j v_i)/2 - Gamma^k_ij v_k
            trip.emplace_back(row, cov_dof<D>(dof, j), fac * 0.5 * wi);
            trip.emplace_back(row, cov_dof<D>(dof, i), fac * 0.5 * wj);
            for (int k = 0; k < D; ++k) {
              double gkij = gam[k](i, j);
              if (gkij != 0.0)
                trip.emplace_back(row, cov_dof<D>(dof, k), -gkij * wmean * fac);
            }
          }
        }
      }
    }
    dsym_.resize(nc * S, corner_grid_.num_nodes() * D);
    dsym_.setFromTriplets(trip.begin(), trip.end());
    dsym_.makeCompressed();
  }

  void build_tensor_mass() {
    const int nc = center_grid_.num_nodes();
    auto pairs = sym_pairs<D>();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve((size_t)nc * S * S);
    for (int node = 0; node < nc; ++node) {
      double w = center_grid_.cell_measure(node);
      const auto& mj = jets_[node];
      for (int p = 0; p < S; ++p) {
        auto [i, j] = pairs[p];
        for (int q = 0; q < S; ++q) {
          auto [k, l] = pairs[q];
          double mult_p = (i == j) ? 1.0 : 2.0;
          double mult_q = (k == l) ? 1.0 : 2.0;
          double val = 0.5 * mult_p * mult_q *
                       (mj.ginv(i, k) * mj.ginv(j, l) + mj.ginv(i, l) * mj.ginv(j, k));
          double entry = w * mj.sqrt_det * val;
          if (entry != 0.0)
            trip.emplace_back(ten_dof<D>(node, p), ten_dof<D>(node, q), entry);
        }
      }
    }
    tensor_mass_.resize(nc * S, nc * S);
    tensor_mass_.setFromTriplets(trip.begin(), trip.end());
    tensor_mass_.makeCompressed();
  }

  VecX component_gradient(const VecX& f, int axis) const {
    const int nc = center_grid_.num_nodes();
    VecX out = VecX::Zero(f.size());
    for (int node = 0; node < nc; ++node) {
      const auto& st = center_grid_.free_deriv(node, axis);
      for (int p = 0; p < S; ++p) {
        double acc = 0;
        for (int e = 0; e < st.cnt; ++e) acc += st.e[e].w * f[ten_dof<D>(st.e[e].node, p)];
        out[ten_dof<D>(node, p)] = acc;
      }
    }
    return out;
  }

  const Metric<D>* metric_;
  GridSpec<D> corner_grid_;
  GridSpec<D> center_grid_;
  std::vector<MetricJet<D>> jets_;
  std::vector<std::array<Mat<D>, D>> gammas_;
  Sparse dsym_;
  Sparse tensor_mass_;
  Sparse normal_matrix_;
  VecX inv_diag_;
};

// Sample an analytic tensor field onto grid DOFs.
template <int D, class Field>
VecX sample_tensor(const GridSpec<D>& grid, const Field& f) {
  VecX out = VecX::Zero(grid.num_nodes() * sym_dim(D));
  for (int node = 0; node < grid.num_nodes(); ++node)
    set_tensor<D>(out, node, f.value(grid.coord(node)));
  return out;
}

template <int D>
VecX sample_covector(const GridSpec<D>& grid, const BumpCovectorField<D>& v) {
  VecX out = VecX::Zero(grid.num_nodes() * D);
  for (int node = 0; node < grid.num_nodes(); ++node) {
    Vec<D> val = v.value(grid.coord(node));
    for (int i = 0; i < D; ++i) out[cov_dof<D>(node, i)] = val[i];
  }
  return out;
}

// Pointwise symmetric-matrix splitting f = h + i_x v with j_x h = 0:
//   (i_x v)_ij = (v_i x_j + v_j x_i)/2,  (j_x u)_i = u_ij x^j.
template <int D>
void pointwise_decompose(const Mat<D>& f, const Vec<D>& x, Mat<D>& h, Vec<D>& v) {
  double x2 = x.squaredNorm();
  if (x2 == 0.0) throw std::invalid_argument("pointwise_decompose: x must be nonzero");
  Mat<D> A = 0.5 * (x2 * Mat<D>::Identity() + x * x.transpose());
  v = A.ldlt().solve(f * x);
  h = f - sym_outer<D>(v, x);
}

// ---------------------------------------------------------------------------
// Field import/export: text header then one line per lattice node (row-major
// over the full lattice of the given grid, zeros at inactive nodes).

template <int D>
void export_tensor_field(const GridSpec<D>& grid, const VecX& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("export_tensor_field: cannot open " + path);
  out << "geoxray-tensor-field\n";
  out << D << " " << grid.n() << " " << grid.domain().radius << " " << sym_dim(D) << "\n";
  int total = 1;
  for (int a = 0; a < D; ++a) total *= grid.n();
  char buf[32];
  for (int flat = 0; flat < total; ++flat) {
    std::array<int, D> idx;
    int rem = flat;
    for (int a = 0; a < D; ++a) {
      idx[a] = rem % grid.n();
      rem /= grid.n();
    }
    int node = grid.node_at(idx);
    for (int p = 0; p < sym_dim(D); ++p) {
      double val = (node >= 0) ? f[ten_dof<D>(node, p)] : 0.0;
      std::snprintf(buf, sizeof(buf), "%.17g", val);
      out << buf << (p + 1 == sym_dim(D) ? "" : " ");
    }
    out << "\n";
  }
}

template <int D>
VecX import_tensor_field(const GridSpec<D>& grid, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("import_tensor_field: cannot open " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != "geoxray-tensor-field")
    throw std::runtime_error("import_tensor_field: bad header");
  int d, n, s;
  double R;
  in >> d >> n >> R >> s;
  if (d != D || n != grid.n() || s != sym_dim(D))
    throw std::runtime_error("import_tensor_field: grid mismatch");
  VecX f = VecX::Zero(grid.num_nodes() * sym_dim(D));
  int total = 1;
  for (int a = 0; a < D; ++a) total *= n;
  for (int flat = 0; flat < total; ++flat) {
    std::array<int, D> idx;
    int rem = flat;
    for (int a = 0; a < D; ++a) {
      idx[a] = rem % n;
      rem /= n;
    }
    int node = grid.node_at(idx);
    for (int p = 0; p < sym_dim(D); ++p) {
      double val;
      in >> val;
      if (node >= 0) f[ten_dof<D>(node, p)] = val;
    }
  }
  return f;
}

}  // namespace geoxray
