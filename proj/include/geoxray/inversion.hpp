#pragma once

#include <fstream>

#include "geoxray/normal_op.hpp"
#include "geoxray/sample_fields.hpp"
#include "geoxray/tensor_fields.hpp"
#include "geoxray/xray.hpp"

namespace geoxray {

// ---------------------------------------------------------------------------
// Ray-discretized forward transform as a compact quadrature tape: one entry
// per (ray, path node) holding the interpolation stencil on the center grid,
// the packed velocity contraction, and the weighted right block of Phi. The
// full system matrix is the tape composed with the sparse grid L; rows carry
// the sign of the flow linearization (the generator perturbation is -L f).

template <int D> struct RayTapeNode {
  std::array<typename GridSpec<D>::Entry, (1 << D)> interp{};
  int interp_cnt = 0;
  Eigen::Matrix<double, sym_dim(D), 1> contraction;  // xi^i xi^j with multiplicity
  Eigen::Matrix<double, 2 * D, D> phi_block;         // w_q * Phi(s_q)[:, D:2D]
};

template <int D> struct ForwardSystem {
  static constexpr int S = sym_dim(D);

  std::vector<PhasePoint<D>> rays;
  std::vector<double> ray_weights;     // inflow measure incl |<nu, xi>|
  std::vector<double> bundle_weights;  // sum over cutoff bundles of alpha_j^2
  std::vector<double> exit_times;
  double horizon = 0.0;
  int quad_n = 0;
  double tol = 1e-10;
  int grid_n = 0;

  std::vector<std::vector<RayTapeNode<D>>> tape;  // per ray
  Eigen::SparseMatrix<double> L;                  // grid first-order operator
  double support_radius = 0.0;                    // unknowns restricted to M-tilde
  std::vector<uint8_t> dof_mask;                  // per tensor dof

  void apply_mask(VecX& f) const {
    for (int i = 0; i < f.size(); ++i)
      if (!dof_mask[i]) f[i] = 0.0;
  }

  int rows() const { return (int)rays.size() * 2 * D; }
  int cols() const { return (int)L.cols(); }

  // data = X f  (tape applied to L f)
  VecX apply(const VecX& f) const {
    VecX lf = L * f;
    VecX out = VecX::Zero(rows());
    for (size_t r = 0; r < rays.size(); ++r) {
      Eigen::Matrix<double, 2 * D, 1> acc = Eigen::Matrix<double, 2 * D, 1>::Zero();
      for (const auto& node : tape[r]) {
        Vec<D> w = Vec<D>::Zero();
        for (int e = 0; e < node.interp_cnt; ++e) {
          const auto& it = node.interp[e];
          for (int k = 0; k < D; ++k) {
            double dot = 0;
            for (int p = 0; p < S; ++p)
              dot += node.contraction[p] * lf[wgt_dof<D>(it.node, k, p)];
            w[k] += it.w * dot;
          }
        }
        acc -= node.phi_block * w;  // minus: generator perturbation is -(L f)
      }
      out.segment(r * 2 * D, 2 * D) = acc;
    }
    return out;
  }

  // f_out = X^T d
  VecX apply_transpose(const VecX& d) const {
    VecX lt = VecX::Zero(L.rows());
    for (size_t r = 0; r < rays.size(); ++r) {
      Eigen::Matrix<double, 2 * D, 1> seg = d.segment(r * 2 * D, 2 * D);
      for (const auto& node : tape[r]) {
        Vec<D> w = -(node.phi_block.transpose() * seg);
        for (int e = 0; e < node.interp_cnt; ++e) {
          const auto& it = node.interp[e];
          for (int k = 0; k < D; ++k) {
            double c = it.w * w[k];
            for (int p = 0; p < S; ++p)
              lt[wgt_dof<D>(it.node, k, p)] += c * node.contraction[p];
          }
        }
      }
    }
    return L.transpose() * lt;
  }

  // Explicit sparse matrix (small configurations; tests and persistence).
  Eigen::SparseMatrix<double> assemble_matrix() const {
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::SparseMatrix<double> Q(rows(), (int)L.rows());
    for (size_t r = 0; r < rays.size(); ++r)
      for (const auto& node : tape[r])
        for (int e = 0; e < node.interp_cnt; ++e)
          for (int k = 0; k < D; ++k)
            for (int p = 0; p < S; ++p) {
              double c = -node.interp[e].w * node.contraction[p];
              for (int comp = 0; comp < 2 * D; ++comp) {
                double val = c * node.phi_block(comp, k);
                if (val != 0.0)
                  trip.emplace_back((int)r * 2 * D + comp,
                                    wgt_dof<D>(node.interp[e].node, k, p), val);
              }
            }
    Q.setFromTriplets(trip.begin(), trip.end());
    return (Q * L).pruned();
  }

};

// Overlapping cutoff bundles on the inflow boundary, split by boundary angle.
template <int D>
std::vector<CutoffAlpha<D>> angle_bundles(const Domain& dom, int n_bundles,
                                          double overlap = 1.6) {
  std::vector<CutoffAlpha<D>> out;
  for (int j = 0; j < n_bundles; ++j) {
    double th = 2.0 * M_PI * j / n_bundles;
    AlphaBump<D> b;
    b.point = Vec<D>::Zero();
    b.point[0] = dom.radius * std::cos(th);
    b.point[1] = dom.radius * std::sin(th);
    // chordal width covering the sector with overlap; direction-blind bump
    b.point_width = overlap * dom.radius * 2.0 * std::sin(M_PI / n_bundles);
    b.dir = Vec<D>::Zero();
    b.dir_width = 1e3;
    out.push_back(CutoffAlpha<D>({b}));
  }
  return out;
}

template <int D>
ForwardSystem<D> assemble_forward(const TensorCalculus<D>& calc, const RayQuadrature2& rays,
                                  const std::vector<CutoffAlpha<D>>& bundles, double horizon,
                                  int quad_n = 256, double tol = 1e-10,
                                  double support_radius = 0.0)
  requires(D == 2)
{
  ForwardSystem<D> sys;
  sys.horizon = horizon;
  sys.quad_n = quad_n;
  sys.tol = tol;
  sys.grid_n = calc.corner_grid().n();
  sys.L = l_operator_matrix<D>(calc);
  sys.support_radius =
      (support_radius > 0.0) ? support_radius : calc.metric().domain().inner_radius;
  sys.dof_mask.assign(calc.num_ten_dofs(), 0);
  for (int node = 0; node < calc.grid().num_nodes(); ++node)
    if (calc.grid().coord(node).norm() < sys.support_radius)
      for (int p = 0; p < sym_dim(D); ++p) sys.dof_mask[ten_dof<D>(node, p)] = 1;
  sys.rays = rays.rays;
  sys.ray_weights = rays.weights;
  sys.tape.resize(rays.rays.size());
  sys.exit_times.resize(rays.rays.size());
  sys.bundle_weights.assign(rays.rays.size(), 1.0);

  for (size_t r = 0; r < rays.rays.size(); ++r) {
    if (!bundles.empty()) {
      double bw = 0;
      for (const auto& a : bundles) {
        double av = a(rays.rays[r]);
        bw += av * av;
      }
      sys.bundle_weights[r] = bw;
    }
    GeodesicRecord<D> rec = trace<D>(calc.metric(), rays.rays[r], horizon, tol);
    if (rec.trapped) throw std::runtime_error("assemble_forward: trapped ray in the sweep");
    sys.exit_times[r] = rec.exit_time;

    double s_end = std::min(rec.exit_time, horizon);
    double hq = s_end / quad_n;
    PhaseMat<D> psi_T = rec.psi(horizon);
    auto& nodes = sys.tape[r];
    nodes.reserve(quad_n);
    for (int q = 0; q < quad_n; ++q) {
      double t = (q + 0.5) * hq;
      PhasePoint<D> p;
      PhaseMat<D> psi;
      rec.state(t, p, psi);
      if (p.x.squaredNorm() >= calc.metric().domain().inner_radius *
                                   calc.metric().domain().inner_radius)
        continue;  // outside the support ball: integrand vanishes
      RayTapeNode<D> node;
      calc.grid().interpolation(p.x, node.interp, node.interp_cnt);
      if (node.interp_cnt == 0) continue;
      node.contraction = quad_contraction<D>(p.xi);
      PhaseMat<D> phi = psi_T * psi.inverse();
      node.phi_block = hq * phi.template block<2 * D, D>(0, D);
      nodes.push_back(node);
    }
  }
  return sys;
}

// ---------------------------------------------------------------------------
// Regularized least-squares reconstruction.

struct ReconstructionResult {
  VecX recovered;                  // solenoidal projection of the minimizer
  VecX minimizer;                  // raw CG solution
  std::vector<double> residual_history;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
  double regularization = 0.0;
};

// Component-wise gradient matrix on the center grid (free stencils); the
// H^1 seminorm block of the Tikhonov term.
template <int D>
Eigen::SparseMatrix<double> gradient_matrix(const TensorCalculus<D>& calc, int axis) {
  constexpr int S = sym_dim(D);
  const auto& grid = calc.grid();
  std::vector<Eigen::Triplet<double>> trip;
  for (int node = 0; node < grid.num_nodes(); ++node) {
    const auto& st = grid.free_deriv(node, axis);
    for (int p = 0; p < S; ++p)
      for (int e = 0; e < st.cnt; ++e)
        trip.emplace_back(ten_dof<D>(node, p), ten_dof<D>(st.e[e].node, p), st.e[e].w);
  }
  Eigen::SparseMatrix<double> G(grid.num_nodes() * S, grid.num_nodes() * S);
  G.setFromTriplets(trip.begin(), trip.end());
  G.makeCompressed();
  return G;
}

// CG on (X^T W X + reg (I + Ddiv^T Ddiv + smooth * sum_a G_a^T G_a)) f = X^T W data,
// followed by the solenoidal projection of the minimizer. The gradient block
// suppresses fine-scale fields that the finite ray sample cannot see.
template <int D>
ReconstructionResult reconstruct(const ForwardSystem<D>& sys, const TensorCalculus<D>& calc,
                                 const VecX& data, double reg, int max_iter,
                                 double rel_tol = 1e-8, double smooth_weight = 1.0) {
  ReconstructionResult out;
  out.regularization = reg;

  VecX w_rays((int)sys.rays.size());
  for (size_t r = 0; r < sys.rays.size(); ++r)
    w_rays[(int)r] = sys.ray_weights[r] * sys.bundle_weights[r];

  auto weight_data = [&](const VecX& d) {
    VecX wd = d;
    for (size_t r = 0; r < sys.rays.size(); ++r)
      wd.segment(r * 2 * D, 2 * D) *= w_rays[(int)r];
    return wd;
  };

  // divergence penalty matrix (strong form on the center grid)
  Eigen::SparseMatrix<double> Ddiv = divergence_matrix<D>(calc);
  std::array<Eigen::SparseMatrix<double>, D> grads;
  for (int a = 0; a < D; ++a) grads[a] = gradient_matrix<D>(calc, a);

  // unknowns are restricted to the supported dofs
  auto apply = [&](const VecX& f) -> VecX {
    VecX xf = sys.apply(f);
    VecX a = sys.apply_transpose(weight_data(xf));
    a += reg * (f + Ddiv.transpose() * (Ddiv * f).eval());
    if (smooth_weight > 0.0)
      for (int ax = 0; ax < D; ++ax)
        a += (reg * smooth_weight) * (grads[ax].transpose() * (grads[ax] * f).eval());
    sys.apply_mask(a);
    return a;
  };

  VecX b = sys.apply_transpose(weight_data(data));
  sys.apply_mask(b);
  VecX x = VecX::Zero(sys.cols());
  VecX r = b;
  VecX p = r;
  double rr = r.squaredNorm();
  double b0 = std::sqrt(rr);
  double best = 1.0;
  out.residual_history.push_back(1.0);
  for (int it = 0; it < max_iter && b0 > 0; ++it) {
    VecX Ap = apply(p);
    double alpha = rr / p.dot(Ap);
    x += alpha * p;
    r -= alpha * Ap;
    double rel = std::sqrt(r.squaredNorm()) / b0;
    // history reported as monotone envelope; raw CG residuals may wiggle
    out.residual_history.push_back(std::min(rel, out.residual_history.back()));
    out.iterations = it + 1;
    if (rel < best) best = rel;
    if (rel > 50.0 * best + 1.0) {
      out.diverged = true;
      break;
    }
    if (rel <= rel_tol) {
      out.converged = true;
      break;
    }
    double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  out.minimizer = x;

  VecX fs, v;
  calc.solenoidal_project(x, fs, v, 1e-10);
  out.recovered = fs;
  return out;
}

template <int D>
Eigen::SparseMatrix<double> divergence_matrix(const TensorCalculus<D>& calc) {
  constexpr int S = sym_dim(D);
  const auto& grid = calc.grid();
  const int nc = grid.num_nodes();
  auto pairs = sym_pairs<D>();
  std::vector<Eigen::Triplet<double>> trip;
  for (int node = 0; node < nc; ++node) {
    const MetricJet<D>& mj = calc.jet(node);
    ChristoffelJet<D> cj = calc.metric().christoffel_from(mj);
    for (int i = 0; i < D; ++i) {
      int row = node * D + i;
      for (int j = 0; j < D; ++j)
        for (int k = 0; k < D; ++k) {
          double gjk = mj.ginv(j, k);
          if (gjk == 0.0) continue;
          const auto& st = grid.free_deriv(node, k);
          for (int e = 0; e < st.cnt; ++e)
            trip.emplace_back(row, ten_dof<D>(st.e[e].node, sym_index<D>(i, j)), gjk * st.e[e].w);
          for (int l = 0; l < D; ++l) {
            trip.emplace_back(row, ten_dof<D>(node, sym_index<D>(l, j)),
                              -gjk * cj.gamma[l](k, i));
            trip.emplace_back(row, ten_dof<D>(node, sym_index<D>(i, l)),
                              -gjk * cj.gamma[l](k, j));
          }
        }
    }
  }
  Eigen::SparseMatrix<double> M(nc * D, nc * S);
  M.setFromTriplets(trip.begin(), trip.end());
  M.makeCompressed();
  return M;
}

// ---------------------------------------------------------------------------
// Linearization-order harness: Richardson slopes for the three maps
// metric -> christoffel, metric -> flow, connection -> flow.

struct LinearizationReport {
  std::vector<double> eps;
  std::vector<double> residual_flow;        // |H^T(g+ef) - H^T(g) - e X f|
  std::vector<double> residual_christoffel; // |Gamma(g+ef) - Gamma(g) - e L f|
  std::vector<double> residual_connection;  // |H^T(G+eG~) - H^T(G) + e I(iota G~)|
  double slope_flow = 0.0;
  double slope_christoffel = 0.0;
  double slope_connection = 0.0;
};

template <int D>
LinearizationReport linearization_suite(const MetricSpec& spec, const BumpTensorField<D>& f,
                                        const std::array<BumpTensorField<D>, D>& tilde,
                                        const std::vector<PhasePoint<D>>& rays,
                                        const std::vector<double>& eps_list, double horizon,
                                        double tol = 1e-11, int quad_n = 1024,
                                        unsigned long long point_seed = 2024) {
  Metric<D> base(spec);
  LinearizationReport rep;
  rep.eps = eps_list;

  // positivity guard for the largest perturbation
  for (double e : eps_list) {
    Metric<D> mp(f.perturb(spec, e));
    if (mp.sampled_min_eigenvalue(21) <= 0.0)
      throw std::invalid_argument("linearization_suite: g + eps f is not positive definite");
  }

  std::vector<GeodesicRecord<D>> recs;
  std::vector<PhaseVec<D>> base_states, xf;
  for (const auto& ray : rays) {
    GeodesicRecord<D> rec = trace<D>(base, ray, horizon, tol);
    base_states.push_back(rec.phase(horizon).packed());
    xf.push_back(transform_X<D>(base, f, rec, quad_n));
    recs.push_back(std::move(rec));
  }

  // sample points for the christoffel comparison
  Rng rng(point_seed);
  std::vector<Vec<D>> pts;
  for (int i = 0; i < 24; ++i)
    pts.push_back(random_in_ball<D>(rng, 0.9 * spec.domain.inner_radius));

  auto tilde_pi = [&](const Vec<D>& x) -> WeightedVal<D> {
    WeightedVal<D> out;
    for (int k = 0; k < D; ++k) out[k].setZero();
    for (int k = 0; k < D; ++k) out[D + k] = tilde[k].value(x);
    return out;
  };
  std::vector<PhaseVec<D>> i_tilde;
  for (const auto& rec : recs) i_tilde.push_back(transform_I<D>(rec, tilde_pi, quad_n));

  for (double e : eps_list) {
    Metric<D> mp(f.perturb(spec, e));
    double worst_flow = 0, worst_chr = 0, worst_conn = 0;
    for (size_t i = 0; i < rays.size(); ++i) {
      PhaseVec<D> moved = trace<D>(mp, rays[i], horizon, tol).phase(horizon).packed();
      worst_flow = std::max(worst_flow, (moved - base_states[i] - e * xf[i]).norm());
    }
    for (const auto& x : pts) {
      ChristoffelJet<D> c0 = base.christoffel(x);
      ChristoffelJet<D> c1 = mp.christoffel(x);
      WeightedValHalf<D> lf = l_operator<D>(base, f, x);
      for (int k = 0; k < D; ++k)
        worst_chr = std::max(worst_chr, (c1.gamma[k] - c0.gamma[k] - e * lf[k]).norm());
    }
    PerturbedConnection<D> pc{&base, &tilde, e};
    for (size_t i = 0; i < rays.size(); ++i) {
      PhaseVec<D> moved =
          trace<D, PerturbedConnection<D>>(pc, rays[i], horizon, tol).phase(horizon).packed();
      worst_conn = std::max(worst_conn, (moved - base_states[i] + e * i_tilde[i]).norm());
    }
    rep.residual_flow.push_back(worst_flow);
    rep.residual_christoffel.push_back(worst_chr);
    rep.residual_connection.push_back(worst_conn);
  }
  if (eps_list.size() >= 2) {
    rep.slope_flow = loglog_slope(rep.eps, rep.residual_flow);
    rep.slope_christoffel = loglog_slope(rep.eps, rep.residual_christoffel);
    rep.slope_connection = loglog_slope(rep.eps, rep.residual_connection);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Persistence of the forward system (binary tape).

template <int D>
void save_forward_system(const ForwardSystem<D>& sys, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_forward_system: cannot open " + path);
  auto w64 = [&](uint64_t v) { out.write((const char*)&v, 8); };
  auto wd = [&](double v) { out.write((const char*)&v, 8); };
  out.write("GXRFWD1\n", 8);
  w64(D);
  w64(sys.rays.size());
  w64((uint64_t)sys.quad_n);
  w64((uint64_t)sys.grid_n);
  wd(sys.horizon);
  wd(sys.tol);
  for (size_t r = 0; r < sys.rays.size(); ++r) {
    for (int i = 0; i < D; ++i) wd(sys.rays[r].x[i]);
    for (int i = 0; i < D; ++i) wd(sys.rays[r].xi[i]);
    wd(sys.ray_weights[r]);
    wd(sys.bundle_weights[r]);
    wd(sys.exit_times[r]);
    w64(sys.tape[r].size());
    for (const auto& node : sys.tape[r]) {
      w64((uint64_t)node.interp_cnt);
      for (int e = 0; e < node.interp_cnt; ++e) {
        w64((uint64_t)node.interp[e].node);
        wd(node.interp[e].w);
      }
      for (int p = 0; p < sym_dim(D); ++p) wd(node.contraction[p]);
      for (int i = 0; i < 2 * D; ++i)
        for (int k = 0; k < D; ++k) wd(node.phi_block(i, k));
    }
  }
}

template <int D>
ForwardSystem<D> load_forward_system(const TensorCalculus<D>& calc, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_forward_system: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::string(magic, 8) != "GXRFWD1\n")
    throw std::runtime_error("load_forward_system: bad header");
  auto r64 = [&]() {
    uint64_t v;
    in.read((char*)&v, 8);
    return v;
  };
  auto rd = [&]() {
    double v;
    in.read((char*)&v, 8);
    return v;
  };
  if (r64() != (uint64_t)D) throw std::runtime_error("load_forward_system: dimension mismatch");
  ForwardSystem<D> sys;
  size_t nrays = r64();
  sys.quad_n = (int)r64();
  sys.grid_n = (int)r64();
  sys.horizon = rd();
  sys.tol = rd();
  if (sys.grid_n != calc.corner_grid().n())
    throw std::runtime_error("load_forward_system: grid mismatch");
  sys.L = l_operator_matrix<D>(calc);
  sys.rays.resize(nrays);
  sys.ray_weights.resize(nrays);
  sys.bundle_weights.resize(nrays);
  sys.exit_times.resize(nrays);
  sys.tape.resize(nrays);
  for (size_t r = 0; r < nrays; ++r) {
    for (int i = 0; i < D; ++i) sys.rays[r].x[i] = rd();
    for (int i = 0; i < D; ++i) sys.rays[r].xi[i] = rd();
    sys.ray_weights[r] = rd();
    sys.bundle_weights[r] = rd();
    sys.exit_times[r] = rd();
    size_t nn = r64();
    sys.tape[r].resize(nn);
    for (auto& node : sys.tape[r]) {
      node.interp_cnt = (int)r64();
      for (int e = 0; e < node.interp_cnt; ++e) {
        node.interp[e].node = (int32_t)r64();
        node.interp[e].w = rd();
      }
      for (int p = 0; p < sym_dim(D); ++p) node.contraction[p] = rd();
      for (int i = 0; i < 2 * D; ++i)
        for (int k = 0; k < D; ++k) node.phi_block(i, k) = rd();
    }
  }
  return sys;
}

}  // namespace geoxray
