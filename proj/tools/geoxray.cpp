// Config-driven experiment runner: every module is exposed as a subcommand
// writing deterministic CSV/JSON artifacts. Exit codes: 0 pass, 1 check
// failure, 2 usage/config error.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "geoxray/acceptance.hpp"
#include "geoxray/config.hpp"
#include "geoxray/conjugacy.hpp"
#include "geoxray/csv.hpp"
#include "geoxray/inversion.hpp"
#include "geoxray/symbol.hpp"
#include "geoxray/version.hpp"

using namespace geoxray;

namespace {

struct RunContext {
  ExperimentConfig cfg;
  std::filesystem::path out;

  void write_manifest(const std::string& subcommand) const {
    nlohmann::json j;
    j["tool"] = "geoxray";
    j["version"] = kVersion;
    j["subcommand"] = subcommand;
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx", (unsigned long long)config_hash(cfg));
    j["config_hash"] = hash;
    j["config"] = serialize_config(cfg);
    std::ofstream f(out / "manifest.json", std::ios::binary);
    f << j.dump(2) << "\n";
  }

  void write_csv(const std::string& name, const CsvWriter& csv) const {
    csv.write((out / name).string());
  }

  void write_json(const std::string& name, const nlohmann::json& j) const {
    std::ofstream f(out / name, std::ios::binary);
    f << j.dump(2) << "\n";
  }
};

RunContext make_context(const std::string& config_path,
                        const std::vector<std::string>& overrides,
                        const std::string& subcommand) {
  RunContext ctx;
  ctx.cfg = load_config(config_path);
  for (const auto& ov : overrides) {
    size_t eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override must be section.key=value: " + ov);
    apply_override(ctx.cfg, ov.substr(0, eq), ov.substr(eq + 1));
  }
  ctx.cfg.validate();
  ctx.out = ctx.cfg.output_dir;
  std::filesystem::create_directories(ctx.out);
  ctx.write_manifest(subcommand);
  return ctx;
}

std::vector<PhasePoint<2>> random_entries_2d(const Domain& dom, int n, Rng& rng,
                                             double phi_max = 1.2) {
  std::vector<PhasePoint<2>> out;
  for (int i = 0; i < n; ++i) {
    double th = uniform(rng, 0.0, 2 * M_PI);
    double ph = uniform(rng, -phi_max, phi_max);
    Vec<2> nrm(std::cos(th), std::sin(th));
    Vec<2> tg(-std::sin(th), std::cos(th));
    out.push_back({dom.radius * nrm, -std::cos(ph) * nrm + std::sin(ph) * tg});
  }
  return out;
}

int cmd_trace(const RunContext& ctx) {
  Metric<2> m(ctx.cfg.metric);
  Rng rng(ctx.cfg.seed);
  auto entries = random_entries_2d(m.domain(), 8, rng);
  std::vector<std::string> cols = {"ray", "t", "x1", "x2", "xi1", "xi2"};
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) cols.push_back("psi" + std::to_string(a) + std::to_string(b));
  CsvWriter csv(cols);
  for (size_t r = 0; r < entries.size(); ++r) {
    GeodesicRecord<2> rec = trace<2>(m, entries[r], ctx.cfg.horizon, ctx.cfg.ode_tol);
    for (int i = 0; i <= 64; ++i) {
      double t = ctx.cfg.horizon * i / 64.0;
      PhasePoint<2> p;
      PhaseMat<2> psi;
      rec.state(t, p, psi);
      std::vector<double> row = {(double)r, t, p.x[0], p.x[1], p.xi[0], p.xi[1]};
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) row.push_back(psi(a, b));
      csv.row(row);
    }
  }
  ctx.write_csv("trace.csv", csv);
  std::cout << "trace: wrote 8 rays to " << (ctx.out / "trace.csv") << "\n";
  return 0;
}

int cmd_scatter(const RunContext& ctx) {
  Metric<2> m(ctx.cfg.metric);
  RayQuadrature2 rays = inflow_rays_2d(m.domain(), ctx.cfg.rays_theta, ctx.cfg.rays_phi,
                                       ctx.cfg.phi_max);
  CsvWriter csv({"x1", "x2", "xi1", "xi2", "L", "exit_x1", "exit_x2", "exit_xi1", "exit_xi2",
                 "chord"});
  double worst = 0.0;
  bool euclid = ctx.cfg.metric.euclidean();
  for (const auto& e : rays.rays) {
    GeodesicRecord<2> rec = trace<2>(m, e, ctx.cfg.horizon, ctx.cfg.ode_tol);
    double b = std::abs(e.x[0] * e.xi[1] - e.x[1] * e.xi[0]);
    double chord = 2.0 * std::sqrt(std::max(0.0, m.domain().radius * m.domain().radius - b * b));
    csv.row({e.x[0], e.x[1], e.xi[0], e.xi[1], rec.exit_time, rec.exit_point.x[0],
             rec.exit_point.x[1], rec.exit_point.xi[0], rec.exit_point.xi[1], chord});
    if (euclid) worst = std::max(worst, std::abs(rec.exit_time - chord));
  }
  ctx.write_csv("scatter.csv", csv);
  std::cout << "scatter: " << rays.rays.size() << " rays";
  if (euclid) {
    std::cout << ", max |L - chord| = " << worst;
    if (worst > 1e-8) {
      std::cout << " FAIL\n";
      return 1;
    }
  }
  std::cout << "\n";
  return 0;
}

int cmd_identity_check(const RunContext& ctx) {
  Metric<2> m(ctx.cfg.metric);
  Rng rng(ctx.cfg.seed);
  auto entries = random_entries_2d(m.domain(), 64, rng);
  CsvWriter csv({"ray", "residual_flow", "residual_length", "residual_exit"});
  double worst = 0.0;
  for (size_t i = 0; i < entries.size(); ++i) {
    ScatterIdentityReport rep =
        verify_flow_scatter<2>(m, entries[i], ctx.cfg.horizon, ctx.cfg.ode_tol);
    if (rep.skipped) continue;
    csv.row({(double)i, rep.residual_flow, rep.residual_length, rep.residual_exit});
    worst = std::max(worst, rep.max_residual());
  }
  ctx.write_csv("identity_check.csv", csv);
  double thresh = 1e3 * ctx.cfg.ode_tol;
  std::cout << "identity-check: max residual " << worst << " (threshold " << thresh << ")\n";
  return worst <= thresh ? 0 : 1;
}

int cmd_xray(const RunContext& ctx) {
  Metric<2> m(ctx.cfg.metric);
  Rng rng(ctx.cfg.seed);
  BumpTensorField<2> f = random_tensor_field<2>(m.domain(), rng, 2, 1.0);
  RayQuadrature2 rays = inflow_rays_2d(m.domain(), ctx.cfg.rays_theta, ctx.cfg.rays_phi,
                                       ctx.cfg.phi_max);
  CsvWriter csv({"x1", "x2", "xi1", "xi2", "X1", "X2", "X3", "X4"});
  for (const auto& e : rays.rays) {
    PhaseVec<2> v = transform_X<2>(m, f, e, ctx.cfg.horizon, ctx.cfg.ode_tol, ctx.cfg.path_quad);
    csv.row({e.x[0], e.x[1], e.xi[0], e.xi[1], v[0], v[1], v[2], v[3]});
  }
  ctx.write_csv("xray.csv", csv);
  std::cout << "xray: wrote " << rays.rays.size() << " transform rows\n";
  return 0;
}

int cmd_adjoint_check(const RunContext& ctx) {
  Metric<2> m(ctx.cfg.metric);
  Rng rng(ctx.cfg.seed);
  RandomWeightedField<2> Pi = RandomWeightedField<2>::smooth(m.domain(), rng);
  double T = ctx.cfg.horizon, tol = std::max(ctx.cfg.ode_tol, 1e-9);
  auto h = [&](const PhasePoint<2>& entry) {
    GeodesicRecord<2> rec = trace<2>(m, entry, T, tol);
    return transform_I<2>(rec, Pi, ctx.cfg.path_quad / 2);
  };
  RayQuadrature2 q = inflow_rays_2d(m.domain(), ctx.cfg.rays_theta, ctx.cfg.rays_phi,
                                    ctx.cfg.phi_max);
  double lhs = 0.0;
  for (size_t i = 0; i < q.rays.size(); ++i) {
    GeodesicRecord<2> rec = trace<2>(m, q.rays[i], T, tol);
    lhs += q.weights[i] * h(q.rays[i]).dot(transform_I<2>(rec, Pi, ctx.cfg.path_quad / 2));
  }
  int n = 33;
  double R = m.domain().radius, hx = 2.0 * R / (n - 1), rhs = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Vec<2> x(-R + hx * i, -R + hx * j);
      if (x.norm() > 0.74 * R) continue;
      WeightedVal<2> pv = Pi(x);
      double pn = 0;
      for (const auto& mm : pv) pn += mm.norm();
      if (pn < 1e-14) continue;
      MetricJet<2> mj = m.jet(x);
      WeightedVal<2> av = adjoint_I<2>(m, h, x, ctx.cfg.fiber_n, T, tol);
      double cell = 0;
      for (int k = 0; k < 4; ++k) cell += (mj.ginv * av[k] * mj.ginv * pv[k]).trace();
      rhs += cell * mj.sqrt_det * hx * hx;
    }
  double rel = std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs));
  nlohmann::json j;
  j["pairing_boundary"] = lhs;
  j["pairing_interior"] = rhs;
  j["relative_mismatch"] = rel;
  ctx.write_json("adjoint_check.json", j);
  std::cout << "adjoint-check: relative mismatch " << rel << "\n";
  return rel <= 1e-3 ? 0 : 1;
}

int cmd_potential_check(const RunContext& ctx) {
  Metric<2> m(ctx.cfg.metric);
  Rng rng(ctx.cfg.seed);
  BumpCovectorField<2> v = random_covector_field<2>(m.domain(), rng, 2);
  DsymField<2> dsv(m, v);
  double scale = v.c1_scale();
  Rng rng2(ctx.cfg.seed + 1);
  auto entries = random_entries_2d(m.domain(), 64, rng2);
  CsvWriter csv({"ray", "value"});
  double worst = 0.0;
  for (size_t i = 0; i < entries.size(); ++i) {
    GeodesicRecord<2> rec = trace<2>(m, entries[i], ctx.cfg.horizon, ctx.cfg.ode_tol);
    double r = transform_X<2>(m, dsv, rec, ctx.cfg.path_quad).norm();
    csv.row({(double)i, r});
    worst = std::max(worst, r);
  }
  ctx.write_csv("potential_check.csv", csv);
  std::cout << "potential-check: max |X d^s v| / scale = " << worst / scale << "\n";
  return worst <= 1e-6 * scale ? 0 : 1;
}

int cmd_linearize_check(const RunContext& ctx) {
  MetricSpec spec = ctx.cfg.metric;
  Metric<2> m(spec);
  Rng rng(ctx.cfg.seed);
  BumpTensorField<2> f = random_tensor_field<2>(m.domain(), rng, 2, spec.cutoff_sharpness);
  std::array<BumpTensorField<2>, 2> tilde = {
      random_tensor_field<2>(m.domain(), rng, 1, spec.cutoff_sharpness),
      random_tensor_field<2>(m.domain(), rng, 1, spec.cutoff_sharpness)};
  Rng rng2(ctx.cfg.seed + 7);
  auto rays = random_entries_2d(m.domain(), 64, rng2);
  LinearizationReport rep = linearization_suite<2>(spec, f, tilde, rays, ctx.cfg.eps_list,
                                                   ctx.cfg.horizon, 1e-11, ctx.cfg.path_quad);
  CsvWriter csv({"eps", "residual_flow", "residual_christoffel", "residual_connection"});
  for (size_t i = 0; i < rep.eps.size(); ++i)
    csv.row({rep.eps[i], rep.residual_flow[i], rep.residual_christoffel[i],
             rep.residual_connection[i]});
  ctx.write_csv("linearize_check.csv", csv);
  nlohmann::json j;
  j["slope_flow"] = rep.slope_flow;
  j["slope_christoffel"] = rep.slope_christoffel;
  j["slope_connection"] = rep.slope_connection;
  ctx.write_json("linearize_check.json", j);
  std::cout << "linearize-check: slopes " << rep.slope_flow << ", " << rep.slope_christoffel
            << ", " << rep.slope_connection << "\n";
  bool ok = std::abs(rep.slope_flow - 2.0) <= 0.15 &&
            std::abs(rep.slope_christoffel - 2.0) <= 0.15 &&
            std::abs(rep.slope_connection - 2.0) <= 0.15;
  return ok ? 0 : 1;
}

int cmd_decompose(const RunContext& ctx) {
  Metric<2> m(ctx.cfg.metric);
  Domain fd = m.domain();
  fd.inner_radius = 0.8 * m.domain().inner_radius;
  Rng rng(ctx.cfg.seed);
  BumpTensorField<2> f = random_tensor_field<2>(fd, rng, 2, 1.2);
  CsvWriter csv({"n", "h", "annihilation", "potential_rejection", "orthogonality"});
  std::vector<double> hs, ann;
  for (int n : {33, 65, 129}) {
    TensorCalculus<2> calc(m, n);
    VecX fg = sample_tensor<2>(calc.grid(), f);
    VecX fs, v;
    SolveReport rep = calc.solenoidal_project(fg, fs, v, 1e-11);
    if (!rep.converged) {
      std::cout << "decompose: CG failed at n=" << n << " residual "
                << rep.relative_residual << "\n";
      return 1;
    }
    double a = calc.div_residual_norm(fs, m.domain().inner_radius) / calc.norm_tensor(fg, true);
    Rng rngv(ctx.cfg.seed + 3);
    BumpCovectorField<2> v0 = random_covector_field<2>(m.domain(), rngv, 2);
    DsymField<2> dsv(m, v0);
    VecX fp = sample_tensor<2>(calc.grid(), dsv);
    VecX fps, vp;
    calc.solenoidal_project(fp, fps, vp, 1e-11);
    double pot = calc.norm_tensor(fps, true) / calc.norm_tensor(fp, true);
    double ortho = std::abs(calc.inner_tensor(fs, calc.dsym(v), true)) /
                   (calc.norm_tensor(fs) * std::max(1e-30, calc.norm_tensor(calc.dsym(v))));
    csv.row({(double)n, calc.grid().spacing(), a, pot, ortho});
    hs.push_back(calc.grid().spacing());
    ann.push_back(a);
  }
  ctx.write_csv("decompose.csv", csv);
  double slope = loglog_slope(hs, ann);
  std::cout << "decompose: annihilation slope " << slope << "\n";
  return std::abs(slope - 2.0) <= 0.3 ? 0 : 1;
}

int cmd_symbol(const RunContext& ctx) {
  Metric<2> m(ctx.cfg.metric);
  Rng rng(ctx.cfg.seed);
  Vec<2> x = random_in_ball<2>(rng, 0.25);
  Vec<2> omega = random_unit<2>(rng);
  SymbolOptions<2> opt;
  opt.horizon = ctx.cfg.horizon;
  opt.tol = std::max(ctx.cfg.ode_tol, 1e-9);
  CutoffAlpha<2> alpha = make_complete_alpha<2>(m, x, omega, opt.horizon);
  MatX N1 = symbol_N1<2>(m, &alpha, x, omega, opt);
  SymbolKernelReport rep = kernel_analysis<2>(N1, m, x, omega);
  CsvWriter csv({"row", "col", "value"});
  for (int i = 0; i < N1.rows(); ++i)
    for (int j = 0; j < N1.cols(); ++j) csv.row({(double)i, (double)j, N1(i, j)});
  ctx.write_csv("symbol_n1.csv", csv);
  nlohmann::json j;
  j["x"] = {x[0], x[1]};
  j["omega"] = {omega[0], omega[1]};
  j["kernel_dim"] = rep.kernel_dim;
  j["rank"] = rep.rank;
  j["max_principal_angle"] = rep.max_principal_angle;
  j["min_rayleigh_on_complement"] = rep.min_rayleigh;
  ctx.write_json("symbol.json", j);
  std::cout << "symbol: kernel dim " << rep.kernel_dim << ", min rayleigh " << rep.min_rayleigh
            << "\n";
  return (rep.kernel_dim == 2 && rep.min_rayleigh > 0) ? 0 : 1;
}

int cmd_conjugate(const RunContext& ctx) {
  if (ctx.cfg.focus_metric.bumps.empty()) {
    std::cerr << "conjugate: config has no [focus_bump] sections\n";
    return 2;
  }
  Metric<2> m(ctx.cfg.focus_metric);
  Vec<2> x(ctx.cfg.focus_base[0], ctx.cfg.focus_base[1]);
  Vec<2> dir(ctx.cfg.focus_direction[0], ctx.cfg.focus_direction[1]);
  RayExp<2> ray(m, x, dir, ctx.cfg.horizon + 1.0, ctx.cfg.ode_tol);
  ConjugateScan scan = find_conjugate<2>(ray, ray.record().exit_time, 256);
  CsvWriter csv({"t_star", "sigma_min", "sigma_max", "grad_norm", "transversality",
                 "is_fold", "sfr_rank", "coker_rank"});
  bool found_fold = false;
  for (double t : scan.radii) {
    Vec<2> xis = t * ray.unit_direction();
    FoldReport<2> fr = classify_fold<2>(m, x, xis, FoldTolerances{}, scan.max_abs_det,
                                        ctx.cfg.ode_tol);
    StrongFoldReport<2> sf = strong_fold_regular_test<2>(m, x, xis, fr);
    csv.row({t, fr.sigma_min, fr.sigma_max, fr.grad_det.norm(), fr.transversality,
             fr.cls == FoldClass::Fold ? 1.0 : 0.0, (double)sf.rank_full_map,
             (double)sf.rank_cokernel});
    found_fold = found_fold || fr.cls == FoldClass::Fold;
  }
  ctx.write_csv("conjugate.csv", csv);
  std::cout << "conjugate: " << scan.radii.size() << " radii, fold found: " << found_fold
            << "\n";
  return (!scan.radii.empty() && found_fold) ? 0 : 1;
}

int cmd_fold_atlas(const RunContext& ctx) {
  if (ctx.cfg.focus_metric.bumps.empty()) {
    std::cerr << "fold-atlas: config has no [focus_bump] sections\n";
    return 2;
  }
  Metric<2> m(ctx.cfg.focus_metric);
  Vec<2> x(ctx.cfg.focus_base[0], ctx.cfg.focus_base[1]);
  CsvWriter csv({"angle", "first_radius", "classification"});
  for (int i = 0; i < 64; ++i) {
    double th = -0.6 + 1.2 * i / 63.0;
    Vec<2> dir(std::cos(th), std::sin(th));
    RayExp<2> ray(m, x, dir, ctx.cfg.horizon + 1.0, ctx.cfg.ode_tol);
    if (ray.record().trapped) continue;
    ConjugateScan scan = find_conjugate<2>(ray, ray.record().exit_time, 192);
    if (scan.radii.empty()) {
      csv.row({th, 0.0, -1.0});
      continue;
    }
    Vec<2> xis = scan.radii[0] * ray.unit_direction();
    FoldReport<2> fr =
        classify_fold<2>(m, x, xis, FoldTolerances{}, scan.max_abs_det, ctx.cfg.ode_tol);
    csv.row({th, scan.radii[0], fr.cls == FoldClass::Fold ? 1.0 : 0.0});
  }
  ctx.write_csv("fold_atlas.csv", csv);
  std::cout << "fold-atlas: wrote 64 directions\n";
  return 0;
}

int cmd_assemble(const RunContext& ctx) {
  Metric<2> m(ctx.cfg.metric);
  TensorCalculus<2> calc(m, ctx.cfg.grid_n);
  ForwardSystem<2> sys = assemble_forward<2>(
      calc, inflow_rays_2d(m.domain(), ctx.cfg.rays_theta, ctx.cfg.rays_phi, ctx.cfg.phi_max),
      angle_bundles<2>(m.domain(), ctx.cfg.bundles), ctx.cfg.horizon, ctx.cfg.path_quad / 2,
      ctx.cfg.ode_tol, ctx.cfg.support_radius);
  save_forward_system<2>(sys, (ctx.out / "forward_system.bin").string());
  std::cout << "assemble: " << sys.rays.size() << " rays, " << sys.cols() << " dofs -> "
            << (ctx.out / "forward_system.bin") << "\n";
  return 0;
}

int cmd_invert(const RunContext& ctx) {
  Metric<2> m(ctx.cfg.metric);
  TensorCalculus<2> calc(m, ctx.cfg.grid_n);
  std::filesystem::path sys_path = ctx.out / "forward_system.bin";
  ForwardSystem<2> sys;
  if (std::filesystem::exists(sys_path)) {
    sys = load_forward_system<2>(calc, sys_path.string());
  } else {
    sys = assemble_forward<2>(
        calc, inflow_rays_2d(m.domain(), ctx.cfg.rays_theta, ctx.cfg.rays_phi, ctx.cfg.phi_max),
        angle_bundles<2>(m.domain(), ctx.cfg.bundles), ctx.cfg.horizon, ctx.cfg.path_quad / 2,
        ctx.cfg.ode_tol, ctx.cfg.support_radius);
  }
  Domain fd = m.domain();
  fd.inner_radius = 0.8 * ctx.cfg.support_radius;
  Rng rng(ctx.cfg.seed);
  BumpTensorField<2> f = random_tensor_field<2>(fd, rng, 2, 1.2);
  VecX fg = sample_tensor<2>(calc.grid(), f);
  VecX truth, vpart;
  calc.solenoidal_project(fg, truth, vpart, 1e-10);
  VecX data = sys.apply(fg);
  ReconstructionResult res = reconstruct<2>(sys, calc, data, ctx.cfg.reg, ctx.cfg.iters, 1e-8,
                                            ctx.cfg.smooth_weight);
  double err = calc.norm_tensor(res.recovered - truth, true) / calc.norm_tensor(truth, true);

  CsvWriter hist({"iteration", "relative_residual"});
  for (size_t i = 0; i < res.residual_history.size(); ++i)
    hist.row({(double)i, res.residual_history[i]});
  ctx.write_csv("invert_residuals.csv", hist);
  export_tensor_field<2>(calc.grid(), res.recovered, (ctx.out / "recovered.txt").string());
  nlohmann::json j;
  j["relative_error"] = err;
  j["iterations"] = res.iterations;
  j["regularization"] = res.regularization;
  j["diverged"] = res.diverged;
  ctx.write_json("invert.json", j);
  std::cout << "invert: relative error " << err << " after " << res.iterations
            << " iterations\n";
  return err <= 0.10 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geodesic X-ray transform toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;

  auto add = [&](const std::string& name, const std::string& desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("config", config_path, "experiment config file")->required();
    sub->add_option("--set", overrides, "override: section.key=value");
    return sub;
  };

  std::map<std::string, std::function<int(const RunContext&)>> handlers = {
      {"trace", cmd_trace},
      {"scatter", cmd_scatter},
      {"identity-check", cmd_identity_check},
      {"xray", cmd_xray},
      {"adjoint-check", cmd_adjoint_check},
      {"potential-check", cmd_potential_check},
      {"linearize-check", cmd_linearize_check},
      {"decompose", cmd_decompose},
      {"symbol", cmd_symbol},
      {"conjugate", cmd_conjugate},
      {"fold-atlas", cmd_fold_atlas},
      {"assemble", cmd_assemble},
      {"invert", cmd_invert},
  };

  add("trace", "trace sample rays and export records");
  add("scatter", "sweep the inflow boundary and export the scattering relation");
  add("identity-check", "verify the flow/scattering identities");
  add("xray", "apply the transform to a seeded test field");
  add("adjoint-check", "Santalo duality residual");
  add("potential-check", "annihilation of potential fields");
  add("linearize-check", "Richardson slopes of the three linearizations");
  add("decompose", "solenoidal decomposition convergence table");
  add("symbol", "principal symbol analysis at a random interior point");
  add("conjugate", "conjugate radii and fold classification on the focus ray");
  add("fold-atlas", "per-direction conjugate scan for atlas plotting");
  add("assemble", "assemble and persist the forward system");
  add("invert", "run the linearized reconstruction twin experiment");
  add("acceptance", "run the full acceptance suite");

  CLI11_PARSE(app, argc, argv);
  std::string sub = app.get_subcommands().front()->get_name();

  try {
    RunContext ctx = make_context(config_path, overrides, sub);
    if (sub == "acceptance")
      return run_acceptance(ctx.cfg, ctx.out.string(), std::cout) ? 0 : 1;
    return handlers.at(sub)(ctx);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
