#include "geoxray/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace geoxray {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  size_t b = s.find_last_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_list(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_double(v[i]);
  }
  return out;
}

struct Line {
  std::string section;
  std::string key;
  std::string value;
};

void set_bump_key(Bump& b, const std::string& key, const std::string& value,
                  const std::string& where) {
  if (key == "center")
    b.center = parse_list(value);
  else if (key == "width")
    b.width = std::stod(value);
  else if (key == "conformal")
    b.conformal = (value == "true" || value == "1");
  else if (key == "amplitude")
    b.amplitude = std::stod(value);
  else if (key == "amplitude_matrix") {
    b.amplitude_matrix = parse_list(value);
    b.conformal = false;
  } else
    throw std::invalid_argument("config: unknown key '" + key + "' in [" + where + "]");
}

}  // namespace

void ExperimentConfig::validate() const {
  metric.domain.validate();
  auto positive = [](double v, const char* name) {
    if (!(v > 0))
      throw std::invalid_argument(std::string("config: ") + name + " must be positive");
  };
  positive(grid_n, "grid.n");
  positive(horizon, "run.horizon");
  positive(ode_tol, "run.ode_tol");
  positive(rays_theta, "rays.theta");
  positive(rays_phi, "rays.phi");
  positive(phi_max, "rays.phi_max");
  positive(path_quad, "quadrature.path");
  positive(fiber_n, "quadrature.fiber");
  positive(radial_n, "quadrature.radial");
  positive(bundles, "inversion.bundles");
  positive(reg, "inversion.reg");
  positive(iters, "inversion.iters");
  positive(support_radius, "inversion.support_radius");
  for (double e : eps_list) positive(e, "run.eps_list entries");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  cfg.metric.bumps.clear();
  cfg.focus_metric.bumps.clear();

  std::stringstream ss(text);
  std::string raw;
  std::string section;
  std::vector<Bump>* bump_target = nullptr;
  Bump current;
  bool in_bump = false;

  auto flush_bump = [&]() {
    if (in_bump && bump_target) bump_target->push_back(current);
    in_bump = false;
    current = Bump();
  };

  while (std::getline(ss, raw)) {
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[' && line.back() == ']') {
      flush_bump();
      section = trim(line.substr(1, line.size() - 2));
      if (section == "bump") {
        bump_target = &cfg.metric.bumps;
        in_bump = true;
      } else if (section == "focus_bump") {
        bump_target = &cfg.focus_metric.bumps;
        in_bump = true;
      }
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key = value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (in_bump) {
      set_bump_key(current, key, value, section);
      continue;
    }
    apply_override(cfg, section.empty() ? key : section + "." + key, value);
  }
  flush_bump();

  cfg.focus_metric.domain = cfg.metric.domain;
  cfg.focus_metric.cutoff_sharpness = cfg.metric.cutoff_sharpness;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& dotted, const std::string& value) {
  auto bad = [&]() {
    throw std::invalid_argument("config: unknown key '" + dotted + "'");
  };
  if (dotted == "domain.dimension")
    cfg.metric.domain.dimension = std::stoi(value);
  else if (dotted == "domain.radius")
    cfg.metric.domain.radius = std::stod(value);
  else if (dotted == "domain.inner_radius")
    cfg.metric.domain.inner_radius = std::stod(value);
  else if (dotted == "metric.cutoff_sharpness")
    cfg.metric.cutoff_sharpness = std::stod(value);
  else if (dotted == "grid.n")
    cfg.grid_n = std::stoi(value);
  else if (dotted == "run.horizon")
    cfg.horizon = std::stod(value);
  else if (dotted == "run.ode_tol")
    cfg.ode_tol = std::stod(value);
  else if (dotted == "run.eps_list")
    cfg.eps_list = parse_list(value);
  else if (dotted == "run.output_dir")
    cfg.output_dir = value;
  else if (dotted == "run.seed")
    cfg.seed = std::stoull(value);
  else if (dotted == "run.workers")
    cfg.workers = std::stoi(value);
  else if (dotted == "rays.theta")
    cfg.rays_theta = std::stoi(value);
  else if (dotted == "rays.phi")
    cfg.rays_phi = std::stoi(value);
  else if (dotted == "rays.phi_max")
    cfg.phi_max = std::stod(value);
  else if (dotted == "quadrature.path")
    cfg.path_quad = std::stoi(value);
  else if (dotted == "quadrature.fiber")
    cfg.fiber_n = std::stoi(value);
  else if (dotted == "quadrature.radial")
    cfg.radial_n = std::stoi(value);
  else if (dotted == "quadrature.eps2")
    cfg.eps2 = std::stod(value);
  else if (dotted == "inversion.bundles")
    cfg.bundles = std::stoi(value);
  else if (dotted == "inversion.reg")
    cfg.reg = std::stod(value);
  else if (dotted == "inversion.smooth")
    cfg.smooth_weight = std::stod(value);
  else if (dotted == "inversion.iters")
    cfg.iters = std::stoi(value);
  else if (dotted == "inversion.support_radius")
    cfg.support_radius = std::stod(value);
  else if (dotted == "inversion.noise_level")
    cfg.noise_level = std::stod(value);
  else if (dotted == "focus.base")
    cfg.focus_base = parse_list(value);
  else if (dotted == "focus.direction")
    cfg.focus_direction = parse_list(value);
  else
    bad();
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[domain]\n";
  out << "dimension = " << cfg.metric.domain.dimension << "\n";
  out << "radius = " << format_double(cfg.metric.domain.radius) << "\n";
  out << "inner_radius = " << format_double(cfg.metric.domain.inner_radius) << "\n";
  out << "\n[metric]\n";
  out << "cutoff_sharpness = " << format_double(cfg.metric.cutoff_sharpness) << "\n";
  for (const auto& b : cfg.metric.bumps) {
    out << "\n[bump]\n";
    out << "center = " << format_list(b.center) << "\n";
    out << "width = " << format_double(b.width) << "\n";
    if (b.conformal) {
      out << "conformal = true\n";
      out << "amplitude = " << format_double(b.amplitude) << "\n";
    } else {
      out << "amplitude_matrix = " << format_list(b.amplitude_matrix) << "\n";
    }
  }
  for (const auto& b : cfg.focus_metric.bumps) {
    out << "\n[focus_bump]\n";
    out << "center = " << format_list(b.center) << "\n";
    out << "width = " << format_double(b.width) << "\n";
    if (b.conformal) {
      out << "conformal = true\n";
      out << "amplitude = " << format_double(b.amplitude) << "\n";
    } else {
      out << "amplitude_matrix = " << format_list(b.amplitude_matrix) << "\n";
    }
  }
  out << "\n[grid]\n";
  out << "n = " << cfg.grid_n << "\n";
  out << "\n[run]\n";
  out << "horizon = " << format_double(cfg.horizon) << "\n";
  out << "ode_tol = " << format_double(cfg.ode_tol) << "\n";
  out << "eps_list = " << format_list(cfg.eps_list) << "\n";
  out << "output_dir = " << cfg.output_dir << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "workers = " << cfg.workers << "\n";
  out << "\n[rays]\n";
  out << "theta = " << cfg.rays_theta << "\n";
  out << "phi = " << cfg.rays_phi << "\n";
  out << "phi_max = " << format_double(cfg.phi_max) << "\n";
  out << "\n[quadrature]\n";
  out << "path = " << cfg.path_quad << "\n";
  out << "fiber = " << cfg.fiber_n << "\n";
  out << "radial = " << cfg.radial_n << "\n";
  out << "eps2 = " << format_double(cfg.eps2) << "\n";
  out << "\n[inversion]\n";
  out << "bundles = " << cfg.bundles << "\n";
  out << "reg = " << format_double(cfg.reg) << "\n";
  out << "smooth = " << format_double(cfg.smooth_weight) << "\n";
  out << "iters = " << cfg.iters << "\n";
  out << "support_radius = " << format_double(cfg.support_radius) << "\n";
  out << "noise_level = " << format_double(cfg.noise_level) << "\n";
  out << "\n[focus]\n";
  out << "base = " << format_list(cfg.focus_base) << "\n";
  out << "direction = " << format_list(cfg.focus_direction) << "\n";
  return out.str();
}

uint64_t config_hash(const ExperimentConfig& cfg) {
  std::string s = serialize_config(cfg);
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace geoxray
