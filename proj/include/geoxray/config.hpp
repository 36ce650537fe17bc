#pragma once

#include <map>
#include <string>
#include <vector>

#include "geoxray/metric.hpp"

namespace geoxray {

// One experiment: a metric, a grid, ray/fiber quadrature resolutions and the
// solver knobs. Parsed from a sectioned key = value text file; command-line
// overrides address scalar keys as section.key.
struct ExperimentConfig {
  MetricSpec metric;        // [domain], [metric], repeated [bump]
  MetricSpec focus_metric;  // same domain, repeated [focus_bump]

  int grid_n = 65;
  double horizon = 3.0;
  double ode_tol = 1e-10;

  int rays_theta = 64;
  int rays_phi = 16;
  double phi_max = 0.9;
  int path_quad = 512;
  int fiber_n = 128;
  int radial_n = 64;
  double eps2 = 0.05;

  int bundles = 4;
  std::vector<double> eps_list = {1e-1, 3.1623e-2, 1e-2, 3.1623e-3, 1e-3};
  double reg = 3e-8;
  double smooth_weight = 10.0;
  int iters = 4000;
  double support_radius = 0.7;
  double noise_level = 0.01;

  // focusing experiment
  std::vector<double> focus_base = {-0.5, 0.0};
  std::vector<double> focus_direction = {1.0, 0.12};

  std::string output_dir = "out";
  unsigned long long seed = 2024;
  int workers = 1;

  void validate() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

// Applies "section.key=value" overrides (bump lists are file-only).
void apply_override(ExperimentConfig& cfg, const std::string& dotted_key,
                    const std::string& value);

// FNV-1a hash of the canonical serialization; stamped into manifests.
uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace geoxray
