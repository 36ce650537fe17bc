#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "geoxray/linalg.hpp"

namespace geoxray {

// Least-squares slope of log(y) against log(x). Points with y <= floor are
// dropped so tolerance floors do not pollute order fits.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y,
                           double floor = 0.0) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (!(y[i] > floor)) continue;
    double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
    ++n;
  }
  if (n < 2) throw std::runtime_error("loglog_slope: fewer than two usable points");
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Nodes and weights of composite trapezoid quadrature on [a, b].
inline void trapezoid_rule(double a, double b, int n, std::vector<double>& nodes,
                           std::vector<double>& weights) {
  if (n < 2) throw std::invalid_argument("trapezoid_rule: need n >= 2");
  nodes.resize(n);
  weights.resize(n);
  double h = (b - a) / (n - 1);
  for (int i = 0; i < n; ++i) {
    nodes[i] = a + h * i;
    weights[i] = (i == 0 || i == n - 1) ? 0.5 * h : h;
  }
}

// Midpoint rule on [a, b]; open rule, robust for integrands that vanish
// smoothly at the ends.
inline void midpoint_rule(double a, double b, int n, std::vector<double>& nodes,
                          std::vector<double>& weights) {
  if (n < 1) throw std::invalid_argument("midpoint_rule: need n >= 1");
  nodes.resize(n);
  weights.assign(n, (b - a) / n);
  for (int i = 0; i < n; ++i) nodes[i] = a + (b - a) * (i + 0.5) / n;
}

// Gauss-Legendre nodes/weights on [-1, 1] via Newton on the recurrence.
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

// Quadrature over the Euclidean unit sphere S^{D-1}.
// D = 2: periodic trapezoid on the circle (spectrally accurate).
// D = 3: Gauss-Legendre in cos(theta) x periodic trapezoid in phi.
template <int D>
void sphere_rule(int n_requested, std::vector<Vec<D>>& dirs, std::vector<double>& weights);

template <>
inline void sphere_rule<2>(int n, std::vector<Vec<2>>& dirs, std::vector<double>& weights) {
  dirs.resize(n);
  weights.assign(n, 2.0 * M_PI / n);
  for (int i = 0; i < n; ++i) {
    double th = 2.0 * M_PI * i / n;
    dirs[i] = Vec<2>(std::cos(th), std::sin(th));
  }
}

template <>
inline void sphere_rule<3>(int n, std::vector<Vec<3>>& dirs, std::vector<double>& weights) {
  int n_th = std::max(4, (int)std::round(std::sqrt((double)n / 2.0)));
  int n_ph = 2 * n_th;
  std::vector<double> ct, wt;
  gauss_legendre(n_th, ct, wt);
  dirs.clear();
  weights.clear();
  for (int i = 0; i < n_th; ++i) {
    double st = std::sqrt(std::max(0.0, 1.0 - ct[i] * ct[i]));
    for (int j = 0; j < n_ph; ++j) {
      double ph = 2.0 * M_PI * j / n_ph;
      dirs.push_back(Vec<3>(st * std::cos(ph), st * std::sin(ph), ct[i]));
      weights.push_back(wt[i] * 2.0 * M_PI / n_ph);
    }
  }
}

// Deterministic sampling helpers; all randomness in the project flows through
// a caller-seeded mt19937_64.
using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double a, double b) {
  return a + (b - a) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

template <int D> Vec<D> random_unit(Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vec<D> v;
  do {
    for (int i = 0; i < D; ++i) v[i] = nd(rng);
  } while (v.norm() < 1e-8);
  return v.normalized();
}

template <int D> Vec<D> random_in_ball(Rng& rng, double radius) {
  Vec<D> v;
  do {
    for (int i = 0; i < D; ++i) v[i] = uniform(rng, -radius, radius);
  } while (v.norm() >= radius);
  return v;
}

}  // namespace geoxray
