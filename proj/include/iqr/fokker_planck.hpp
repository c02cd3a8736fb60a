#pragma once

// Finite-volume Crank-Nicolson solver for the density of z on [-1, 1]:
//
//   dP/dt = r theta^2 d/dz (D dP/dz - V P) + (S_x + S_y) d/dz ((1 - z^2) dP/dz)
//
// with D = (1 - z^2)^2 / 2 and V = -dD/dz, so the measurement flux is
// r theta^2 d(D P)/dz. Both flux coefficients vanish at z = +-1, which gives
// no-flux boundaries.
//
// Mesh: faces at tanh(xi) for xi uniform on [-L, L], with the outermost
// faces moved to exactly -1 and +1. Cell centers are arithmetic midpoints.
// The two end cells hold the mass that has reached |z| ~ 1; their
// measurement diffusivity is zero, which makes the discrete measurement
// operator conserve <z> exactly and gives the discrete noise operator the
// exact relaxation law d<z>/dt = -2 (S_x + S_y) <z>.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "iqr/errors.hpp"

namespace iqr {

struct DensityGrid {
  std::vector<double> faces;    // size n + 1, faces.front() = -1, faces.back() = 1
  std::vector<double> centers;  // size n
  std::vector<double> widths;   // size n
  std::vector<double> values;   // probability density per unit z
  double time = 0.0;
  double xi_extent = 0.0;  // L of the tanh mapping

  std::size_t size() const { return centers.size(); }

  double mass() const {
    double m = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) m += values[i] * widths[i];
    return m;
  }
};

// Mesh with `cells` cells on the tanh mapping of [-xi_extent, xi_extent].
inline DensityGrid make_tanh_grid(std::size_t cells, double xi_extent) {
  detail::require(cells >= 4 && cells % 2 == 0, "cell count must be even and >= 4");
  detail::require(xi_extent > 0.0, "xi extent must be positive");
  DensityGrid g;
  g.xi_extent = xi_extent;
  g.faces.resize(cells + 1);
  const double dxi = 2.0 * xi_extent / static_cast<double>(cells);
  for (std::size_t j = 0; j <= cells; ++j) {
    g.faces[j] = std::tanh(-xi_extent + dxi * static_cast<double>(j));
  }
  g.faces.front() = -1.0;
  g.faces.back() = 1.0;
  g.faces[cells / 2] = 0.0;
  g.centers.resize(cells);
  g.widths.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    g.centers[i] = 0.5 * (g.faces[i] + g.faces[i + 1]);
    g.widths[i] = g.faces[i + 1] - g.faces[i];
  }
  g.values.assign(cells, 0.0);
  return g;
}

// Graded mesh whose end cells have width `boundary_width`.
inline DensityGrid make_graded_grid(std::size_t cells = 1024, double boundary_width = 1e-6) {
  detail::require(boundary_width > 0.0 && boundary_width < 0.5, "boundary width out of range");
  const double inner = std::atanh(1.0 - boundary_width);
  const double extent = inner / (1.0 - 2.0 / static_cast<double>(cells));
  return make_tanh_grid(cells, extent);
}

// Unit mass at z0, split between the two nearest cell centers so that
// <z> = z0 holds exactly on the grid.
inline void set_point_mass(DensityGrid& g, double z0) {
  detail::require(std::abs(z0) <= 1.0, "z0 must lie in [-1, 1]");
  std::fill(g.values.begin(), g.values.end(), 0.0);
  const auto& c = g.centers;
  if (z0 <= c.front()) {
    g.values.front() = 1.0 / g.widths.front();
    return;
  }
  if (z0 >= c.back()) {
    g.values.back() = 1.0 / g.widths.back();
    return;
  }
  const auto hi = static_cast<std::size_t>(std::upper_bound(c.begin(), c.end(), z0) - c.begin());
  const std::size_t lo = hi - 1;
  const double w_hi = (z0 - c[lo]) / (c[hi] - c[lo]);
  g.values[lo] = (1.0 - w_hi) / g.widths[lo];
  g.values[hi] = w_hi / g.widths[hi];
}

// Cell averages of a density evaluated with 3-point Gauss quadrature.
inline void set_density(DensityGrid& g, const std::function<double(double)>& density) {
  static constexpr double node = 0.7745966692414834;  // sqrt(3/5)
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double mid = g.centers[i];
    const double half = 0.5 * g.widths[i];
    const double sum = 5.0 * density(mid - node * half) + 8.0 * density(mid) +
                       5.0 * density(mid + node * half);
    g.values[i] = sum / 18.0;
  }
}

struct FpParams {
  double meas_rate = 1.0;   // r theta^2
  double noise_rate = 0.0;  // S_x + S_y

  static double diffusion(double z) {
    const double w = (1.0 - z) * (1.0 + z);
    return 0.5 * w * w;
  }
  static double drift(double z) { return 2.0 * z * (1.0 - z) * (1.0 + z); }

  void validate() const {
    detail::require(meas_rate >= 0.0 && std::isfinite(meas_rate), "meas_rate must be >= 0");
    detail::require(noise_rate >= 0.0 && std::isfinite(noise_rate), "noise_rate must be >= 0");
  }
};

// Step with meas_rate * dt = 0.05 (or noise_rate * dt = 0.05 if larger).
inline double default_dt(const FpParams& p) {
  const double fastest = std::max(p.meas_rate, 2.0 * p.noise_rate);
  return fastest > 0.0 ? 0.05 / fastest : 1.0;
}

struct SolveOptions {
  double dt = 0.0;                    // 0 selects default_dt
  std::vector<double> output_times;   // snapshot times in (t0, t_end]
  int startup_steps = 4;              // implicit Euler half-steps before CN
  double negativity_tolerance = 1e-12;  // per-cell mass
};

namespace detail {

// Tridiagonal operator in P: (dP/dt)_i = lo_i P_{i-1} + di_i P_i + up_i P_{i+1}.
struct FpOperator {
  std::vector<double> lo, di, up;
};

inline FpOperator build_operator(const DensityGrid& g, const FpParams& p) {
  const std::size_t n = g.size();
  std::vector<double> dcoef(n);
  for (std::size_t i = 0; i < n; ++i) dcoef[i] = FpParams::diffusion(g.centers[i]);
  dcoef.front() = 0.0;
  dcoef.back() = 0.0;
  FpOperator op{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                std::vector<double>(n, 0.0)};
  // Interior face j sits between cells j-1 and j.
  for (std::size_t j = 1; j < n; ++j) {
    const double gap = g.centers[j] - g.centers[j - 1];
    const double f = g.faces[j];
    const double a = p.meas_rate / gap;
    const double b = p.noise_rate * (1.0 - f) * (1.0 + f) / gap;
    const double into_right = a * dcoef[j] + b;     // coefficient of P_j in F_j
    const double from_left = a * dcoef[j - 1] + b;  // coefficient of -P_{j-1}
    // cell j-1 gains F_j, cell j loses F_j
    op.up[j - 1] += into_right / g.widths[j - 1];
    op.di[j - 1] -= from_left / g.widths[j - 1];
    op.di[j] -= into_right / g.widths[j];
    op.lo[j] += from_left / g.widths[j];
  }
  return op;
}

// Solves (I - c L) x = rhs by the Thomas algorithm.
inline std::vector<double> solve_implicit(const FpOperator& op, double c,
                                          const std::vector<double>& rhs) {
  const std::size_t n = rhs.size();
  std::vector<double> cp(n), dp(n);
  double denom = 1.0 - c * op.di[0];
  cp[0] = -c * op.up[0] / denom;
  dp[0] = rhs[0] / denom;
  for (std::size_t i = 1; i < n; ++i) {
    const double a = -c * op.lo[i];
    denom = (1.0 - c * op.di[i]) - a * cp[i - 1];
    cp[i] = -c * op.up[i] / denom;
    dp[i] = (rhs[i] - a * dp[i - 1]) / denom;
  }
  std::vector<double> x(n);
  x[n - 1] = dp[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) x[i] = dp[i] - cp[i] * x[i + 1];
  return x;
}

inline std::vector<double> apply_explicit(const FpOperator& op, double c,
                                          const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lv = op.di[i] * v[i];
    if (i > 0) lv += op.lo[i] * v[i - 1];
    if (i + 1 < n) lv += op.up[i] * v[i + 1];
    out[i] = v[i] + c * lv;
  }
  return out;
}

inline void check_positivity(const DensityGrid& g, double tol) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.values[i] * g.widths[i] < -tol) {
      throw numerical_error("Fokker-Planck solve lost positivity at z = " +
                            std::to_string(g.centers[i]) + " (cell mass " +
                            std::to_string(g.values[i] * g.widths[i]) +
                            "); reduce the time step");
    }
  }
}

}  // namespace detail

// Advances `initial` to t_end and returns snapshots at each requested output
// time followed by the final state.
inline std::vector<DensityGrid> solve(const DensityGrid& initial, const FpParams& params,
                                      double t_end, const SolveOptions& opts = {}) {
  params.validate();
  detail::require(t_end >= initial.time, "t_end precedes the initial time");
  const double dt = opts.dt > 0.0 ? opts.dt : default_dt(params);
  detail::require(std::isfinite(dt) && dt > 0.0, "dt must be positive");
  detail::require(initial.size() >= 256, "grid resolution must be at least 256 cells");

  std::vector<double> stops;
  for (double t : opts.output_times) {
    detail::require(t > initial.time && t <= t_end, "output time outside (t0, t_end]");
    stops.push_back(t);
  }
  std::sort(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());
  if (stops.empty() || stops.back() < t_end) stops.push_back(t_end);

  const detail::FpOperator op = detail::build_operator(initial, params);
  DensityGrid g = initial;
  std::vector<DensityGrid> out;
  int startup_left = std::max(0, opts.startup_steps);
  const double mass0 = initial.mass();

  for (double stop : stops) {
    const double span = stop - g.time;
    if (span > 0.0) {
      const auto steps = static_cast<long long>(std::ceil(span / dt - 1e-9));
      const double h = span / static_cast<double>(steps);
      for (long long k = 0; k < steps; ++k) {
        if (startup_left > 0) {
          // two implicit Euler half-steps damp the stiff modes of rough data
          g.values = detail::solve_implicit(op, 0.5 * h, g.values);
          g.values = detail::solve_implicit(op, 0.5 * h, g.values);
          startup_left -= 2;
        } else {
          g.values = detail::solve_implicit(op, 0.5 * h, detail::apply_explicit(op, 0.5 * h, g.values));
        }
        detail::check_positivity(g, opts.negativity_tolerance);
        // the scheme conserves mass exactly; remove the slow rounding drift
        // of the tridiagonal solves, but fail on anything larger
        const double m = g.mass();
        if (std::abs(m - mass0) > 1e-12 * mass0) {
          throw numerical_error("Fokker-Planck solve lost mass conservation");
        }
        for (double& v : g.values) v *= mass0 / m;
      }
    }
    g.time = stop;
    if (std::abs(g.mass() - mass0) > 1e-10) {
      throw numerical_error("Fokker-Planck solve lost mass conservation");
    }
    out.push_back(g);
  }
  return out;
}

struct GridMoments {
  double z;
  double one_minus_z2;
  double one_minus_z2_sq;
  double sqrt_one_minus_z2;
  double z_over_sqrt;
};

inline GridMoments moments(const DensityGrid& g) {
  GridMoments m{};
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double z = g.centers[i];
    const double w = g.values[i] * g.widths[i];
    const double t = (1.0 - z) * (1.0 + z);
    const double r = std::sqrt(t);
    m.z += w * z;
    m.one_minus_z2 += w * t;
    m.one_minus_z2_sq += w * t * t;
    m.sqrt_one_minus_z2 += w * r;
    m.z_over_sqrt += w * z / r;
  }
  return m;
}

inline std::map<std::string, double> moment_map(const DensityGrid& g) {
  const GridMoments m = moments(g);
  return {{"z", m.z},
          {"one_minus_z2", m.one_minus_z2},
          {"one_minus_z2_sq", m.one_minus_z2_sq},
          {"sqrt_one_minus_z2", m.sqrt_one_minus_z2},
          {"z_over_sqrt_one_minus_z2", m.z_over_sqrt}};
}

// L1 distance between the grid and a reference density (cell-averaged).
inline double l1_distance(const DensityGrid& g, const std::function<double(double)>& density) {
  DensityGrid ref = g;
  set_density(ref, density);
  double d = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) d += std::abs(g.values[i] - ref.values[i]) * g.widths[i];
  return d;
}

struct SamplePoint {
  double z;
  double t;
};

// Largest residual of the Fokker-Planck equation for density(z, t) over the
// sample points, from fourth-order central differences, divided by the
// largest magnitude of the individual terms.
inline double pde_residual(const std::function<double(double, double)>& density,
                           const FpParams& params, const std::vector<SamplePoint>& points,
                           double rel_step = 5e-3) {
  params.validate();
  double worst = 0.0;
  double scale = 0.0;
  for (const auto& pt : points) {
    const double z = pt.z;
    const double t = pt.t;
    const double hz = rel_step * (1.0 - z) * (1.0 + z);
    const double ht = rel_step * t;
    auto f = [&](double dz) { return density(z + dz, t); };
    const double p0 = f(0.0);
    const double p1 = f(hz), m1 = f(-hz), p2 = f(2 * hz), m2 = f(-2 * hz);
    const double d1 = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * hz);
    const double d2 = (16.0 * (p1 + m1) - (p2 + m2) - 30.0 * p0) / (12.0 * hz * hz);
    const double dt = (8.0 * (density(z, t + ht) - density(z, t - ht)) -
                       (density(z, t + 2 * ht) - density(z, t - 2 * ht))) /
                      (12.0 * ht);
    // d^2(D P)/dz^2 with D = (1 - z^2)^2 / 2
    const double w = (1.0 - z) * (1.0 + z);
    const double dd = 0.5 * w * w;
    const double dd1 = -2.0 * z * w;
    const double dd2 = 6.0 * z * z - 2.0;
    const double meas = params.meas_rate * (dd * d2 + 2.0 * dd1 * d1 + dd2 * p0);
    const double noise = params.noise_rate * (w * d2 - 2.0 * z * d1);
    worst = std::max(worst, std::abs(dt - meas - noise));
    scale = std::max(scale, std::abs(dt) + std::abs(meas) + std::abs(noise));
  }
  return scale > 0.0 ? worst / scale : worst;
}

}  // namespace iqr
