#pragma once

// Optical Bloch equations with measurement dephasing and the AC Stark
// detuning delta = omega0 - r theta:
//   du_x/dt = -u_x / T2 - delta u_y
//   du_y/dt = -u_y / T2 + delta u_x
//   du_z/dt = -u_z / T1          (stimulated)
//           = -(1 + u_z) / T1    (spontaneous)
// Fixed-step RK4.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "iqr/analytic.hpp"
#include "iqr/errors.hpp"

namespace iqr {

struct BlochState {
  double u_x = 0.0;
  double u_y = 0.0;
  double u_z = 0.0;

  double norm_squared() const { return u_x * u_x + u_y * u_y + u_z * u_z; }
  double transverse_squared() const { return u_x * u_x + u_y * u_y; }
};

enum class RelaxationMode { stimulated, spontaneous };

struct BlochParams {
  double inv_T1 = 0.0;
  double inv_T2 = 0.0;
  double detuning = 0.0;  // omega0 - r theta
  RelaxationMode mode = RelaxationMode::stimulated;

  void validate() const {
    detail::require(std::isfinite(inv_T1) && inv_T1 >= 0.0, "inv_T1 must be >= 0");
    detail::require(std::isfinite(inv_T2) && inv_T2 >= 0.0, "inv_T2 must be >= 0");
    detail::require(std::isfinite(detuning), "detuning must be finite");
  }

  double fastest_rate() const { return std::max({inv_T1, inv_T2, std::abs(detuning)}); }
};

// Coefficients from relaxation_rates, so the rate formulas live in one place.
inline BlochParams bloch_params(const RateSet& rates, double omega0,
                                RelaxationMode mode = RelaxationMode::stimulated) {
  return {rates.inv_T1, rates.inv_T2, omega0 - rates.stark_shift, mode};
}

inline BlochState bloch_derivative(const BlochState& u, const BlochParams& p) {
  BlochState d;
  d.u_x = -p.inv_T2 * u.u_x - p.detuning * u.u_y;
  d.u_y = -p.inv_T2 * u.u_y + p.detuning * u.u_x;
  d.u_z = p.mode == RelaxationMode::stimulated ? -p.inv_T1 * u.u_z : -p.inv_T1 * (1.0 + u.u_z);
  return d;
}

inline double suggested_dt(const BlochParams& p) {
  const double f = p.fastest_rate();
  return f > 0.0 ? 0.1 / f : INFINITY;
}

// States at t = 0, dt, 2 dt, ..., with the last step shortened to land on t_end.
inline std::vector<BlochState> integrate(const BlochState& u0, const BlochParams& params,
                                         double t_end, double dt) {
  params.validate();
  detail::require(std::isfinite(t_end) && t_end >= 0.0, "t_end must be >= 0");
  detail::require(std::isfinite(dt) && dt > 0.0, "dt must be positive");
  detail::require(u0.norm_squared() <= 1.0 + 1e-9, "initial Bloch vector lies outside the ball");
  if (dt * params.fastest_rate() > 0.1) {
    throw invalid_parameter("step too large: dt * max rate must be <= 0.1; use dt <= " +
                            std::to_string(suggested_dt(params)));
  }
  std::vector<BlochState> out{u0};
  const auto steps = static_cast<long long>(std::ceil(t_end / dt - 1e-9));
  out.reserve(static_cast<std::size_t>(steps) + 1);
  auto axpy = [](const BlochState& a, double c, const BlochState& b) {
    return BlochState{a.u_x + c * b.u_x, a.u_y + c * b.u_y, a.u_z + c * b.u_z};
  };
  BlochState u = u0;
  for (long long k = 0; k < steps; ++k) {
    const double h = std::min(dt, t_end - static_cast<double>(k) * dt);
    const BlochState k1 = bloch_derivative(u, params);
    const BlochState k2 = bloch_derivative(axpy(u, 0.5 * h, k1), params);
    const BlochState k3 = bloch_derivative(axpy(u, 0.5 * h, k2), params);
    const BlochState k4 = bloch_derivative(axpy(u, h, k3), params);
    u.u_x += h / 6.0 * (k1.u_x + 2.0 * k2.u_x + 2.0 * k3.u_x + k4.u_x);
    u.u_y += h / 6.0 * (k1.u_y + 2.0 * k2.u_y + 2.0 * k3.u_y + k4.u_y);
    u.u_z += h / 6.0 * (k1.u_z + 2.0 * k2.u_z + 2.0 * k3.u_z + k4.u_z);
    if (u.norm_squared() > 1.0 + 1e-9) throw numerical_error("Bloch vector left the unit ball");
    out.push_back(u);
  }
  return out;
}

struct SteadyState {
  BlochState state;
  bool degenerate = false;  // u_z is a free line of fixed points
};

inline SteadyState steady_state(const BlochParams& params, double u_z0 = 0.0) {
  params.validate();
  if (params.inv_T1 == 0.0 && params.inv_T2 == 0.0) {
    throw domain_error("no unique steady state: all relaxation rates are zero");
  }
  if (params.inv_T1 == 0.0) return {{0.0, 0.0, u_z0}, true};
  if (params.mode == RelaxationMode::spontaneous) return {{0.0, 0.0, -1.0}, params.inv_T2 == 0.0};
  return {{0.0, 0.0, 0.0}, params.inv_T2 == 0.0};
}

}  // namespace iqr
