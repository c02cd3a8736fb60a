#pragma once

// Closed-form references: differential-charge density, the measurement-only
// Green's function of the polarization z, its undecided mass, the
// white-noise stationary density, Bloch relaxation rates, and the
// trapped-ion design calculator.
//
// Dimensionless time is tau = r t theta^2 throughout.

#include <cmath>
#include <numbers>

#include "iqr/errors.hpp"

namespace iqr {

namespace detail {

inline double log_cosh(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

// Phi(b) - Phi(a) for a <= b, using the tail that avoids cancellation.
inline double normal_interval(double a, double b) {
  constexpr double r2 = std::numbers::sqrt2;
  if (b <= 0.0) return 0.5 * (std::erfc(-b / r2) - std::erfc(-a / r2));
  if (a >= 0.0) return 0.5 * (std::erfc(a / r2) - std::erfc(b / r2));
  return 1.0 - 0.5 * std::erfc(-a / r2) - 0.5 * std::erfc(b / r2);
}

inline double log_normal_pdf(double x, double mean, double var) {
  return -0.5 * (x - mean) * (x - mean) / var - 0.5 * std::log(2.0 * std::numbers::pi * var);
}

inline double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -INFINITY) return a;
  return a + std::log1p(std::exp(b - a));
}

}  // namespace detail

// Density of q = (n_a - n_b) / ((n_a + n_b) theta) after time t: a mixture
// of unit-mean Gaussians with variance 1/(t r theta^2), weighted (1 +- z0)/2.
inline double log_charge_density(double q, double z0, double t, double r, double theta) {
  detail::require(std::abs(z0) <= 1.0, "z0 must lie in [-1, 1]");
  detail::require(t * r >= 1.0, "charge density needs t r >= 1");
  detail::require(theta != 0.0, "theta must be nonzero");
  const double var = 1.0 / (t * r * theta * theta);
  const double w_up = 0.5 * (1.0 + z0);
  const double w_dn = 0.5 * (1.0 - z0);
  const double l_up = w_up > 0.0 ? std::log(w_up) + detail::log_normal_pdf(q, 1.0, var) : -INFINITY;
  const double l_dn = w_dn > 0.0 ? std::log(w_dn) + detail::log_normal_pdf(q, -1.0, var) : -INFINITY;
  return detail::log_add(l_up, l_dn);
}

inline double charge_density(double q, double z0, double t, double r, double theta) {
  return std::exp(log_charge_density(q, z0, t, r, theta));
}

// Cumulative distribution of q for the same mixture.
inline double charge_cdf(double q, double z0, double t, double r, double theta) {
  const double sd = 1.0 / std::sqrt(t * r * theta * theta);
  const double w_up = 0.5 * (1.0 + z0);
  auto phi = [](double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); };
  return w_up * phi((q - 1.0) / sd) + (1.0 - w_up) * phi((q + 1.0) / sd);
}

// Green's function of the measurement-only Fokker-Planck equation for z.
// With u = artanh z and u0 = artanh z0,
//   P(z) = cosh u / cosh u0 * exp(-(u - u0)^2 / (2 tau) - tau / 2)
//          / sqrt(2 pi tau) / (1 - z^2).
// Equivalently, u is a two-component Gaussian mixture with means u0 +- tau,
// variance tau and weights (1 +- z0)/2.
// Same density over u = artanh z. Mass near the poles lives at |u| where
// z = tanh u rounds to +-1, so long-time integrals are done in u.
inline double log_greens_function_u(double u, double u0, double tau) {
  detail::require(std::isfinite(u0), "u0 must be finite");
  detail::require(tau > 0.0, "tau must be positive");
  return detail::log_cosh(u) - detail::log_cosh(u0) - (u - u0) * (u - u0) / (2.0 * tau) -
         0.5 * tau - 0.5 * std::log(2.0 * std::numbers::pi * tau);
}

inline double greens_function_u(double u, double u0, double tau) {
  return std::exp(log_greens_function_u(u, u0, tau));
}

inline double log_greens_function(double z, double z0, double tau) {
  if (!(std::abs(z) < 1.0)) throw domain_error("greens_function needs |z| < 1");
  detail::require(std::abs(z0) < 1.0, "z0 must satisfy |z0| < 1");
  const double jac = std::log1p(-z) + std::log1p(z);
  return log_greens_function_u(std::atanh(z), std::atanh(z0), tau) - jac;
}

inline double greens_function(double z, double z0, double tau) {
  return std::exp(log_greens_function(z, z0, tau));
}

// Probability that |z| < 1 - epsilon after dimensionless time tau. Decays
// as exp(-tau/2)/sqrt(tau) for long readouts.
inline double undecided_mass(double tau, double epsilon, double z0 = 0.0) {
  detail::require(tau > 0.0, "tau must be positive");
  detail::require(epsilon > 0.0 && epsilon <= 1.0, "epsilon must lie in (0, 1]");
  detail::require(std::abs(z0) < 1.0, "z0 must satisfy |z0| < 1");
  if (epsilon == 1.0) return 0.0;
  const double edge = std::atanh(1.0 - epsilon);
  const double u0 = std::atanh(z0);
  const double sd = std::sqrt(tau);
  double mass = 0.0;
  for (int sign : {1, -1}) {
    const double w = 0.5 * (1.0 + sign * z0);
    const double mean = u0 + sign * tau;
    mass += w * detail::normal_interval((-edge - mean) / sd, (edge - mean) / sd);
  }
  return mass;
}

// Normalization of the white-noise stationary density.
inline double stationary_normalization(double gamma) {
  detail::require(gamma > 0.0, "gamma must be positive");
  const double root = std::sqrt(1.0 + gamma);
  return (1.0 + gamma) * root / (root + gamma * std::atanh(1.0 / root));
}

// Stationary density of z under measurement plus white noise,
// gamma = 2 (S_x + S_y) / (r theta^2).
inline double stationary_density(double z, double gamma) {
  if (!(std::abs(z) < 1.0)) throw domain_error("stationary_density needs |z| < 1");
  const double d = gamma + (1.0 - z) * (1.0 + z);
  return gamma / (d * d) * stationary_normalization(gamma);
}

inline double log_stationary_density(double z, double gamma) {
  return std::log(stationary_density(z, gamma));
}

struct RateSet {
  double fermi_rate;   // 2 (S_x + S_y)
  double jump_rate;    // S_x + S_y
  double inv_T1;
  double inv_T2;       // r theta^2 / 2
  double stark_shift;  // r theta
  double zeno_factor;  // alpha / (alpha + r theta^2 / 2)
};

inline RateSet relaxation_rates(double s_x, double s_y, double alpha, double r, double theta,
                                double omega0) {
  detail::require(s_x >= 0.0 && s_y >= 0.0, "spectral densities must be >= 0");
  detail::require(alpha >= 0.0 && r > 0.0, "alpha and r must be non-negative");
  detail::require(r * theta * theta > 0.0, "r theta^2 must be positive");
  const double meas = 0.5 * r * theta * theta;
  const double detune = omega0 - r * theta;
  const double sum = s_x + s_y;
  RateSet out{};
  out.fermi_rate = 2.0 * sum;
  out.jump_rate = sum;
  const double width = alpha + meas;
  out.inv_T1 = 2.0 * sum * alpha * width / (width * width + detune * detune);
  out.inv_T2 = meas;
  out.stark_shift = r * theta;
  out.zeno_factor = alpha / width;
  return out;
}

// Same rates in the white-noise limit alpha -> infinity.
inline RateSet white_noise_rates(double s_x, double s_y, double r, double theta) {
  RateSet out = relaxation_rates(s_x, s_y, 0.0, r, theta, r * theta);
  out.inv_T1 = out.fermi_rate;
  out.zeno_factor = 1.0;
  return out;
}

namespace constants {
inline constexpr double planck = 6.62607015e-34;        // J s
inline constexpr double speed_of_light = 299792458.0;   // m / s
}  // namespace constants

struct DesignReport {
  double photon_energy;        // J
  double rate;                 // detected photons per second
  double n_exp;                // photons over the trace
  double theta_required;       // rad
  double stark_shift;          // rad / s, r theta
  double stark_hz;             // stark_shift / 2 pi
  double stark_wavenumber;     // cm^-1, stark_shift / (2 pi c)
  double stark_angular_wavenumber;  // cm^-1, stark_shift / c
  double rc_recommended;       // s, trace duration / 32
  double resolving_power;
};

inline DesignReport design_report(double optical_power, double wavelength, double duration,
                                  double resolving_power) {
  detail::require(optical_power > 0.0 && std::isfinite(optical_power), "power must be > 0");
  detail::require(wavelength > 0.0 && std::isfinite(wavelength), "wavelength must be > 0");
  detail::require(duration > 0.0 && std::isfinite(duration), "duration must be > 0");
  detail::require(resolving_power > 0.0 && std::isfinite(resolving_power),
                  "resolving power must be > 0");
  DesignReport d{};
  d.photon_energy = constants::planck * constants::speed_of_light / wavelength;
  d.rate = optical_power / d.photon_energy;
  d.n_exp = d.rate * duration;
  d.theta_required = std::sqrt(resolving_power / d.n_exp);
  d.stark_shift = d.rate * d.theta_required;
  d.stark_hz = d.stark_shift / (2.0 * std::numbers::pi);
  const double c_cm = constants::speed_of_light * 100.0;
  d.stark_wavenumber = d.stark_hz / c_cm;
  d.stark_angular_wavenumber = d.stark_shift / c_cm;
  d.rc_recommended = duration / 32.0;
  d.resolving_power = resolving_power;
  return d;
}

}  // namespace iqr
