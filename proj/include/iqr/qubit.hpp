#pragma once

// Two-state system under photon-by-photon interferometric readout.
//
// A state is a pair of complex amplitudes (c_up, c_down) in the sigma_z
// basis. Each detected photon applies one of two diagonal Kraus operators
//
//   A = 1/2 ((cos t + i) I + sin t sigma_z)
//   B = 1/2 ((cos t - i) I - sin t sigma_z)
//
// which satisfy A^+ A + B^+ B = I. All eigenvalues are kept in exact
// trigonometric form; no small-angle truncation happens here.
//
// Bloch-vector convention: u_x + i u_y = 2 c_up conj(c_down). Coherent
// rotations are right-handed about their axis in this frame, so precession
// at omega0 carries u_x into u_y, and each detected photon retards the
// transverse phase by atan(sin t / cos^2 t) ~ t (the AC Stark shift).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>

#include "iqr/errors.hpp"

namespace iqr {

using complex = std::complex<double>;
using Vec3 = std::array<double, 3>;

enum class DetectionChannel { A, B };

struct PureQubitState {
  complex c_up{1.0, 0.0};
  complex c_down{0.0, 0.0};

  static PureQubitState up() { return {{1.0, 0.0}, {0.0, 0.0}}; }
  static PureQubitState down() { return {{0.0, 0.0}, {1.0, 0.0}}; }

  // Real amplitudes with polarization z0 and zero transverse phase.
  static PureQubitState from_polarization(double z0) {
    detail::require(std::isfinite(z0) && std::abs(z0) <= 1.0,
                    "polarization must lie in [-1, 1]");
    return {{std::sqrt(0.5 * (1.0 + z0)), 0.0},
            {std::sqrt(0.5 * (1.0 - z0)), 0.0}};
  }

  // State whose Bloch vector points along (u_x, u_y, u_z); the input is
  // normalized first.
  static PureQubitState from_bloch(const Vec3& u) {
    const double n = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    detail::require(std::isfinite(n) && n > 0.0, "Bloch vector must be nonzero");
    const double z = u[2] / n;
    const double phi = std::atan2(u[1], u[0]);
    return {{std::sqrt(0.5 * (1.0 + z)), 0.0},
            std::polar(std::sqrt(0.5 * (1.0 - z)), -phi)};
  }

  double norm_squared() const { return std::norm(c_up) + std::norm(c_down); }
};

inline PureQubitState normalized(PureQubitState s) {
  const double n = std::sqrt(s.norm_squared());
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw numerical_error("cannot normalize a zero or non-finite qubit state");
  }
  s.c_up /= n;
  s.c_down /= n;
  return s;
}

struct MeasurementSetup {
  double theta = 0.0;   // per-photon phase shift, radians
  double rate_r = 1.0;  // photons per unit time
  double omega0 = 0.0;  // rotating-frame splitting, radians per unit time
  double s = 0.0;       // sin(theta) cos(theta)
  complex a_plus, a_minus, b_plus, b_minus;
};

inline MeasurementSetup make_setup(double theta, double rate_r, double omega0 = 0.0) {
  detail::require(std::isfinite(theta) && std::abs(theta) < std::numbers::pi / 2,
                  "theta must be finite with |theta| < pi/2");
  detail::require(std::isfinite(rate_r) && rate_r > 0.0, "rate_r must be positive");
  detail::require(std::isfinite(omega0), "omega0 must be finite");
  const double c = std::cos(theta);
  const double sn = std::sin(theta);
  MeasurementSetup m;
  m.theta = theta;
  m.rate_r = rate_r;
  m.omega0 = omega0;
  m.s = sn * c;
  m.a_plus = 0.5 * complex(c + sn, 1.0);
  m.a_minus = 0.5 * complex(c - sn, 1.0);
  m.b_plus = 0.5 * complex(c - sn, -1.0);
  m.b_minus = 0.5 * complex(c + sn, -1.0);
  return m;
}

inline double polarization(const PureQubitState& st) {
  return std::norm(st.c_up) - std::norm(st.c_down);
}

// 1 - z^2 computed as 4 |c_up|^2 |c_down|^2, which keeps full relative
// precision next to the poles.
inline double transverse_weight(const PureQubitState& st) {
  return 4.0 * std::norm(st.c_up) * std::norm(st.c_down);
}

inline Vec3 bloch_vector(const PureQubitState& st) {
  const complex x = 2.0 * st.c_up * std::conj(st.c_down);
  return {x.real(), x.imag(), polarization(st)};
}

struct ChannelProbabilities {
  double p_a;
  double p_b;
};

inline ChannelProbabilities channel_probabilities(const PureQubitState& st,
                                                  const MeasurementSetup& setup) {
  const double z = polarization(st);
  return {0.5 * (1.0 + setup.s * z), 0.5 * (1.0 - setup.s * z)};
}

inline PureQubitState apply_detection(const PureQubitState& st, DetectionChannel ch,
                                      const MeasurementSetup& setup) {
  PureQubitState out = st;
  if (ch == DetectionChannel::A) {
    out.c_up *= setup.a_plus;
    out.c_down *= setup.a_minus;
  } else {
    out.c_up *= setup.b_plus;
    out.c_down *= setup.b_minus;
  }
  return normalized(out);
}

// Right-handed rotation of the Bloch vector about `axis` by `angle`.
// The axis must be unit length.
inline PureQubitState rotate(const PureQubitState& st, const Vec3& axis, double angle) {
  if (angle == 0.0) return st;
  const double half = 0.5 * angle;
  const double c = std::cos(half);
  const double sn = std::sin(half);
  const complex d00(c, sn * axis[2]);
  const complex d11(c, -sn * axis[2]);
  const complex off01 = complex(0.0, sn) * complex(axis[0], axis[1]);
  const complex off10 = complex(0.0, sn) * complex(axis[0], -axis[1]);
  PureQubitState out;
  out.c_up = d00 * st.c_up + off01 * st.c_down;
  out.c_down = off10 * st.c_up + d11 * st.c_down;
  return normalized(out);
}

// Rotation by the vector omega (axis omega/|omega|, angle |omega|).
inline PureQubitState rotate_by_vector(const PureQubitState& st, const Vec3& omega) {
  const double a = std::sqrt(omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2]);
  if (a == 0.0) return st;
  return rotate(st, {omega[0] / a, omega[1] / a, omega[2] / a}, a);
}

// Coherent evolution under 1/2 omega0 sigma_z + h . sigma for a time dt:
// rotation about n = (h_x, h_y, h_z + omega0/2) by 2 |n| dt.
inline PureQubitState evolve_coherent(const PureQubitState& st, const Vec3& fields,
                                      double omega0, double dt) {
  detail::require(dt >= 0.0, "dt must be non-negative");
  detail::require(std::isfinite(fields[0]) && std::isfinite(fields[1]) &&
                      std::isfinite(fields[2]) && std::isfinite(omega0),
                  "fields must be finite");
  const Vec3 n{fields[0], fields[1], fields[2] + 0.5 * omega0};
  return rotate_by_vector(st, {2.0 * n[0] * dt, 2.0 * n[1] * dt, 2.0 * n[2] * dt});
}

// |<a|b>|^2; global phase does not enter.
inline double fidelity(const PureQubitState& a, const PureQubitState& b) {
  return std::norm(std::conj(a.c_up) * b.c_up + std::conj(a.c_down) * b.c_down);
}

// log P(n_a, n_b) for one specific sequence with those counts.
inline double log_sequence_probability(double z0, long long n_a, long long n_b,
                                       const MeasurementSetup& setup) {
  detail::require(n_a >= 0 && n_b >= 0, "photon counts must be non-negative");
  detail::require(std::abs(z0) <= 1.0, "z0 must lie in [-1, 1]");
  const double lp = std::log1p(setup.s);
  const double lm = std::log1p(-setup.s);
  const double na = static_cast<double>(n_a);
  const double nb = static_cast<double>(n_b);
  const double w_up = 0.5 * (1.0 + z0);
  const double w_dn = 0.5 * (1.0 - z0);
  const double e_up = na * lp + nb * lm;
  const double e_dn = na * lm + nb * lp;
  double log_mix;
  if (w_up == 0.0) {
    log_mix = std::log(w_dn) + e_dn;
  } else if (w_dn == 0.0) {
    log_mix = std::log(w_up) + e_up;
  } else {
    const double l1 = std::log(w_up) + e_up;
    const double l2 = std::log(w_dn) + e_dn;
    const double hi = std::max(l1, l2);
    log_mix = hi + std::log1p(std::exp(std::min(l1, l2) - hi));
  }
  return log_mix - (na + nb) * std::numbers::ln2;
}

inline double sequence_probability(const PureQubitState& initial, long long n_a,
                                   long long n_b, const MeasurementSetup& setup) {
  return std::exp(log_sequence_probability(polarization(initial), n_a, n_b, setup));
}

}  // namespace iqr
