#pragma once

// Langevin fields (h_x, h_y, h_z) with correlation
//   <h_i(t) h_j(t + tau)> = delta_ij S_i exp(-alpha tau) alpha / 2,
// realized as three independent Ornstein-Uhlenbeck processes with the exact
// discrete update. With this normalization the kernel integrates to S_i, so
// the white limit is <h_i(t) h_j(t')> = delta_ij S_i delta(t - t') and the
// ensemble polarization relaxes at 2 (S_x + S_y).

#include <cmath>
#include <cstdint>
#include <random>

#include "iqr/errors.hpp"
#include "iqr/qubit.hpp"
#include "iqr/rng.hpp"

namespace iqr {

enum class NoiseMode {
  colored,  // exponentially correlated fields, bandwidth alpha
  white     // delta-correlated; one impulse rotation per step
};

struct LangevinConfig {
  Vec3 spectral_density{0.0, 0.0, 0.0};  // S_x, S_y, S_z
  double alpha = 1.0;                    // decorrelation rate
  NoiseMode mode = NoiseMode::colored;

  bool is_silent() const {
    return spectral_density[0] == 0.0 && spectral_density[1] == 0.0 &&
           spectral_density[2] == 0.0;
  }

  double stationary_variance(int axis) const {
    return spectral_density[static_cast<std::size_t>(axis)] * alpha / 2.0;
  }

  void validate() const {
    for (double s : spectral_density) {
      detail::require(std::isfinite(s) && s >= 0.0, "spectral densities must be >= 0");
    }
    detail::require(std::isfinite(alpha) && alpha > 0.0, "alpha must be positive");
  }
};

struct LangevinState {
  Vec3 h{0.0, 0.0, 0.0};
  Engine engine;
  std::normal_distribution<double> normal{0.0, 1.0};
};

inline LangevinState init_stationary(const LangevinConfig& config, std::uint64_t seed) {
  config.validate();
  LangevinState st{{0.0, 0.0, 0.0}, make_engine(seed), {}};
  if (config.mode == NoiseMode::white) return st;
  for (int i = 0; i < 3; ++i) {
    const double var = config.stationary_variance(i);
    if (var > 0.0) st.h[static_cast<std::size_t>(i)] = std::sqrt(var) * st.normal(st.engine);
  }
  return st;
}

// Exact OU transition coefficients for a fixed step.
struct OuPropagator {
  Vec3 decay{1.0, 1.0, 1.0};
  Vec3 kick_sd{0.0, 0.0, 0.0};

  OuPropagator() = default;
  OuPropagator(const LangevinConfig& config, double dt) {
    detail::require(dt >= 0.0, "dt must be non-negative");
    const double d = std::exp(-config.alpha * dt);
    // 1 - exp(-2 a dt) without cancellation for small steps
    const double one_minus_d2 = -std::expm1(-2.0 * config.alpha * dt);
    for (std::size_t i = 0; i < 3; ++i) {
      decay[i] = d;
      kick_sd[i] = std::sqrt(config.stationary_variance(static_cast<int>(i)) * one_minus_d2);
    }
  }

  void advance(LangevinState& st) const {
    for (std::size_t i = 0; i < 3; ++i) {
      if (kick_sd[i] > 0.0) {
        st.h[i] = st.h[i] * decay[i] + kick_sd[i] * st.normal(st.engine);
      } else {
        st.h[i] *= decay[i];
      }
    }
  }
};

inline LangevinState ou_step(LangevinState state, const LangevinConfig& config, double dt) {
  detail::require(dt >= 0.0, "dt must be non-negative");
  if (dt == 0.0) return state;
  OuPropagator(config, dt).advance(state);
  return state;
}

// Integrated white-noise fields over dt: each component ~ N(0, S_i dt).
// The corresponding Bloch rotation vector is twice this.
inline Vec3 white_increment(LangevinState& st, const LangevinConfig& config, double dt) {
  Vec3 out{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < 3; ++i) {
    const double var = config.spectral_density[i] * dt;
    if (var > 0.0) out[i] = std::sqrt(var) * st.normal(st.engine);
  }
  return out;
}

inline double theoretical_autocorrelation(const LangevinConfig& config, int axis, double tau) {
  detail::require(axis >= 0 && axis < 3, "axis must be 0, 1 or 2");
  detail::require(tau >= 0.0, "tau must be non-negative");
  return config.spectral_density[static_cast<std::size_t>(axis)] *
         std::exp(-config.alpha * tau) * config.alpha / 2.0;
}

}  // namespace iqr
