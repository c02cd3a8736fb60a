#pragma once

// Photon-by-photon Monte Carlo of one measurement record.
//
// Per photon: coherent evolution over the inter-photon interval with the
// current Langevin fields, advance of the fields, channel draw, Kraus
// back-action, optional feedback rotation. Channel draws, noise and arrival
// times use three streams derived from the trajectory seed, so adding
// feedback or changing the noise never shifts the channel stream.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "iqr/detector.hpp"
#include "iqr/errors.hpp"
#include "iqr/noise.hpp"
#include "iqr/qubit.hpp"
#include "iqr/rng.hpp"

namespace iqr {

enum class TimingMode { uniform, poisson };

struct FeedbackMap {
  Vec3 axis_a{0.0, 0.0, 1.0};
  double angle_a = 0.0;
  Vec3 axis_b{0.0, 0.0, 1.0};
  double angle_b = 0.0;

  static FeedbackMap identity() { return {}; }

  void validate() const {
    for (const Vec3* ax : {&axis_a, &axis_b}) {
      const double n2 = (*ax)[0] * (*ax)[0] + (*ax)[1] * (*ax)[1] + (*ax)[2] * (*ax)[2];
      detail::require(std::abs(n2 - 1.0) <= 2e-12, "feedback axes must be unit vectors");
    }
    detail::require(std::isfinite(angle_a) && std::isfinite(angle_b),
                    "feedback angles must be finite");
  }
};

inline PureQubitState apply_feedback_map(const PureQubitState& st, DetectionChannel ch,
                                         const FeedbackMap& map) {
  map.validate();
  return ch == DetectionChannel::A ? rotate(st, map.axis_a, map.angle_a)
                                   : rotate(st, map.axis_b, map.angle_b);
}

struct TrajectoryConfig {
  MeasurementSetup setup = make_setup(0.0, 1.0, 0.0);
  LangevinConfig noise{};
  long long n_photons = 1;
  PureQubitState initial_state = PureQubitState::up();
  TimingMode timing = TimingMode::uniform;
  std::optional<FeedbackMap> feedback;
  long long record_stride = 1;

  void validate() const {
    detail::require(n_photons >= 1, "n_photons must be >= 1");
    detail::require(record_stride >= 1, "record_stride must be >= 1");
    detail::require(std::abs(initial_state.norm_squared() - 1.0) <= 1e-12,
                    "initial state must be normalized");
    noise.validate();
    if (feedback) feedback->validate();
  }

  double duration() const { return static_cast<double>(n_photons) / setup.rate_r; }
};

struct PhotonEvent {
  long long index;  // 1-based photon number
  double time;
  DetectionChannel channel;
  const PureQubitState& state;  // after back-action and feedback
  Vec3 fields;
  long long n_a;
  long long n_b;
};

// Threshold above which an inter-photon interval is split into substeps.
inline constexpr double kSubstepLimit = 0.1;

template <class Observer>
PureQubitState simulate_trajectory(const TrajectoryConfig& config, std::uint64_t seed,
                                   Observer&& observe) {
  config.validate();
  const MeasurementSetup& setup = config.setup;
  const LangevinConfig& noise = config.noise;
  const bool colored = noise.mode == NoiseMode::colored;
  const bool noisy = !noise.is_silent();

  Engine channel_rng = make_engine(derive_seed(seed, 0));
  LangevinState fields = init_stationary(noise, derive_seed(seed, 1));
  Engine timing_rng = make_engine(derive_seed(seed, 2));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::exponential_distribution<double> arrival(setup.rate_r);

  const double uniform_dt = 1.0 / setup.rate_r;
  OuPropagator uniform_prop(noise, uniform_dt);

  PureQubitState state = config.initial_state;
  double time = 0.0;
  long long n_a = 0;
  long long n_b = 0;

  for (long long k = 1; k <= config.n_photons; ++k) {
    const double dt = config.timing == TimingMode::uniform ? uniform_dt : arrival(timing_rng);
    time += dt;

    Vec3 reported = fields.h;
    if (!noisy) {
      if (setup.omega0 != 0.0) state = evolve_coherent(state, {0.0, 0.0, 0.0}, setup.omega0, dt);
    } else if (colored) {
      const double hmag = std::sqrt(fields.h[0] * fields.h[0] + fields.h[1] * fields.h[1] +
                                    fields.h[2] * fields.h[2]);
      const double worst = std::max(noise.alpha * dt, hmag * dt);
      const long long sub =
          worst > kSubstepLimit ? static_cast<long long>(std::ceil(worst / kSubstepLimit)) : 1;
      const double h = dt / static_cast<double>(sub);
      const bool reuse = config.timing == TimingMode::uniform && sub == 1;
      const OuPropagator prop = reuse ? uniform_prop : OuPropagator(noise, h);
      for (long long j = 0; j < sub; ++j) {
        state = evolve_coherent(state, fields.h, setup.omega0, h);
        prop.advance(fields);
      }
      reported = fields.h;
    } else {
      if (setup.omega0 != 0.0) state = evolve_coherent(state, {0.0, 0.0, 0.0}, setup.omega0, dt);
      const Vec3 w = white_increment(fields, noise, dt);
      state = rotate_by_vector(state, {2.0 * w[0], 2.0 * w[1], 2.0 * w[2]});
      reported = {w[0] / dt, w[1] / dt, w[2] / dt};
    }

    const double p_a = channel_probabilities(state, setup).p_a;
    const DetectionChannel ch =
        uniform(channel_rng) < p_a ? DetectionChannel::A : DetectionChannel::B;
    state = apply_detection(state, ch, setup);
    if (config.feedback) state = apply_feedback_map(state, ch, *config.feedback);
    if (ch == DetectionChannel::A) {
      ++n_a;
    } else {
      ++n_b;
    }
    observe(PhotonEvent{k, time, ch, state, reported, n_a, n_b});
  }
  return state;
}

// Transition counter with hysteresis: a transition is recorded each time
// the path, having last been beyond one threshold, passes the other.
class HysteresisCounter {
 public:
  HysteresisCounter(double upper, double lower) : upper_(upper), lower_(lower) {
    detail::require(lower < upper, "lower threshold must be below upper threshold");
  }

  void observe(double z) {
    if (z >= upper_) {
      if (side_ < 0) ++count_;
      side_ = 1;
    } else if (z <= lower_) {
      if (side_ > 0) ++count_;
      side_ = -1;
    }
  }

  long long count() const { return count_; }

 private:
  double upper_;
  double lower_;
  int side_ = 0;
  long long count_ = 0;
};

inline long long count_transitions(std::span<const double> z_path, double upper = 0.5,
                                   double lower = -0.5) {
  HysteresisCounter counter(upper, lower);
  for (double z : z_path) counter.observe(z);
  return counter.count();
}

struct TrajectoryRecord {
  PureQubitState initial_state;
  PureQubitState final_state;
  std::vector<double> times;
  std::vector<DetectionChannel> channels;
  std::vector<double> z_path;
  std::vector<Vec3> bloch_path;
  std::vector<Vec3> fields_path;
  std::vector<long long> n_a_path;
  std::vector<long long> n_b_path;
  std::vector<double> q_path;        // cumulative differential charge
  std::vector<double> current_path;  // filtered photocurrent
  long long n_a = 0;
  long long n_b = 0;

  std::size_t size() const { return times.size(); }
};

// Runs one trajectory and keeps every record_stride-th photon (plus the
// last). The photocurrent column is filled when a filter is given.
inline TrajectoryRecord run_trajectory(const TrajectoryConfig& config, std::uint64_t seed,
                                       const std::optional<FilterConfig>& filter = std::nullopt) {
  config.validate();
  TrajectoryRecord rec;
  rec.initial_state = config.initial_state;
  const auto rows = static_cast<std::size_t>(
      (config.n_photons + config.record_stride - 1) / config.record_stride + 1);
  rec.times.reserve(rows);
  std::optional<SinglePoleFilter> rc;
  if (filter) rc.emplace(*filter);
  const double theta = config.setup.theta;

  rec.final_state = simulate_trajectory(config, seed, [&](const PhotonEvent& ev) {
    const double current = rc ? rc->push(ev.time, ev.channel) : 0.0;
    if (ev.index % config.record_stride != 0 && ev.index != config.n_photons) return;
    rec.times.push_back(ev.time);
    rec.channels.push_back(ev.channel);
    rec.z_path.push_back(polarization(ev.state));
    rec.bloch_path.push_back(bloch_vector(ev.state));
    rec.fields_path.push_back(ev.fields);
    rec.n_a_path.push_back(ev.n_a);
    rec.n_b_path.push_back(ev.n_b);
    rec.q_path.push_back(theta != 0.0 ? differential_charge(ev.n_a, ev.n_b, theta) : 0.0);
    rec.current_path.push_back(current);
  });
  if (!rec.n_a_path.empty()) {
    rec.n_a = rec.n_a_path.back();
    rec.n_b = rec.n_b_path.back();
  }
  return rec;
}

// Mean Bloch vector over an ensemble at one recorded row; this is the Bloch
// vector of the ensemble density matrix.
inline Vec3 ensemble_bloch(std::span<const TrajectoryRecord> records, std::size_t time_index) {
  detail::require(!records.empty(), "ensemble must be nonempty");
  Vec3 acc{0.0, 0.0, 0.0};
  for (const auto& r : records) {
    detail::require(time_index < r.bloch_path.size(), "time index out of range");
    for (std::size_t i = 0; i < 3; ++i) acc[i] += r.bloch_path[time_index][i];
  }
  const double n = static_cast<double>(records.size());
  return {acc[0] / n, acc[1] / n, acc[2] / n};
}

}  // namespace iqr
