#pragma once

// Macroscopic readout: differential photodiode charge and the RC-filtered
// photocurrent. A and B photodiode currents are differenced before the
// filter, which is linear, so the order does not matter.

#include <cmath>
#include <span>
#include <vector>

#include "iqr/errors.hpp"
#include "iqr/qubit.hpp"

namespace iqr {

struct FilterConfig {
  double rc = 512.0;   // single-pole time constant
  double gain = 1.0;   // zero-frequency gain, current per unit charge rate
  double charge = 1.0; // charge collected per photon (arbitrary unit)

  void validate() const {
    detail::require(std::isfinite(rc) && rc > 0.0, "rc must be positive");
    detail::require(std::isfinite(gain), "gain must be finite");
    detail::require(std::isfinite(charge) && charge > 0.0, "charge must be positive");
  }
};

// Gain 1/(e r theta): a qubit parked at z = +-1 reads as current ~ +-1.
inline FilterConfig readout_filter(const MeasurementSetup& setup, double rc,
                                   double charge = 1.0) {
  detail::require(setup.theta != 0.0, "readout gain is undefined for theta = 0");
  FilterConfig f{rc, 1.0 / (charge * setup.rate_r * setup.theta), charge};
  f.validate();
  return f;
}

inline double differential_charge(long long n_a, long long n_b, double theta) {
  if (n_a + n_b < 1) throw domain_error("differential charge needs at least one photon");
  detail::require(theta != 0.0 && std::isfinite(theta), "theta must be finite and nonzero");
  return static_cast<double>(n_a - n_b) / (static_cast<double>(n_a + n_b) * theta);
}

// Event-driven single-pole filter. Each photon adds an impulse of height
// charge * gain / rc (+ for A, - for B); between events the output decays
// exactly as exp(-dt / rc). Samples include the photon at the sample time.
class SinglePoleFilter {
 public:
  explicit SinglePoleFilter(const FilterConfig& cfg)
      : rc_(cfg.rc), impulse_(cfg.charge * cfg.gain / cfg.rc) {
    cfg.validate();
  }

  double push(double time, DetectionChannel ch) {
    return push_signed(time, ch == DetectionChannel::A ? 1.0 : -1.0);
  }

  double push_signed(double time, double weight) {
    if (started_ && !(time > last_time_)) {
      throw invalid_parameter("photon times must be strictly increasing");
    }
    if (started_) value_ *= std::exp(-(time - last_time_) / rc_);
    value_ += weight * impulse_;
    last_time_ = time;
    started_ = true;
    return value_;
  }

  // Output at a time >= the last event, without adding an impulse.
  double value_at(double time) const {
    if (!started_) return 0.0;
    return value_ * std::exp(-(time - last_time_) / rc_);
  }

  double value() const { return value_; }

 private:
  double rc_;
  double impulse_;
  double value_ = 0.0;
  double last_time_ = 0.0;
  bool started_ = false;
};

inline std::vector<double> filtered_current(std::span<const DetectionChannel> channels,
                                            std::span<const double> times,
                                            const FilterConfig& cfg) {
  detail::require(channels.size() == times.size(), "channels and times differ in length");
  SinglePoleFilter filter(cfg);
  std::vector<double> out;
  out.reserve(channels.size());
  for (std::size_t k = 0; k < channels.size(); ++k) {
    out.push_back(filter.push(times[k], channels[k]));
  }
  return out;
}

}  // namespace iqr
