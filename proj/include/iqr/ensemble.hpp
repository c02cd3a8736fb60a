#pragma once

// Ensembles of independent trajectories. Trajectory i uses seed
// derive_seed(base_seed, i) and can be rerun alone. Work is split into
// fixed blocks of trajectories; block partial sums are merged in block
// order, so the summary is bit-identical for any worker count.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

#include "iqr/detector.hpp"
#include "iqr/errors.hpp"
#include "iqr/qubit.hpp"
#include "iqr/rng.hpp"
#include "iqr/trajectory.hpp"

namespace iqr {

enum Moment : std::size_t {
  m_ux,
  m_uy,
  m_uz,
  m_one_minus_z2,
  m_sqrt_one_minus_z2,
  m_z_over_sqrt,
  moment_count
};

inline constexpr std::array<const char*, moment_count> moment_names{
    "u_x", "u_y", "u_z", "one_minus_z2", "sqrt_one_minus_z2", "z_over_sqrt_one_minus_z2"};

struct EnsembleOptions {
  long long n_traj = 1;
  std::uint64_t base_seed = 0;
  unsigned workers = 0;  // 0 = hardware concurrency
  double upper = 0.9;    // transition-counter thresholds
  double lower = -0.9;
  double q_min = -3.0;   // final-q histogram range
  double q_max = 3.0;
  std::size_t q_bins = 60;
  std::size_t block_size = 16;

  void validate() const {
    detail::require(n_traj >= 1, "n_traj must be >= 1");
    detail::require(lower < upper, "lower threshold must be below upper threshold");
    detail::require(q_min < q_max && q_bins >= 1, "invalid q histogram range");
    detail::require(block_size >= 1, "block size must be >= 1");
  }
};

struct MomentSeries {
  std::vector<double> mean;
  std::vector<double> sem;  // standard error of the mean
};

struct EnsembleSummary {
  long long n_traj = 0;
  std::vector<double> times;           // nominal times index / r, starting at 0
  std::vector<long long> photon_index; // photons detected at each row
  std::array<MomentSeries, moment_count> moments;
  std::vector<long long> transitions;  // per trajectory
  std::vector<double> final_q;         // per trajectory
  std::vector<double> final_z;         // per trajectory
  std::vector<long long> final_n_a;    // per trajectory
  std::vector<long long> q_histogram;
  double q_min = 0.0;
  double q_max = 0.0;
  double mean_transitions = 0.0;
  double sem_transitions = 0.0;
  double transition_rate = 0.0;  // mean transitions / duration

  const MomentSeries& operator[](Moment m) const { return moments[m]; }
};

// Photon indices at which the ensemble is sampled: every stride-th photon and the last.
inline std::vector<long long> recorded_indices(long long n_photons, long long stride) {
  std::vector<long long> idx{0};
  for (long long k = stride; k <= n_photons; k += stride) idx.push_back(k);
  if (idx.back() != n_photons) idx.push_back(n_photons);
  return idx;
}

namespace detail {

inline std::array<double, moment_count> state_moments(const PureQubitState& st) {
  const Vec3 u = bloch_vector(st);
  const double pu = std::norm(st.c_up);
  const double pd = std::norm(st.c_down);
  const double root = 2.0 * std::sqrt(pu * pd);  // sqrt(1 - z^2) from the amplitudes
  return {u[0], u[1], u[2], root * root, root, (pu - pd) / root};
}

struct BlockResult {
  long long count = 0;
  std::vector<double> mean;  // rows * moment_count, Welford
  std::vector<double> m2;
  std::vector<long long> transitions;
  std::vector<double> final_q;
  std::vector<double> final_z;
  std::vector<long long> final_n_a;
};

inline BlockResult run_block(const TrajectoryConfig& config, const EnsembleOptions& opts,
                             long long first, long long last) {
  const std::vector<long long> idx = recorded_indices(config.n_photons, config.record_stride);
  const std::size_t rows = idx.size();
  BlockResult res;
  res.mean.assign(rows * moment_count, 0.0);
  res.m2.assign(rows * moment_count, 0.0);
  const double theta = config.setup.theta;
  for (long long i = first; i < last; ++i) {
    HysteresisCounter counter(opts.upper, opts.lower);
    const double nn = static_cast<double>(++res.count);
    auto add_row = [&](std::size_t row, const PureQubitState& st) {
      const auto m = state_moments(st);
      for (std::size_t j = 0; j < moment_count; ++j) {
        double& mu = res.mean[row * moment_count + j];
        const double delta = m[j] - mu;
        mu += delta / nn;
        res.m2[row * moment_count + j] += delta * (m[j] - mu);
      }
    };
    add_row(0, config.initial_state);
    counter.observe(polarization(config.initial_state));
    std::size_t next = 1;
    long long n_a = 0, n_b = 0;
    const PureQubitState final_state =
        simulate_trajectory(config, derive_seed(opts.base_seed, static_cast<std::uint64_t>(i)),
                            [&](const PhotonEvent& ev) {
                              counter.observe(polarization(ev.state));
                              if (next < rows && ev.index == idx[next]) add_row(next++, ev.state);
                              n_a = ev.n_a;
                              n_b = ev.n_b;
                            });
    res.transitions.push_back(counter.count());
    res.final_q.push_back(theta != 0.0 ? differential_charge(n_a, n_b, theta) : 0.0);
    res.final_z.push_back(polarization(final_state));
    res.final_n_a.push_back(n_a);
  }
  return res;
}

}  // namespace detail

inline EnsembleSummary run_ensemble(const TrajectoryConfig& config, const EnsembleOptions& opts) {
  config.validate();
  opts.validate();
  const std::vector<long long> idx = recorded_indices(config.n_photons, config.record_stride);
  const std::size_t rows = idx.size();
  const long long n = opts.n_traj;
  const auto bs = static_cast<long long>(opts.block_size);
  const long long n_blocks = (n + bs - 1) / bs;

  long long count = 0;
  std::vector<double> mean(rows * moment_count, 0.0);
  std::vector<double> m2(rows * moment_count, 0.0);
  EnsembleSummary out;
  out.n_traj = n;

  std::mutex mu;
  std::map<long long, detail::BlockResult> pending;
  long long merged = 0;
  auto merge_ready = [&]() {
    // caller holds mu
    for (auto it = pending.find(merged); it != pending.end(); it = pending.find(merged)) {
      const auto& b = it->second;
      // pairwise merge of Welford accumulators
      const double na = static_cast<double>(count), nb = static_cast<double>(b.count);
      const double nt = na + nb;
      for (std::size_t k = 0; k < mean.size(); ++k) {
        const double delta = b.mean[k] - mean[k];
        mean[k] += delta * nb / nt;
        m2[k] += b.m2[k] + delta * delta * na * nb / nt;
      }
      count += b.count;
      out.transitions.insert(out.transitions.end(), b.transitions.begin(), b.transitions.end());
      out.final_q.insert(out.final_q.end(), b.final_q.begin(), b.final_q.end());
      out.final_z.insert(out.final_z.end(), b.final_z.begin(), b.final_z.end());
      out.final_n_a.insert(out.final_n_a.end(), b.final_n_a.begin(), b.final_n_a.end());
      pending.erase(it);
      ++merged;
    }
  };

  std::atomic<long long> next_block{0};
  std::exception_ptr failure;
  auto worker = [&]() {
    for (;;) {
      const long long b = next_block.fetch_add(1);
      if (b >= n_blocks) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      try {
        detail::BlockResult r = detail::run_block(config, opts, b * bs, std::min(n, (b + 1) * bs));
        std::lock_guard lock(mu);
        pending.emplace(b, std::move(r));
        merge_ready();
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  unsigned workers = opts.workers ? opts.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<long long>(workers, n_blocks));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  const double nn = static_cast<double>(n);
  for (std::size_t j = 0; j < moment_count; ++j) {
    out.moments[j].mean.resize(rows);
    out.moments[j].sem.resize(rows);
    for (std::size_t row = 0; row < rows; ++row) {
      const double var = n > 1 ? m2[row * moment_count + j] / (nn - 1.0) : 0.0;
      out.moments[j].mean[row] = mean[row * moment_count + j];
      out.moments[j].sem[row] = std::sqrt(var / nn);
    }
  }
  out.photon_index = idx;
  for (long long k : idx) out.times.push_back(static_cast<double>(k) / config.setup.rate_r);

  out.q_min = opts.q_min;
  out.q_max = opts.q_max;
  out.q_histogram.assign(opts.q_bins, 0);
  const double width = (opts.q_max - opts.q_min) / static_cast<double>(opts.q_bins);
  for (double q : out.final_q) {
    if (q < opts.q_min || q >= opts.q_max) continue;
    const auto bin = std::min(opts.q_bins - 1, static_cast<std::size_t>((q - opts.q_min) / width));
    ++out.q_histogram[bin];
  }

  double ts = 0.0, ts2 = 0.0;
  for (long long c : out.transitions) {
    ts += static_cast<double>(c);
    ts2 += static_cast<double>(c) * static_cast<double>(c);
  }
  out.mean_transitions = ts / nn;
  out.sem_transitions =
      n > 1 ? std::sqrt(std::max(0.0, (ts2 - ts * out.mean_transitions) / (nn - 1.0)) / nn) : 0.0;
  out.transition_rate = out.mean_transitions / config.duration();
  return out;
}

}  // namespace iqr
