// Acceptance checks 1-13. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "iqr/iqr.hpp"

using namespace iqr;
using boost::math::quadrature::gauss_kronrod;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
    if (!ok) {
      pass = false;
      detail += " [fail]";
    }
  }
};

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

TrajectoryConfig config(double theta, long long n, double z0, double omega0 = 0.0) {
  TrajectoryConfig c;
  c.setup = make_setup(theta, 1.0, omega0);
  c.n_photons = n;
  c.initial_state = PureQubitState::from_polarization(z0);
  c.record_stride = n;
  return c;
}

EnsembleSummary ensemble(const TrajectoryConfig& c, long long n_traj, std::uint64_t seed) {
  EnsembleOptions o;
  o.n_traj = n_traj;
  o.base_seed = seed;
  return run_ensemble(c, o);
}

template <class F>
double quad(F f, double a, double b) {
  return gauss_kronrod<double, 61>::integrate(f, a, b, 25, 1e-13);
}

// ---- 1
Outcome operator_algebra() {
  Outcome o;
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> u(-std::numbers::pi / 2, std::numbers::pi / 2);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    double t = u(rng);
    while (std::abs(t) >= std::numbers::pi / 2) t = u(rng);
    const auto m = make_setup(t, 1.0);
    worst = std::max({worst, std::abs(std::norm(m.a_plus) + std::norm(m.b_plus) - 1.0),
                      std::abs(std::norm(m.a_minus) + std::norm(m.b_minus) - 1.0)});
  }
  o.check(worst <= 1e-14, fmt("max |A'A + B'B - I| = %.2e", worst));

  const int n = 10;
  const auto m = make_setup(0.3, 1.0);
  const auto start = PureQubitState::from_bloch({0.28, -0.48, 0.6});
  std::vector<double> by_na(n + 1, 0.0);
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    PureQubitState st = start;
    double w = 1.0;
    int na = 0;
    for (int k = 0; k < n; ++k) {
      const bool a = (mask >> k) & 1u;
      const auto p = channel_probabilities(st, m);
      w *= a ? p.p_a : p.p_b;
      st = apply_detection(st, a ? DetectionChannel::A : DetectionChannel::B, m);
      na += a;
    }
    by_na[static_cast<std::size_t>(na)] += w;
  }
  double err = 0.0, total = 0.0;
  for (int na = 0; na <= n; ++na) {
    const double mult = std::tgamma(n + 1.0) / (std::tgamma(na + 1.0) * std::tgamma(n - na + 1.0));
    err = std::max(err, std::abs(by_na[static_cast<std::size_t>(na)] - mult * sequence_probability(start, na, n - na, m)));
    total += by_na[static_cast<std::size_t>(na)];
  }
  o.check(err <= 1e-10, fmt("2^10 enumeration max error %.2e", err));
  o.check(std::abs(total - 1.0) <= 1e-12, fmt("total mass %.15f", total));
  return o;
}

// ---- 2
Outcome stern_gerlach() {
  Outcome o;
  const double theta = 0.05, z0 = 0.5, tau = 4.0;
  const long long n = std::llround(tau / (theta * theta));
  const auto s = ensemble(config(theta, n, z0), 10000, 2002);
  std::vector<double> q = s.final_q;
  std::sort(q.begin(), q.end());
  const double N = static_cast<double>(q.size());
  const double t = static_cast<double>(n);
  // q lives on a lattice of spacing 2/(n theta); compare at lattice points,
  // with the model cdf taken at the midpoint to the next lattice value
  const double step = 2.0 / (t * theta);
  double d = 0.0;
  for (std::size_t i = 0; i < q.size();) {
    std::size_t j = i;
    while (j < q.size() && q[j] == q[i]) ++j;
    const double below = static_cast<double>(i) / N, at = static_cast<double>(j) / N;
    d = std::max({d, std::abs(at - charge_cdf(q[i] + 0.5 * step, z0, t, 1.0, theta)),
                  std::abs(below - charge_cdf(q[i] - 0.5 * step, z0, t, 1.0, theta))});
    i = j;
  }
  const double crit = 1.628 / std::sqrt(N);
  o.check(d < crit, fmt("KS D = %.4f (1%% critical %.4f)", d, crit));

  // maximum-likelihood weight with the components fixed at +-1, sd 1/2
  const double sd = 1.0 / std::sqrt(tau);
  double w = 0.5;
  for (int it = 0; it < 500; ++it) {
    double acc = 0.0;
    for (double x : q) {
      const double up = w * std::exp(-0.5 * std::pow((x - 1) / sd, 2));
      const double dn = (1 - w) * std::exp(-0.5 * std::pow((x + 1) / sd, 2));
      acc += up / (up + dn);
    }
    w = acc / N;
  }
  o.check(std::abs(w - 0.75) <= 0.02 && std::abs((1 - w) - 0.25) <= 0.02,
          fmt("weights %.4f / %.4f", w, 1 - w));
  return o;
}

// ---- 3
Outcome greens_verification() {
  Outcome o;
  double norm_err = 0.0;
  for (double z0 : {0.0, -0.9, 0.9}) {
    for (double tau : {0.1, 1.0, 10.0}) {
      const double u0 = std::atanh(z0);
      const double half = std::abs(u0) + tau + 14 * std::sqrt(tau) + 1;
      const double m = quad([&](double u) { return greens_function_u(u, u0, tau); }, -half, half);
      norm_err = std::max(norm_err, std::abs(m - 1.0));
      for (double z : {-0.999, -0.4, 0.0, 0.7, 0.99}) {
        const double r = greens_function(z, z0, tau) * (1 - z * z) / greens_function_u(std::atanh(z), u0, tau);
        norm_err = std::max(norm_err, std::abs(r - 1.0));
      }
    }
  }
  o.check(norm_err <= 1e-8, fmt("normalization error %.2e", norm_err));

  double ck = 0.0;
  for (double z0 : {0.0, 0.3, -0.7}) {
    for (double z : {-0.8, -0.1, 0.45, 0.9}) {
      const double t1 = 0.4, t2 = 0.7;
      const double u0 = std::atanh(z0);
      const double half = std::abs(u0) + t1 + t2 + 14 * std::sqrt(t1 + t2) + 1;
      const double lhs = quad(
          [&](double up) {
            const double zp = std::tanh(up);
            if (!(std::abs(zp) < 1)) return 0.0;
            return greens_function(z, zp, t1) * greens_function_u(up, u0, t2);
          },
          -half, half);
      ck = std::max(ck, std::abs(lhs - greens_function(z, z0, t1 + t2)) / std::max(1.0, lhs));
    }
  }
  o.check(ck <= 1e-6, fmt("Chapman-Kolmogorov error %.2e", ck));

  std::vector<SamplePoint> pts;
  for (int i = 0; i <= 22; ++i) {
    const double z = -0.99 + 0.09 * i;
    for (double tau = 0.2; tau <= 5.0 + 1e-9; tau += 0.4) pts.push_back({z, tau});
  }
  double res = 0.0;
  for (double z0 : {0.0, 0.5, -0.9}) {
    res = std::max(res, pde_residual([&](double z, double t) { return greens_function(z, z0, t); }, {1.0, 0.0}, pts));
  }
  o.check(res < 1e-6, fmt("PDE residual %.2e on %g points", res, static_cast<double>(pts.size())));
  return o;
}

// ---- 4
Outcome fp_convergence() {
  Outcome o;
  const double extent = make_graded_grid(1024, 1e-6).xi_extent;
  auto green = [](double z) { return std::abs(z) < 1 ? greens_function(z, 0.0, 1.0) : 0.0; };
  double err[2];
  int k = 0;
  for (std::size_t cells : {1024u, 2048u}) {
    auto g = make_tanh_grid(cells, extent);
    set_point_mass(g, 0.0);
    SolveOptions opt;
    opt.dt = 0.05 * 1024.0 / static_cast<double>(cells);
    err[k++] = l1_distance(solve(g, {1.0, 0.0}, 1.0, opt).back(), green);
  }
  o.check(err[0] < 0.02, fmt("L1 at 1024 cells %.2e", err[0]));
  o.check(err[0] / err[1] >= 3.5, fmt("refinement gain %.2f", err[0] / err[1]));
  return o;
}

// ---- 5
Outcome moment_laws() {
  Outcome o;
  const double theta = 0.03, z0 = 0.5, tau = 1.0;
  const double meas = theta * theta;  // r = 1
  const long long n = std::llround(tau / meas);
  auto c = config(theta, n, z0);
  c.record_stride = n / 4;
  const auto s = ensemble(c, 10000, 5005);
  const std::size_t last = s.times.size() - 1;
  const double t_end = s.times[last];
  auto fitted = [&](Moment m, double expected, const char* name) {
    const double m0 = s.moments[m].mean[0], m1 = s.moments[m].mean[last];
    const double rate = std::log(m1 / m0) / t_end;
    const double sigma = s.moments[m].sem[last] / std::abs(m1) / t_end;
    o.check(std::abs(rate - expected) <= 3 * sigma,
            fmt((std::string("MC ") + name + " rate %.5e vs %.5e, sigma %.1e").c_str(), rate, expected, sigma));
  };
  fitted(m_sqrt_one_minus_z2, -0.5 * meas, "sqrt(1-z^2)");
  fitted(m_z_over_sqrt, 1.5 * meas, "z/sqrt(1-z^2)");

  auto g = make_graded_grid(1024, 1e-6);
  set_point_mass(g, z0);
  const auto m0 = moments(g);
  SolveOptions opt;
  opt.dt = 0.01;
  const auto m1 = moments(solve(g, {meas, 0.0}, t_end, opt).back());
  const double r_root = std::log(m1.sqrt_one_minus_z2 / m0.sqrt_one_minus_z2) / t_end;
  const double r_ratio = std::log(m1.z_over_sqrt / m0.z_over_sqrt) / t_end;
  o.check(std::abs(r_root / (-0.5 * meas) - 1) <= 0.01, fmt("FP sqrt(1-z^2) rate ratio %.5f", r_root / (-0.5 * meas)));
  o.check(std::abs(r_ratio / (1.5 * meas) - 1) <= 0.01, fmt("FP z/sqrt(1-z^2) rate ratio %.5f", r_ratio / (1.5 * meas)));
  return o;
}

// ---- 6
Outcome fermi_rule() {
  Outcome o;
  const double theta = 0.05, z0 = 0.8, n_sum = 1.0 / 2048;
  auto c = config(theta, 1024, z0, theta);
  c.noise.spectral_density = {n_sum / 2, n_sum / 2, 0.0};
  c.noise.mode = NoiseMode::white;
  const auto s = ensemble(c, 40000, 6006);
  const double t = s.times.back();
  const double m1 = s.moments[m_uz].mean.back();
  const double rate = -std::log(m1 / z0) / t;
  const double sigma = s.moments[m_uz].sem.back() / m1 / t;
  o.check(std::abs(rate / (2 * n_sum) - 1) <= 0.05,
          fmt("MC rate / 2(Sx+Sy) = %.4f (sigma %.4f)", rate / (2 * n_sum), sigma / (2 * n_sum)));

  auto g = make_graded_grid(1024, 1e-6);
  set_point_mass(g, z0);
  SolveOptions opt;
  opt.dt = 1.0;
  const double fz = moments(solve(g, {theta * theta, n_sum}, t, opt).back()).z;
  const double fp_rate = -std::log(fz / z0) / t;
  o.check(std::abs(fp_rate / (2 * n_sum) - 1) <= 0.005, fmt("FP rate / 2(Sx+Sy) = %.5f", fp_rate / (2 * n_sum)));
  return o;
}

// ---- 7
Outcome stationary() {
  Outcome o;
  const double theta = 0.125, gamma = 0.25;
  const double meas = theta * theta, n_sum = gamma * meas / 2;
  auto c = config(theta, 4096, 1.0, theta);
  c.noise.spectral_density = {n_sum / 2, n_sum / 2, 0.0};
  c.noise.mode = NoiseMode::white;
  const auto s = ensemble(c, 2000, 7007);

  // equiprobable bins of the analytic density
  const int bins = 20;
  // antiderivative of 1/(a^2 - z^2)^2 with a^2 = 1 + gamma
  const double a = std::sqrt(1 + gamma);
  auto prim = [&](double z) { return z / (2 * a * a * (a * a - z * z)) + std::log((a + z) / (a - z)) / (4 * a * a * a); };
  const double total = prim(1.0) - prim(-1.0);
  auto cdf = [&](double z) { return (prim(z) - prim(-1.0)) / total; };
  o.check(std::abs(gamma * total * stationary_normalization(gamma) - 1) < 1e-12, "closed-form normalization");
  std::vector<double> edges{-1.0};
  for (int b = 1; b < bins; ++b) {
    double lo = edges.back(), hi = 1.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < static_cast<double>(b) / bins ? lo : hi) = mid;
    }
    edges.push_back(0.5 * (lo + hi));
  }
  edges.push_back(1.0);
  std::vector<double> count(bins, 0.0);
  for (double z : s.final_z) {
    const auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, z);
    count[static_cast<std::size_t>(it - edges.begin() - 1)] += 1;
  }
  const double expect = static_cast<double>(s.final_z.size()) / bins;
  double chi2 = 0.0;
  for (double k : count) chi2 += (k - expect) * (k - expect) / expect;
  const double crit = 30.144;  // chi-square, 19 dof, 5%
  o.check(chi2 < crit, fmt("chi2 = %.2f (19 dof, 5%% critical %.2f)", chi2, crit));

  auto g = make_graded_grid(1024, 1e-6);
  set_point_mass(g, 0.5);
  const auto fp = solve(g, {meas, n_sum}, 12.0 / (2 * n_sum)).back();
  const double l1 = l1_distance(fp, [&](double z) { return std::abs(z) < 1 ? stationary_density(z, gamma) : 0.0; });
  o.check(l1 < 0.02, fmt("FP stationary L1 %.2e", l1));
  return o;
}

// ---- 8
Outcome zeno() {
  Outcome o;
  for (const char* name : {"figure2", "figure3"}) {
    const auto p = preset(name);
    auto tc = trajectory_config(p);
    tc.record_stride = tc.n_photons;
    EnsembleOptions opt;
    opt.n_traj = 2000;
    opt.base_seed = 8008;
    opt.upper = 0.9;
    opt.lower = -0.9;
    const auto s = run_ensemble(tc, opt);
    const double expected = 8.0 * config_rates(p).zeno_factor;
    o.check(std::abs(s.mean_transitions / expected - 1) <= 0.10,
            fmt((std::string(name) + " mean transitions %.3f +- %.3f vs %.3f").c_str(), s.mean_transitions,
                s.sem_transitions, expected));
  }
  return o;
}

// ---- 9
Outcome bloch_agreement() {
  Outcome o;
  const double theta = 0.125, sx = 1.0 / 4096, sy = 1.0 / 4096;
  auto c = config(theta, 4096, 1.0, theta);
  c.noise.spectral_density = {sx, sy, 0.0};
  c.noise.alpha = 1.0 / 16;
  c.record_stride = 512;
  const auto s = ensemble(c, 4000, 9009);
  const auto bp = bloch_params(relaxation_rates(sx, sy, c.noise.alpha, 1.0, theta, theta), theta);
  const auto path = integrate({0.0, 0.0, 1.0}, bp, 4096.0, 1.0);
  double worst = 0.0;
  for (std::size_t k = 1; k < s.times.size(); ++k) {
    const double ref = path[static_cast<std::size_t>(s.times[k])].u_z;
    worst = std::max(worst, std::abs(s.moments[m_uz].mean[k] - ref) / s.moments[m_uz].sem[k]);
  }
  o.check(worst <= 3.0, fmt("<u_z> vs Bloch, worst deviation %.2f sigma", worst));

  auto t = config(theta, 128, 0.0, theta);
  t.noise.spectral_density = {sx, sy, 0.0};
  t.noise.alpha = 1.0 / 256;
  const auto st = ensemble(t, 20000, 9010);
  const double ux = st.moments[m_ux].mean.back(), uy = st.moments[m_uy].mean.back();
  const double decay = -std::log(std::hypot(ux, uy)) / st.times.back();
  const double target = 0.5 * theta * theta;
  o.check(std::abs(decay / target - 1) <= 0.05, fmt("transverse rate / (r theta^2/2) = %.4f", decay / target));
  return o;
}

// ---- 10
Outcome consistency() {
  Outcome o;
  const double theta = 0.125;
  auto c = config(theta, 4096, 0.0, theta);
  c.noise.spectral_density = {1.0 / 4096, 1.0 / 4096, 0.0};
  c.noise.alpha = 1.0 / 16;
  c.record_stride = 64;
  const auto s = ensemble(c, 2000, 10010);
  const auto bp = bloch_params(relaxation_rates(1.0 / 4096, 1.0 / 4096, 1.0 / 16, 1.0, theta, theta), theta);
  const auto path = integrate({1.0, 0.0, 0.0}, bp, 4096.0, 1.0);
  bool ens_ok = true, bloch_ok = true;
  for (std::size_t k = 0; k < s.times.size(); ++k) {
    const double w = s.moments[m_one_minus_z2].mean[k], sigma = s.moments[m_one_minus_z2].sem[k];
    const double ux = s.moments[m_ux].mean[k], uy = s.moments[m_uy].mean[k];
    ens_ok = ens_ok && ux * ux + uy * uy <= w + 3 * sigma;
    const auto& b = path[static_cast<std::size_t>(s.times[k])];
    bloch_ok = bloch_ok && b.transverse_squared() <= w + 3 * sigma;
  }
  o.check(ens_ok, fmt("ensemble u_x^2 + u_y^2 <= <1 - z^2> + 3 sigma at %g times", static_cast<double>(s.times.size())));
  o.check(bloch_ok, "Bloch-equation u_x^2 + u_y^2 <= <1 - z^2> + 3 sigma");
  const double gap0 = s.moments[m_one_minus_z2].mean[0] -
                      (std::pow(s.moments[m_ux].mean[0], 2) + std::pow(s.moments[m_uy].mean[0], 2));
  o.check(std::abs(gap0) <= 1e-12, fmt("saturation at t = 0: gap %.1e", gap0));
  return o;
}

// ---- 11
Outcome stark() {
  Outcome o;
  const double theta = 0.125;
  auto c = config(theta, 256, 0.0, 0.0);
  c.record_stride = 8;
  const auto s = ensemble(c, 200, 11011);
  std::vector<double> phase;
  for (std::size_t k = 0; k < s.times.size(); ++k) {
    double p = std::atan2(s.moments[m_uy].mean[k], s.moments[m_ux].mean[k]);
    if (!phase.empty()) p += std::round((phase.back() - p) / (2 * std::numbers::pi)) * 2 * std::numbers::pi;
    phase.push_back(p);
  }
  double st = 0, sp = 0, stt = 0, stp = 0;
  const double nn = static_cast<double>(phase.size());
  for (std::size_t k = 0; k < phase.size(); ++k) {
    st += s.times[k];
    sp += phase[k];
    stt += s.times[k] * s.times[k];
    stp += s.times[k] * phase[k];
  }
  const double slope = (nn * stp - st * sp) / (nn * stt - st * st);
  o.check(std::abs(-slope / theta - 1) <= 0.02, fmt("phase slope %.5f vs -r theta = %.5f", slope, -theta));

  double best = -1, arg = 0;
  for (int i = -500; i <= 500; ++i) {
    const double w0 = theta * (1 + 1e-3 * i);
    const double v = relaxation_rates(1e-4, 1e-4, 1.0 / 16, 1.0, theta, w0).inv_T1;
    if (v > best) {
      best = v;
      arg = w0;
    }
  }
  o.check(std::abs(arg - theta) <= 1e-3 * theta, fmt("1/T1 peaks at omega0 = %.5f", arg));
  return o;
}

// ---- 12
Outcome design() {
  Outcome o;
  const auto p = preset("design-example");
  const auto j = design_json(p);
  const auto& q = j["quoted_reference"];
  o.check(q["n_exp_matches"].get<bool>(), fmt("n_exp = %.4g", j["n_exp"].get<double>()));
  o.check(q["theta_matches"].get<bool>(), fmt("theta = %.4g rad", j["theta_required_rad"].get<double>()));
  const auto& sk = j["stark_shift"];
  o.check(sk.contains("hz") && sk.contains("wavenumber_per_cm") && sk.contains("conventions"),
          fmt("Stark views emitted: %.4g rad/s, %.4g Hz", sk["rad_per_s"].get<double>(), sk["hz"].get<double>()));
  o.check(!q["stark_matches"].get<bool>() && q.contains("note"), "quoted 2.8 MHz figure flagged as not reproduced");
  return o;
}

// ---- 13
Outcome determinism() {
  Outcome o;
  for (const auto& name : preset_names()) {
    const auto c = preset(name);
    const auto a = build_scenario(c, 1);
    const auto b = build_scenario(c, 1);
    const auto m = build_scenario(c, 4);
    o.check(a.combined_digest == b.combined_digest && a.combined_digest == m.combined_digest &&
                a.digests == m.digests,
            name + " " + a.combined_digest);
  }
  return o;
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    std::function<Outcome()> run;
    double budget_s;  // 0: none stated
  };
  const std::vector<Entry> entries{
      {1, "operator algebra", operator_algebra, 1.0},
      {2, "Stern-Gerlach charge statistics", stern_gerlach, 10.0},
      {3, "Green's function verification", greens_verification, 10.0},
      {4, "Fokker-Planck convergence", fp_convergence, 30.0},
      {5, "exact moment laws", moment_laws, 0.0},
      {6, "Fermi golden rule", fermi_rule, 0.0},
      {7, "stationary density", stationary, 0.0},
      {8, "quantum Zeno transitions", zeno, 300.0},
      {9, "Bloch/trajectory agreement", bloch_agreement, 0.0},
      {10, "consistency inequality", consistency, 0.0},
      {11, "AC Stark shift", stark, 0.0},
      {12, "design calculator", design, 0.0},
      {13, "determinism", determinism, 0.0},
  };
  int failures = 0;
  for (const auto& e : entries) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = e.run();
    } catch (const std::exception& ex) {
      out.pass = false;
      out.detail = std::string("exception: ") + ex.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (e.budget_s > 0) out.check(secs < e.budget_s, fmt("runtime %.1f s (limit %.0f s)", secs, e.budget_s));
    std::printf("criterion %2d %s  %s: %s (%.1f s)\n", e.id, out.pass ? "PASS" : "FAIL", e.name,
                out.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !out.pass;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(entries.size()) - failures, entries.size());
  return failures == 0 ? 0 : 1;
}
