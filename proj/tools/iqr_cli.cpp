#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "iqr/iqr.hpp"

namespace {

using iqr::detail::format_double;

struct Common {
  std::string preset;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format;
  std::optional<long long> trajectories;
  std::optional<long long> stride;
  unsigned workers = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--preset", c.preset, "preset name");
  cmd->add_option("--config", c.config, "config file (key = value)");
  cmd->add_option("--seed", c.seed, "base seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--format", c.format, "table format")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--trajectories", c.trajectories, "ensemble size");
  cmd->add_option("--stride", c.stride, "trajectory record stride");
  cmd->add_option("--workers", c.workers, "worker threads (0 = all cores)");
}

iqr::ExperimentConfig resolve(const Common& c) {
  if (!c.preset.empty() && !c.config.empty()) {
    throw iqr::invalid_parameter("give either --preset or --config, not both");
  }
  iqr::ExperimentConfig cfg = !c.config.empty()   ? iqr::load_config(c.config)
                              : !c.preset.empty() ? iqr::preset(c.preset)
                                                  : iqr::ExperimentConfig{};
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (!c.format.empty()) cfg.output_format = c.format == "json" ? iqr::OutputFormat::json
                                                                 : iqr::OutputFormat::csv;
  if (c.trajectories) cfg.n_traj = *c.trajectories;
  if (c.stride) cfg.record_stride = *c.stride;
  iqr::validate(cfg);
  return cfg;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw iqr::io_error("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw iqr::io_error("write to '" + path + "' failed");
}

iqr::OutputFormat table_format(const std::string& s) {
  return s == "json" ? iqr::OutputFormat::json : iqr::OutputFormat::csv;
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(n == 1 ? a : a + (b - a) * i / (n - 1));
  return v;
}

int run_main(int argc, char** argv) {
  CLI::App app{"Interferometric qubit readout simulator"};
  app.require_subcommand(1);

  Common run_opts;
  auto* run = app.add_subcommand("run", "run a scenario and write its artifacts");
  add_common(run, run_opts);
  bool dump_config = false;
  run->add_flag("--print-config", dump_config, "print the resolved config and exit");

  auto* analytic = app.add_subcommand("analytic", "tabulate a closed-form curve");
  std::string curve;
  double z0 = 0.0, tau = 1.0, gamma = 0.25, theta = 0.125, rate = 1.0, time = 256.0;
  double epsilon = 1e-3, s_x = 1.0 / 4096, s_y = 1.0 / 4096, alpha = 1.0 / 16, omega0 = 0.125;
  int points = 201;
  std::string a_out, a_format = "csv";
  analytic->add_option("curve", curve, "charge | greens | undecided | stationary | rates")
      ->required()
      ->check(CLI::IsMember({"charge", "greens", "undecided", "stationary", "rates"}));
  analytic->add_option("--z0", z0);
  analytic->add_option("--tau", tau, "dimensionless time r t theta^2");
  analytic->add_option("--gamma", gamma);
  analytic->add_option("--theta", theta);
  analytic->add_option("--rate", rate, "photon rate r");
  analytic->add_option("--time", time);
  analytic->add_option("--epsilon", epsilon);
  analytic->add_option("--sx", s_x);
  analytic->add_option("--sy", s_y);
  analytic->add_option("--alpha", alpha);
  analytic->add_option("--omega0", omega0);
  analytic->add_option("--points", points)->check(CLI::Range(2, 1000000));
  analytic->add_option("--out", a_out, "output file (default stdout)");
  analytic->add_option("--format", a_format)->check(CLI::IsMember({"csv", "json"}));

  auto* fp = app.add_subcommand("fp", "solve the Fokker-Planck equation for z");
  double fp_z0 = 0.0, fp_meas = 1.0, fp_noise = 0.0, fp_t = 1.0, fp_dt = 0.0, fp_bw = 1e-6;
  std::size_t fp_cells = 1024;
  std::vector<double> fp_times;
  std::string fp_out, fp_format = "csv";
  fp->add_option("--z0", fp_z0);
  fp->add_option("--meas-rate", fp_meas, "r theta^2");
  fp->add_option("--noise-rate", fp_noise, "S_x + S_y");
  fp->add_option("--t-end", fp_t);
  fp->add_option("--dt", fp_dt, "time step (0 = default)");
  fp->add_option("--cells", fp_cells);
  fp->add_option("--boundary-width", fp_bw);
  fp->add_option("--times", fp_times, "snapshot times")->delimiter(',');
  fp->add_option("--out", fp_out);
  fp->add_option("--format", fp_format)->check(CLI::IsMember({"csv", "json"}));

  auto* bloch = app.add_subcommand("bloch", "integrate the optical Bloch equations");
  double b_t1 = -1.0, b_t2 = -1.0, b_det = 0.0, b_t = 1000.0, b_dt = 0.0;
  double b_sx = 1.0 / 4096, b_sy = 1.0 / 4096, b_alpha = 1.0 / 16, b_rate = 1.0, b_theta = 0.125,
         b_omega0 = 0.125;
  std::vector<double> b_u0{0.0, 0.0, 1.0};
  std::string b_mode = "stimulated", b_out, b_format = "csv";
  int b_every = 1;
  bloch->add_option("--inv-T1", b_t1, "override 1/T1");
  bloch->add_option("--inv-T2", b_t2, "override 1/T2");
  bloch->add_option("--detuning", b_det, "used with both overrides");
  bloch->add_option("--sx", b_sx);
  bloch->add_option("--sy", b_sy);
  bloch->add_option("--alpha", b_alpha);
  bloch->add_option("--rate", b_rate);
  bloch->add_option("--theta", b_theta);
  bloch->add_option("--omega0", b_omega0);
  bloch->add_option("--mode", b_mode)->check(CLI::IsMember({"stimulated", "spontaneous"}));
  bloch->add_option("--u0", b_u0)->delimiter(',')->expected(3);
  bloch->add_option("--t-end", b_t);
  bloch->add_option("--dt", b_dt, "step (0 = largest allowed)");
  bloch->add_option("--every", b_every, "write every n-th step")->check(CLI::PositiveNumber);
  bloch->add_option("--out", b_out);
  bloch->add_option("--format", b_format)->check(CLI::IsMember({"csv", "json"}));

  auto* design = app.add_subcommand("design", "trapped-ion design calculator");
  double d_power = 1e-6, d_lambda = 6.8e-7, d_duration = 10.0, d_rp = 256.0;
  std::string d_out;
  design->add_option("--power", d_power, "detected optical power, W");
  design->add_option("--wavelength", d_lambda, "m");
  design->add_option("--duration", d_duration, "s");
  design->add_option("--resolving-power", d_rp);
  design->add_option("--out", d_out);

  Common sweep_opts;
  auto* sweep = app.add_subcommand("sweep", "ensembles over alpha or a feedback angle");
  add_common(sweep, sweep_opts);
  std::string sweep_param = "alpha";
  std::vector<double> sweep_values;
  sweep->add_option("--parameter", sweep_param)
      ->check(CLI::IsMember({"alpha", "feedback_angle_a"}));
  sweep->add_option("--values", sweep_values)->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*run) {
    const iqr::ExperimentConfig cfg = resolve(run_opts);
    if (dump_config) {
      std::cout << iqr::to_text(cfg);
      return 0;
    }
    const iqr::ScenarioResult r = iqr::run_scenario(cfg, run_opts.workers);
    for (const auto& [name, digest] : r.digests) std::cout << digest << "  " << name << "\n";
    std::cout << r.combined_digest << "  *\n";
    return 0;
  }

  if (*analytic) {
    iqr::Table t;
    if (curve == "charge") {
      t.add_column("q");
      t.add_column("density");
      for (double q : linspace(-3.0, 3.0, points)) {
        t.rows.push_back({format_double(q), format_double(iqr::charge_density(q, z0, time, rate, theta))});
      }
    } else if (curve == "greens") {
      t.add_column("z");
      t.add_column("density");
      for (double z : linspace(-1.0, 1.0, points + 2)) {
        if (std::abs(z) >= 1.0) continue;
        t.rows.push_back({format_double(z), format_double(iqr::greens_function(z, z0, tau))});
      }
    } else if (curve == "undecided") {
      t.add_column("tau");
      t.add_column("undecided_mass");
      for (double x : linspace(tau / points, tau, points)) {
        t.rows.push_back({format_double(x), format_double(iqr::undecided_mass(x, epsilon, z0))});
      }
    } else if (curve == "stationary") {
      t.add_column("z");
      t.add_column("density");
      for (double z : linspace(-1.0, 1.0, points + 2)) {
        if (std::abs(z) >= 1.0) continue;
        t.rows.push_back({format_double(z), format_double(iqr::stationary_density(z, gamma))});
      }
    } else {
      // 1/T1 against the qubit frequency, around the Stark-shifted resonance
      t.add_column("omega0");
      for (const char* c : {"inv_T1", "inv_T2", "zeno_factor", "fermi_rate"}) t.add_column(c);
      const double center = rate * theta;
      for (double w : linspace(center - 4.0 * std::abs(center), center + 4.0 * std::abs(center), points)) {
        const iqr::RateSet rs = iqr::relaxation_rates(s_x, s_y, alpha, rate, theta, w);
        t.rows.push_back({format_double(w), format_double(rs.inv_T1), format_double(rs.inv_T2),
                          format_double(rs.zeno_factor), format_double(rs.fermi_rate)});
      }
    }
    emit(a_out, iqr::render_table(t, table_format(a_format)));
    return 0;
  }

  if (*fp) {
    iqr::DensityGrid g = iqr::make_graded_grid(fp_cells, fp_bw);
    iqr::set_point_mass(g, fp_z0);
    iqr::SolveOptions opts;
    opts.dt = fp_dt;
    opts.output_times = fp_times;
    const auto snaps = iqr::solve(g, {fp_meas, fp_noise}, fp_t, opts);
    iqr::Table t;
    t.add_column("z");
    t.add_column("width");
    for (const auto& s : snaps) t.add_column("P_t=" + format_double(s.time));
    for (std::size_t i = 0; i < g.size(); ++i) {
      std::vector<std::string> row{format_double(g.centers[i]), format_double(g.widths[i])};
      for (const auto& s : snaps) row.push_back(format_double(s.values[i]));
      t.rows.push_back(std::move(row));
    }
    emit(fp_out, iqr::render_table(t, table_format(fp_format)));
    for (const auto& s : snaps) {
      const auto m = iqr::moments(s);
      std::cerr << "t=" << format_double(s.time) << " <z>=" << format_double(m.z)
                << " <1-z^2>=" << format_double(m.one_minus_z2)
                << " <sqrt(1-z^2)>=" << format_double(m.sqrt_one_minus_z2) << "\n";
    }
    return 0;
  }

  if (*bloch) {
    const auto mode = b_mode == "spontaneous" ? iqr::RelaxationMode::spontaneous
                                              : iqr::RelaxationMode::stimulated;
    iqr::BlochParams p;
    if (b_t1 >= 0.0 && b_t2 >= 0.0) {
      p = {b_t1, b_t2, b_det, mode};
    } else {
      p = iqr::bloch_params(iqr::relaxation_rates(b_sx, b_sy, b_alpha, b_rate, b_theta, b_omega0),
                            b_omega0, mode);
      if (b_t1 >= 0.0) p.inv_T1 = b_t1;
      if (b_t2 >= 0.0) p.inv_T2 = b_t2;
    }
    const double dt = b_dt > 0.0 ? b_dt : std::min(iqr::suggested_dt(p), b_t > 0 ? b_t : 1.0);
    const auto path = iqr::integrate({b_u0[0], b_u0[1], b_u0[2]}, p, b_t, dt);
    iqr::Table t;
    for (const char* c : {"t", "u_x", "u_y", "u_z"}) t.add_column(c);
    for (std::size_t k = 0; k < path.size(); ++k) {
      if (k % static_cast<std::size_t>(b_every) != 0 && k + 1 != path.size()) continue;
      const double tk = std::min(b_t, static_cast<double>(k) * dt);
      t.rows.push_back({format_double(tk), format_double(path[k].u_x), format_double(path[k].u_y),
                        format_double(path[k].u_z)});
    }
    emit(b_out, iqr::render_table(t, table_format(b_format)));
    return 0;
  }

  if (*design) {
    iqr::ExperimentConfig cfg = iqr::preset("design-example");
    cfg.design_power_watt = d_power;
    cfg.design_wavelength_m = d_lambda;
    cfg.design_duration_s = d_duration;
    cfg.design_resolving_power = d_rp;
    iqr::validate(cfg);
    emit(d_out, iqr::design_json(cfg).dump(2) + "\n");
    return 0;
  }

  if (*sweep) {
    iqr::ExperimentConfig cfg = resolve(sweep_opts);
    std::vector<double> values = sweep_values;
    if (values.empty()) {
      if (sweep_param != "alpha") throw iqr::invalid_parameter("--values is required");
      values = cfg.alpha_sweep_per_time;
    }
    const auto rows = iqr::run_sweep(cfg, sweep_param, values, sweep_opts.workers);
    const std::string text = iqr::render_table(iqr::sweep_table(sweep_param, rows), cfg.output_format);
    emit(sweep_opts.out.empty() ? std::string() : sweep_opts.out, text);
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_main(argc, argv);
  } catch (const iqr::numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const iqr::io_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
