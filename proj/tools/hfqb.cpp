// hfqb: hyperfine quantum-beat polarization toolkit.
//
// Subcommands:
//   freqs      beat frequencies and amplitudes of a level (I, J, A, B)
//   simulate   synthetic P_L(t) dataset, optionally with Gaussian noise
//   fit        extract A, B, dt, W from a measured dataset
//   residuals  residual diagnostics of a dataset against given parameters
//
// Exit codes: 0 success, 2 usage / bad flags, 3 input parse or validation
// failure, 4 fit non-convergence.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hfqb/beat_model.hpp"
#include "hfqb/dataset.hpp"
#include "hfqb/fitting.hpp"
#include "hfqb/hyperfine.hpp"

using nlohmann::json;

namespace {

constexpr int max_twice_j = 25;  // CLI accepts spins up to 25/2

hfqb::half_int parse_spin(const std::string& text, const char* flag) {
  hfqb::half_int h;
  try {
    h = hfqb::parse_half_int(text);
  } catch (const std::invalid_argument&) {
    throw hfqb::invalid_argument(std::string(flag) + ": not a half-integer: '" + text + "'");
  }
  if (h.twice() < 0) throw hfqb::invalid_argument(std::string(flag) + " must be >= 0");
  if (h.twice() > max_twice_j)
    throw hfqb::invalid_argument(std::string(flag) + " larger than 25/2 is not supported");
  return h;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw hfqb::invalid_argument("cannot open '" + path + "' for writing");
  out << text;
}

// shared flags

struct system_flags {
  std::string I = "7/2";
  std::string J = "3/2";
  double A = 0.0;
  double B = 0.0;

  void add_spins(CLI::App& cmd) {
    cmd.add_option("--I", I, "nuclear spin I (e.g. 7/2)")->capture_default_str();
    cmd.add_option("--J", J, "electronic angular momentum J")->capture_default_str();
  }
  hfqb::hyperfine_system make() const {
    return {parse_spin(I, "--I"), parse_spin(J, "--J"), A, B};
  }
};

json spectrum_json(const hfqb::hyperfine_system& sys, const hfqb::beat_spectrum& spec) {
  json comps = json::array();
  for (const auto& c : spec.components)
    comps.push_back({{"F", hfqb::to_string(c.F)},
                     {"Fprime", hfqb::to_string(c.Fprime)},
                     {"nu_MHz", c.nu_MHz},
                     {"amplitude", c.amplitude}});
  return {{"I", hfqb::to_string(sys.I)}, {"J", hfqb::to_string(sys.J)},
          {"A_MHz", sys.A_MHz},          {"B_MHz", sys.B_MHz},
          {"constant", spec.constant},   {"components", comps}};
}

json params_json(const hfqb::fit_params& p) {
  return {{"A_MHz", p.A_MHz}, {"B_MHz", p.B_MHz}, {"dt_ns", p.dt_ns}, {"W_ns", p.W_ns}};
}

// freqs

int cmd_freqs(const system_flags& sf, bool as_json, const std::string& out) {
  const hfqb::hyperfine_system sys = sf.make();
  const hfqb::beat_spectrum spec = hfqb::make_beat_spectrum(sys);

  std::ostringstream os;
  if (as_json) {
    os << spectrum_json(sys, spec).dump(2) << "\n";
  } else {
    char buf[128];
    std::snprintf(buf, sizeof buf, "# I = %s, J = %s, A = %g MHz, B = %g MHz\n",
                  hfqb::to_string(sys.I).c_str(), hfqb::to_string(sys.J).c_str(), sys.A_MHz,
                  sys.B_MHz);
    os << buf;
    std::snprintf(buf, sizeof buf, "constant %.9f\n", spec.constant);
    os << buf << "F,Fprime,nu_MHz,amplitude\n";
    for (const auto& c : spec.components) {
      std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.9f\n", hfqb::to_string(c.F).c_str(),
                    hfqb::to_string(c.Fprime).c_str(), c.nu_MHz, c.amplitude);
      os << buf;
    }
  }
  write_text(out, os.str());
  return 0;
}

// simulate

int cmd_simulate(const system_flags& sf, double W, double dt, double tmin, double tmax,
                 double tstep, const std::string& times_path, std::optional<double> noise,
                 std::optional<std::uint64_t> seed, std::optional<double> sigma_col,
                 const std::string& out) {
  const hfqb::hyperfine_system sys = sf.make();

  std::vector<double> times;
  if (!times_path.empty()) {
    std::ifstream in(times_path);
    if (!in) throw hfqb::invalid_argument("cannot open '" + times_path + "'");
    double t;
    while (in >> t) times.push_back(t);
    if (times.empty()) throw hfqb::parse_error("no sample times in '" + times_path + "'", 1);
  } else {
    if (!(tstep > 0.0)) throw hfqb::invalid_argument("--tstep must be > 0");
    if (tmax < tmin) throw hfqb::invalid_argument("--tmax must be >= --tmin");
    for (double t = tmin; t <= tmax + 1e-9 * tstep; t += tstep) times.push_back(t);
  }

  const auto pts = hfqb::simulate(sys, {W, dt}, times, noise, seed);

  // CSV needs a positive sigma column; without a noise model fall back to the
  // requested --sigma, or a 1% placeholder.
  double sigma_out = sigma_col.value_or(noise && *noise > 0.0 ? *noise : 0.01);
  if (sigma_out <= 0.0) throw hfqb::invalid_argument("--sigma must be > 0");

  hfqb::beat_dataset data;
  for (std::size_t i = 0; i < pts.size(); ++i)
    data.points.push_back(
        {static_cast<int>(i + 1), pts[i].t_ns, pts[i].pl, pts[i].sigma.value_or(sigma_out)});
  // keep explicit --sigma even when a noise model is active
  if (sigma_col)
    for (auto& p : data.points) p.sigma = *sigma_col;

  std::ostringstream os;
  hfqb::save_dataset(os, data);
  write_text(out, os.str());
  return 0;
}

// fit

hfqb::grid_spec parse_grid_value(const std::string& value, const std::string& flag) {
  std::vector<double> parts;
  std::size_t start = 0;
  while (true) {
    const auto colon = value.find(':', start);
    const std::string field =
        colon == std::string::npos ? value.substr(start) : value.substr(start, colon - start);
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(field, &used));
      if (used != field.size()) throw std::invalid_argument(field);
    } catch (const std::exception&) {
      throw hfqb::invalid_argument(flag + ": bad grid component '" + field + "'");
    }
    if (colon == std::string::npos) break;
    start = colon + 1;
  }
  if (parts.size() == 1) return {parts[0], parts[0], 0.0};
  if (parts.size() == 3) return {parts[0], parts[1], parts[2]};
  throw hfqb::invalid_argument(flag + ": expected NAME=value or NAME=lo:hi:step");
}

void apply_grid_flags(const std::vector<std::string>& grids, hfqb::fit_config& cfg) {
  for (const std::string& g : grids) {
    const auto eq = g.find('=');
    if (eq == std::string::npos)
      throw hfqb::invalid_argument("--grid: expected NAME=lo:hi:step, got '" + g + "'");
    const std::string name = g.substr(0, eq);
    const hfqb::grid_spec spec = parse_grid_value(g.substr(eq + 1), "--grid " + name);
    if (name == "A")
      cfg.A = spec;
    else if (name == "B")
      cfg.B = spec;
    else if (name == "dt")
      cfg.dt = spec;
    else if (name == "W")
      cfg.W = spec;
    else
      throw hfqb::invalid_argument("--grid: unknown parameter '" + name + "'");
  }
}

void write_plot_files(const std::string& dir, const hfqb::hyperfine_system& sys,
                      const hfqb::beat_dataset& data, const hfqb::fit_result& res) {
  std::filesystem::create_directories(dir);

  double t_lo = 0.0, t_hi = 0.0;
  for (const auto& p : data.points) {
    t_lo = std::min(t_lo, p.t_ns);
    t_hi = std::max(t_hi, p.t_ns);
  }
  const hfqb::hyperfine_system at{sys.I, sys.J, res.params.A_MHz, res.params.B_MHz};
  const hfqb::beat_spectrum spec = hfqb::make_beat_spectrum(at);
  const hfqb::pulse_model pulse{res.params.W_ns, res.params.dt_ns};

  std::ofstream curve(dir + "/fit_curve.csv");
  if (!curve) throw hfqb::invalid_argument("cannot write to '" + dir + "'");
  curve << "t_ns,PL_percent\n";
  char buf[96];
  for (double t = t_lo; t <= t_hi + 1e-9; t += 0.2) {
    std::snprintf(buf, sizeof buf, "%.3f,%.6f\n", t, 100.0 * hfqb::polarization_cs(spec, pulse, t));
    curve << buf;
  }

  std::ofstream resid(dir + "/residuals.csv");
  resid << "index,t_ns,normalized_residual\n";
  for (std::size_t i = 0; i < data.points.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", data.points[i].index, data.points[i].t_ns,
                  res.residuals[i]);
    resid << buf;
  }
}

int cmd_fit(const std::string& data_path, const system_flags& sf,
            const std::vector<std::string>& grids, const std::string& uncertainty,
            const std::string& out, const std::string& plot_dir) {
  const hfqb::hyperfine_system sys = sf.make();
  const hfqb::beat_dataset data = hfqb::load_dataset(data_path);

  hfqb::fit_config cfg;
  apply_grid_flags(grids, cfg);
  if (uncertainty == "profile")
    cfg.uncertainty = hfqb::fit_config::sigma_recipe::profile;
  else if (uncertainty == "covariance")
    cfg.uncertainty = hfqb::fit_config::sigma_recipe::covariance;
  else
    throw hfqb::invalid_argument("--uncertainty must be 'profile' or 'covariance'");

  const hfqb::fit_result res = hfqb::fit(data, sys, cfg);
  const hfqb::residual_summary sum = hfqb::residual_report(res);

  json report = {{"params", params_json(res.params)},
                 {"two_sigma", params_json(res.two_sigma)},
                 {"red_chi2", res.red_chi2},
                 {"n_points", res.n_points},
                 {"n_dof", res.n_dof},
                 {"residual_summary",
                  {{"mean", sum.mean}, {"fraction_within_1sigma", sum.fraction_within_1sigma}}}};
  write_text(out, report.dump(2) + "\n");

  if (!plot_dir.empty()) write_plot_files(plot_dir, sys, data, res);
  return 0;
}

// residuals

int cmd_residuals(const std::string& data_path, const system_flags& sf, double dt, double W,
                  bool as_json, const std::string& out) {
  const hfqb::hyperfine_system sys = sf.make();
  const hfqb::beat_dataset data = hfqb::load_dataset(data_path);
  const hfqb::fit_params params{sf.A, sf.B, dt, W};

  hfqb::fit_result res;
  res.params = params;
  res.n_points = static_cast<int>(data.points.size());
  res.n_dof = res.n_points - 4;
  res.residuals = hfqb::normalized_residuals(params, sys, data);
  res.red_chi2 = hfqb::chi2(params, sys, data);
  const hfqb::residual_summary sum = hfqb::residual_report(res);

  std::ostringstream os;
  if (as_json) {
    json per = json::array();
    for (std::size_t i = 0; i < data.points.size(); ++i)
      per.push_back({{"index", data.points[i].index},
                     {"t_ns", data.points[i].t_ns},
                     {"r", res.residuals[i]}});
    const json report = {{"params", params_json(params)},
                         {"red_chi2", res.red_chi2},
                         {"residual_summary",
                          {{"mean", sum.mean},
                           {"fraction_within_1sigma", sum.fraction_within_1sigma},
                           {"per_point", per}}}};
    os << report.dump(2) << "\n";
  } else {
    char buf[96];
    std::snprintf(buf, sizeof buf, "red_chi2 %.6f  mean %.4f  within_1sigma %.4f\n", res.red_chi2,
                  sum.mean, sum.fraction_within_1sigma);
    os << buf << "index,t_ns,normalized_residual\n";
    for (std::size_t i = 0; i < data.points.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", data.points[i].index, data.points[i].t_ns,
                    res.residuals[i]);
      os << buf;
    }
  }
  write_text(out, os.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hyperfine quantum-beat polarization toolkit"};
  app.require_subcommand(1);

  system_flags sf_freqs, sf_sim, sf_fit, sf_res;
  std::string out_freqs, out_sim, out_fit, out_res;
  bool json_freqs = false, json_res = false;

  auto* freqs = app.add_subcommand("freqs", "beat frequencies and amplitudes");
  sf_freqs.add_spins(*freqs);
  freqs->add_option("--A", sf_freqs.A, "dipole constant A (MHz)")->capture_default_str();
  freqs->add_option("--B", sf_freqs.B, "quadrupole constant B (MHz)")->capture_default_str();
  freqs->add_flag("--json", json_freqs, "JSON output");
  freqs->add_option("--out", out_freqs, "output file (default stdout)");

  double W = 0.0, dt = 0.0, tmin = 0.0, tmax = 120.0, tstep = 1.0;
  std::string times_path;
  double noise_v = 0.0, sigma_v = 0.0;
  std::uint64_t seed_v = 0;
  auto* sim = app.add_subcommand("simulate", "synthetic polarization dataset");
  sf_sim.add_spins(*sim);
  sim->add_option("--A", sf_sim.A, "dipole constant A (MHz)")->capture_default_str();
  sim->add_option("--B", sf_sim.B, "quadrupole constant B (MHz)")->capture_default_str();
  sim->add_option("--W", W, "pulse width (ns)")->capture_default_str();
  sim->add_option("--dt", dt, "time-origin offset (ns)")->capture_default_str();
  sim->add_option("--tmin", tmin, "first delay (ns)")->capture_default_str();
  sim->add_option("--tmax", tmax, "last delay (ns)")->capture_default_str();
  sim->add_option("--tstep", tstep, "delay step (ns)")->capture_default_str();
  sim->add_option("--times", times_path, "file with delays, overrides --tmin/--tmax/--tstep");
  auto* noise_opt = sim->add_option("--noise", noise_v, "Gaussian noise sigma (fraction)");
  auto* seed_opt = sim->add_option("--seed", seed_v, "noise RNG seed");
  auto* sigma_opt =
      sim->add_option("--sigma", sigma_v, "sigma column value (fraction, default 0.01 or --noise)");
  sim->add_option("--out", out_sim, "output CSV (default stdout)");

  std::string fit_data, uncertainty = "profile", plot_dir;
  std::vector<std::string> grid_flags;
  auto* fitc = app.add_subcommand("fit", "extract A, B, dt, W from a dataset");
  fitc->add_option("data", fit_data, "measured dataset CSV")->required();
  sf_fit.add_spins(*fitc);
  fitc->add_option("--grid", grid_flags, "start grid NAME=lo:hi:step (NAME in A,B,dt,W)");
  fitc->add_option("--uncertainty", uncertainty, "profile | covariance")->capture_default_str();
  fitc->add_option("--out", out_fit, "JSON report file (default stdout)");
  fitc->add_option("--plot-dir", plot_dir, "directory for fit_curve.csv and residuals.csv");

  std::string res_data;
  double res_dt = 0.0, res_W = 0.0;
  auto* resc = app.add_subcommand("residuals", "residuals against given parameters");
  resc->add_option("data", res_data, "measured dataset CSV")->required();
  sf_res.add_spins(*resc);
  resc->add_option("--A", sf_res.A, "dipole constant A (MHz)")->required();
  resc->add_option("--B", sf_res.B, "quadrupole constant B (MHz)")->capture_default_str();
  resc->add_option("--dt", res_dt, "time-origin offset (ns)")->capture_default_str();
  resc->add_option("--W", res_W, "pulse width (ns)")->capture_default_str();
  resc->add_flag("--json", json_res, "JSON output");
  resc->add_option("--out", out_res, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (freqs->parsed()) return cmd_freqs(sf_freqs, json_freqs, out_freqs);
    if (sim->parsed())
      return cmd_simulate(sf_sim, W, dt, tmin, tmax, tstep, times_path,
                          noise_opt->count() ? std::optional<double>(noise_v) : std::nullopt,
                          seed_opt->count() ? std::optional<std::uint64_t>(seed_v) : std::nullopt,
                          sigma_opt->count() ? std::optional<double>(sigma_v) : std::nullopt,
                          out_sim);
    if (fitc->parsed())
      return cmd_fit(fit_data, sf_fit, grid_flags, uncertainty, out_fit, plot_dir);
    if (resc->parsed()) return cmd_residuals(res_data, sf_res, res_dt, res_W, json_res, out_res);
  } catch (const hfqb::parse_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const hfqb::validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const hfqb::convergence_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const hfqb::profile_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const hfqb::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {  // includes hfqb::invalid_argument
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
