#pragma once

// Weighted least-squares extraction of the hyperfine constants (A, B) plus the
// nuisance parameters (dt, W) from a measured polarization-beat dataset.
// Deterministic multi-start Levenberg-Marquardt with an analytic Jacobian;
// uncertainties from a profile-chi2 scan (default) or the covariance matrix.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "beat_model.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "hyperfine.hpp"

namespace hfqb {

struct fit_params {
  double A_MHz = 0.0;
  double B_MHz = 0.0;
  double dt_ns = 0.0;  // time-origin offset
  double W_ns = 0.0;   // pulse width, >= 0
};

// Inclusive start grid lo, lo+step, ..., hi; lo == hi pins a single start.
struct grid_spec {
  double lo;
  double hi;
  double step;

  std::vector<double> points() const {
    if (!(hi >= lo)) throw invalid_argument("grid upper edge below lower edge");
    if (hi == lo) return {lo};
    if (!(step > 0.0)) throw invalid_argument("grid step must be > 0");
    std::vector<double> pts;
    for (double v = lo; v <= hi + 1e-9 * step; v += step) pts.push_back(std::min(v, hi));
    return pts;
  }
};

struct fit_config {
  grid_spec A{5.0, 10.0, 0.25};
  grid_spec B{-2.0, 2.0, 0.5};
  grid_spec dt{-1.0, 1.0, 0.5};
  grid_spec W{0.0, 5.0, 1.0};
  double dt_limit_ns = 5.0;  // optimizer keeps |dt| <= dt_limit_ns
  int max_iterations = 400;
  double ftol = 1e-13;
  double xtol = 1e-13;
  enum class sigma_recipe { profile, covariance };
  sigma_recipe uncertainty = sigma_recipe::profile;
  int profile_max_steps = 60;
  double profile_grow = 1.6;
};

struct fit_result {
  fit_params params;
  fit_params two_sigma;    // per-parameter 2-sigma half-widths
  double red_chi2 = 0.0;
  int n_points = 0;
  int n_dof = 0;
  std::vector<double> residuals;  // (model - measured)/sigma, dataset order
};

struct residual_summary {
  double mean = 0.0;
  double fraction_within_1sigma = 0.0;
  std::vector<double> per_point;
};

namespace detail {

constexpr int n_par = 4;  // A, B, dt, W

inline std::array<double, n_par> to_array(const fit_params& p) {
  return {p.A_MHz, p.B_MHz, p.dt_ns, p.W_ns};
}
inline fit_params from_array(const std::array<double, n_par>& x) {
  return {x[0], x[1], x[2], x[3]};
}

// d/dx of the smear factor 2(1-cos x)/x^2.
inline double smear_dx(double x) {
  if (std::abs(x) < 1e-4) return -x / 6.0 + x * x * x / 90.0;
  return 2.0 * std::sin(x) / (x * x) - 4.0 * (1.0 - std::cos(x)) / (x * x * x);
}

// Beat model with (I, J) frozen: amplitudes and the linear coefficients of
// each beat frequency in (A, B) are cached; set() rewrites the frequencies so
// evaluation matches make_beat_spectrum + polarization_cs bit for bit.
struct model_eval {
  beat_spectrum spec;
  std::vector<double> dnu_dA;
  std::vector<double> dnu_dB;
  std::vector<double> sgn;

  model_eval(half_int I, half_int J) : spec(make_beat_spectrum(hyperfine_system(I, J))) {
    for (const beat_component& c : spec.components) {
      const hf_coeffs lo = energy_shift_coeffs(I, J, c.F);
      const hf_coeffs hi = energy_shift_coeffs(I, J, c.Fprime);
      dnu_dA.push_back(to_double(hi.a - lo.a));
      dnu_dB.push_back(to_double(hi.b - lo.b));
      sgn.push_back(1.0);
    }
  }

  void set(double A_MHz, double B_MHz) {
    for (std::size_t k = 0; k < spec.components.size(); ++k) {
      const double s = dnu_dA[k] * A_MHz + dnu_dB[k] * B_MHz;
      sgn[k] = s < 0.0 ? -1.0 : 1.0;
      spec.components[k].nu_MHz = std::abs(s);
    }
  }

  // P_L and its partials w.r.t. (A, B, dt, W); set() must match x.
  double value_and_grad(const std::array<double, n_par>& x, double t,
                        std::array<double, n_par>& dP) const {
    const double tau = t + x[2];
    const double W = x[3];
    double g = spec.constant, gA = 0.0, gB = 0.0, gt = 0.0, gW = 0.0;
    for (std::size_t k = 0; k < spec.components.size(); ++k) {
      const beat_component& c = spec.components[k];
      const double u = omega_per_MHz * c.nu_MHz;
      const double s = smear_factor(c.nu_MHz, W);
      const double sp = smear_dx(u * W);
      const double cs = std::cos(u * tau);
      const double sn = std::sin(u * tau);
      g += c.amplitude * s * cs;
      const double dg_dnu = c.amplitude * omega_per_MHz * (sp * W * cs - s * tau * sn);
      gA += dg_dnu * sgn[k] * dnu_dA[k];
      gB += dg_dnu * sgn[k] * dnu_dB[k];
      gt += -c.amplitude * s * u * sn;
      gW += c.amplitude * sp * u * cs;
    }
    const double d = 20.0 + g;
    const double dPdg = 60.0 / (d * d);
    dP = {dPdg * gA, dPdg * gB, dPdg * gt, dPdg * gW};
    return polarization_cs_from_g2(g);
  }
};

inline double chi2u(model_eval& eval, const beat_dataset& data,
                    const std::array<double, n_par>& x) {
  eval.set(x[0], x[1]);
  const pulse_model pulse{x[3], x[2]};
  double sum = 0.0;
  for (const beat_point& p : data.points) {
    const double r = (polarization_cs(eval.spec, pulse, p.t_ns) - p.pl) / p.sigma;
    sum += r * r;
  }
  return sum;
}

struct bounds4 {
  std::array<double, n_par> lo, hi;
};

inline bounds4 make_bounds(const fit_config& cfg) {
  const double inf = std::numeric_limits<double>::infinity();
  return {{-inf, -inf, -cfg.dt_limit_ns, 0.0}, {inf, inf, cfg.dt_limit_ns, inf}};
}

inline void clamp_to(const bounds4& b, std::array<double, n_par>& x) {
  for (int q = 0; q < n_par; ++q) x[q] = std::clamp(x[q], b.lo[q], b.hi[q]);
}

// Gaussian elimination with partial pivoting on the leading n x n block.
inline bool solve_lin(std::array<std::array<double, n_par>, n_par> a,
                      std::array<double, n_par>& b, int n) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) < 1e-300) return false;
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (int r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < n; ++c) acc -= a[r][c] * b[c];
    b[r] = acc / a[r][r];
  }
  return true;
}

inline bool invert_sym(const std::array<std::array<double, n_par>, n_par>& a,
                       std::array<std::array<double, n_par>, n_par>& inv) {
  // Gauss-Jordan on [a | I]
  std::array<std::array<double, 2 * n_par>, n_par> m{};
  for (int r = 0; r < n_par; ++r) {
    for (int c = 0; c < n_par; ++c) m[r][c] = a[r][c];
    m[r][n_par + r] = 1.0;
  }
  for (int col = 0; col < n_par; ++col) {
    int piv = col;
    for (int r = col + 1; r < n_par; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (std::abs(m[piv][col]) < 1e-300) return false;
    std::swap(m[piv], m[col]);
    const double d = m[col][col];
    for (int c = 0; c < 2 * n_par; ++c) m[col][c] /= d;
    for (int r = 0; r < n_par; ++r) {
      if (r == col) continue;
      const double f = m[r][col];
      if (f == 0.0) continue;
      for (int c = 0; c < 2 * n_par; ++c) m[r][c] -= f * m[col][c];
    }
  }
  for (int r = 0; r < n_par; ++r)
    for (int c = 0; c < n_par; ++c) inv[r][c] = m[r][n_par + c];
  return true;
}

struct lm_options {
  int max_iter = 400;
  double ftol = 1e-13;
  double xtol = 1e-13;
};

struct lm_outcome {
  std::array<double, n_par> x{};
  double chi2u = 0.0;
  bool converged = false;
};

// Damped normal equations on the active set; coordinates pinned by the mask or
// pressed against a bound with an outward gradient are frozen.
inline lm_outcome lm_minimize(model_eval& eval, const beat_dataset& data,
                              std::array<double, n_par> x,
                              const std::array<bool, n_par>& free_mask, const bounds4& bnd,
                              const lm_options& opt) {
  clamp_to(bnd, x);
  double c2 = chi2u(eval, data, x);
  double lambda = 1e-3;
  lm_outcome out{x, c2, false};

  for (int iter = 0; iter < opt.max_iter; ++iter) {
    eval.set(x[0], x[1]);
    std::array<std::array<double, n_par>, n_par> H{};
    std::array<double, n_par> g{};
    for (const beat_point& p : data.points) {
      std::array<double, n_par> dP;
      const double v = eval.value_and_grad(x, p.t_ns, dP);
      const double r = (v - p.pl) / p.sigma;
      for (int q = 0; q < n_par; ++q) dP[q] /= p.sigma;
      for (int q = 0; q < n_par; ++q) {
        g[q] += dP[q] * r;
        for (int w = q; w < n_par; ++w) H[q][w] += dP[q] * dP[w];
      }
    }
    for (int q = 0; q < n_par; ++q)
      for (int w = 0; w < q; ++w) H[q][w] = H[w][q];

    std::array<bool, n_par> act = free_mask;
    for (int q = 0; q < n_par; ++q) {
      if (!act[q]) continue;
      if (x[q] <= bnd.lo[q] && g[q] > 0.0) act[q] = false;
      if (x[q] >= bnd.hi[q] && g[q] < 0.0) act[q] = false;
    }
    std::array<int, n_par> idx{};
    int m = 0;
    double gmax = 0.0;
    for (int q = 0; q < n_par; ++q) {
      if (!act[q]) continue;
      idx[m++] = q;
      gmax = std::max(gmax, std::abs(g[q]));
    }
    if (m == 0 || gmax <= 1e-12 * std::max(1.0, c2)) {
      out.converged = true;
      break;
    }

    bool stepped = false;
    for (int tries = 0; tries < 50 && !stepped; ++tries) {
      std::array<std::array<double, n_par>, n_par> a{};
      std::array<double, n_par> b{};
      for (int i = 0; i < m; ++i) {
        for (int k = 0; k < m; ++k) a[i][k] = H[idx[i]][idx[k]];
        a[i][i] += lambda * std::max(H[idx[i]][idx[i]], 1e-12);
        b[i] = -g[idx[i]];
      }
      if (!solve_lin(a, b, m)) {
        lambda *= 10.0;
        continue;
      }
      std::array<double, n_par> xt = x;
      for (int i = 0; i < m; ++i) xt[idx[i]] += b[i];
      clamp_to(bnd, xt);
      const double ct = chi2u(eval, data, xt);
      if (ct < c2) {
        const double drop = c2 - ct;
        double dmax = 0.0;
        for (int q = 0; q < n_par; ++q)
          dmax = std::max(dmax, std::abs(xt[q] - x[q]) / (std::abs(x[q]) + 1.0));
        x = xt;
        c2 = ct;
        lambda = std::max(lambda / 3.0, 1e-14);
        stepped = true;
        if (drop <= opt.ftol * std::max(c2, 1e-300) || dmax <= opt.xtol) out.converged = true;
      } else {
        lambda *= 4.0;
        if (lambda > 1e15) break;
      }
    }
    out.x = x;
    out.chi2u = c2;
    if (out.converged) break;
    if (!stepped) {
      out.converged = gmax <= 1e-6 * std::max(1.0, c2);
      break;
    }
  }
  out.x = x;
  out.chi2u = c2;
  return out;
}

inline void check_fit_inputs(const beat_dataset& data, const fit_config& cfg) {
  if (static_cast<int>(data.points.size()) <= n_par)
    throw invalid_argument("need more than 4 data points");
  if (!(cfg.dt_limit_ns > 0.0)) throw invalid_argument("dt limit must be > 0");
  if (cfg.max_iterations <= 0) throw invalid_argument("max_iterations must be > 0");
  if (!(cfg.ftol > 0.0) || !(cfg.xtol > 0.0)) throw invalid_argument("tolerances must be > 0");
  if (cfg.W.lo < 0.0) throw invalid_argument("W grid must be >= 0");
  if (std::abs(cfg.dt.lo) > cfg.dt_limit_ns || std::abs(cfg.dt.hi) > cfg.dt_limit_ns)
    throw invalid_argument("dt grid exceeds dt limit");
}

}  // namespace detail

inline double chi2(const fit_params& p, const hyperfine_system& sys, const beat_dataset& data) {
  const int n = static_cast<int>(data.points.size());
  if (n <= detail::n_par) throw invalid_argument("need more than 4 data points");
  detail::model_eval eval(sys.I, sys.J);
  return detail::chi2u(eval, data, detail::to_array(p)) / (n - detail::n_par);
}

// Analytic gradient of the reduced chi2 (same Jacobian the optimizer uses).
inline std::array<double, 4> chi2_gradient(const fit_params& p, const hyperfine_system& sys,
                                           const beat_dataset& data) {
  const int n = static_cast<int>(data.points.size());
  if (n <= detail::n_par) throw invalid_argument("need more than 4 data points");
  detail::model_eval eval(sys.I, sys.J);
  const auto x = detail::to_array(p);
  eval.set(x[0], x[1]);
  std::array<double, 4> grad{};
  for (const beat_point& pt : data.points) {
    std::array<double, 4> dP;
    const double v = eval.value_and_grad(x, pt.t_ns, dP);
    const double r = (v - pt.pl) / pt.sigma;
    for (int q = 0; q < 4; ++q) grad[q] += 2.0 * r * dP[q] / pt.sigma;
  }
  for (double& gq : grad) gq /= n - detail::n_par;
  return grad;
}

inline std::vector<double> normalized_residuals(const fit_params& p, const hyperfine_system& sys,
                                                const beat_dataset& data) {
  detail::model_eval eval(sys.I, sys.J);
  const auto x = detail::to_array(p);
  eval.set(x[0], x[1]);
  const pulse_model pulse{x[3], x[2]};
  std::vector<double> r;
  r.reserve(data.points.size());
  for (const beat_point& pt : data.points)
    r.push_back((polarization_cs(eval.spec, pulse, pt.t_ns) - pt.pl) / pt.sigma);
  return r;
}

namespace detail {

// Smallest chi2u with parameter p pinned to value, others re-optimized.
inline double profile_point(model_eval& eval, const beat_dataset& data, const bounds4& bnd,
                            const lm_options& opt, int p, double value,
                            std::array<double, n_par>& warm) {
  std::array<bool, n_par> mask{true, true, true, true};
  mask[p] = false;
  std::array<double, n_par> start = warm;
  start[p] = value;
  const lm_outcome res = lm_minimize(eval, data, start, mask, bnd, opt);
  warm = res.x;
  return res.chi2u;
}

inline std::optional<std::array<std::array<double, n_par>, n_par>> covariance_at(
    model_eval& eval, const beat_dataset& data, const std::array<double, n_par>& x) {
  eval.set(x[0], x[1]);
  std::array<std::array<double, n_par>, n_par> H{};
  for (const beat_point& p : data.points) {
    std::array<double, n_par> dP;
    eval.value_and_grad(x, p.t_ns, dP);
    for (int q = 0; q < n_par; ++q) dP[q] /= p.sigma;
    for (int q = 0; q < n_par; ++q)
      for (int w = 0; w < n_par; ++w) H[q][w] += dP[q] * dP[w];
  }
  std::array<std::array<double, n_par>, n_par> cov;
  if (!invert_sym(H, cov)) return std::nullopt;
  return cov;
}

}  // namespace detail

// Per-parameter 2-sigma from the profile chi2: pin the parameter, re-optimize
// the rest, find where eta * chi2 rises by 1 above the minimum, report twice
// the larger of the two side distances.
inline fit_params profile_two_sigma(const beat_dataset& data, const hyperfine_system& sys,
                                    const fit_params& at_min, const fit_config& cfg = {}) {
  detail::check_fit_inputs(data, cfg);
  detail::model_eval eval(sys.I, sys.J);
  const detail::bounds4 bnd = detail::make_bounds(cfg);
  const detail::lm_options opt{cfg.max_iterations, cfg.ftol, cfg.xtol};
  const auto x0 = detail::to_array(at_min);
  const double c2min = detail::chi2u(eval, data, x0);
  const double target = c2min + 1.0;

  std::array<double, detail::n_par> scale;
  const auto cov = detail::covariance_at(eval, data, x0);
  for (int p = 0; p < detail::n_par; ++p) {
    double s = cov ? std::sqrt(std::max((*cov)[p][p], 0.0)) : 0.0;
    if (!(s > 0.0) || !std::isfinite(s)) s = std::max(0.05 * std::abs(x0[p]), 0.01);
    scale[p] = s;
  }

  std::array<double, detail::n_par> result{};
  for (int p = 0; p < detail::n_par; ++p) {
    std::optional<double> side_width[2];
    for (int dir_i = 0; dir_i < 2; ++dir_i) {
      const double dir = dir_i == 0 ? 1.0 : -1.0;
      std::array<double, detail::n_par> warm = x0;
      double below = x0[p];
      double above = 0.0;
      bool found = false;
      double d = scale[p];
      for (int step = 0; step < cfg.profile_max_steps; ++step) {
        double cand = x0[p] + dir * d;
        bool at_bound = false;
        if (cand <= bnd.lo[p]) {
          cand = bnd.lo[p];
          at_bound = true;
        }
        if (cand >= bnd.hi[p]) {
          cand = bnd.hi[p];
          at_bound = true;
        }
        const double psi = detail::profile_point(eval, data, bnd, opt, p, cand, warm);
        if (psi >= target) {
          above = cand;
          found = true;
          break;
        }
        below = cand;
        if (at_bound) break;  // bound reached while still under target: no crossing
        d *= cfg.profile_grow;
      }
      if (!found) continue;
      double lo = below, hi = above;
      std::array<double, detail::n_par> wbis = warm;
      const double xtol_bis = std::max(1e-6 * scale[p], 1e-12);
      for (int it = 0; it < 100 && std::abs(hi - lo) > xtol_bis; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (detail::profile_point(eval, data, bnd, opt, p, mid, wbis) >= target)
          hi = mid;
        else
          lo = mid;
      }
      side_width[dir_i] = std::abs(0.5 * (lo + hi) - x0[p]);
    }
    if (!side_width[0] && !side_width[1])
      throw profile_error("profile for parameter " + std::to_string(p) +
                          " does not bracket the target level");
    double w = 0.0;
    if (side_width[0]) w = std::max(w, *side_width[0]);
    if (side_width[1]) w = std::max(w, *side_width[1]);
    result[p] = 2.0 * w;
  }
  return detail::from_array(result);
}

inline fit_params covariance_two_sigma(const beat_dataset& data, const hyperfine_system& sys,
                                       const fit_params& at_min) {
  detail::model_eval eval(sys.I, sys.J);
  const auto cov = detail::covariance_at(eval, data, detail::to_array(at_min));
  if (!cov) throw profile_error("covariance matrix is singular at the minimum");
  std::array<double, detail::n_par> out{};
  for (int p = 0; p < detail::n_par; ++p) out[p] = 2.0 * std::sqrt(std::max((*cov)[p][p], 0.0));
  return detail::from_array(out);
}

inline fit_result fit(const beat_dataset& data, const hyperfine_system& sys,
                      const fit_config& cfg = {}) {
  detail::check_fit_inputs(data, cfg);
  const std::vector<double> sA = cfg.A.points();
  const std::vector<double> sB = cfg.B.points();
  const std::vector<double> sdt = cfg.dt.points();
  const std::vector<double> sW = cfg.W.points();

  detail::model_eval eval(sys.I, sys.J);
  const detail::bounds4 bnd = detail::make_bounds(cfg);
  const detail::lm_options opt{cfg.max_iterations, cfg.ftol, cfg.xtol};
  const std::array<bool, detail::n_par> all_free{true, true, true, true};

  bool any = false;
  std::array<double, detail::n_par> best_x{};
  double best_c2 = std::numeric_limits<double>::infinity();
  for (double a : sA)
    for (double b : sB)
      for (double dt : sdt)
        for (double w : sW) {
          const detail::lm_outcome res =
              detail::lm_minimize(eval, data, {a, b, dt, w}, all_free, bnd, opt);
          if (!res.converged) continue;
          if (!any || res.chi2u < best_c2 || (res.chi2u == best_c2 && res.x < best_x)) {
            any = true;
            best_c2 = res.chi2u;
            best_x = res.x;
          }
        }
  if (!any) throw convergence_error("no start of the fit grid converged");

  fit_result out;
  out.params = detail::from_array(best_x);
  out.n_points = static_cast<int>(data.points.size());
  out.n_dof = out.n_points - detail::n_par;
  out.red_chi2 = best_c2 / out.n_dof;
  out.residuals = normalized_residuals(out.params, sys, data);
  out.two_sigma = cfg.uncertainty == fit_config::sigma_recipe::profile
                      ? profile_two_sigma(data, sys, out.params, cfg)
                      : covariance_two_sigma(data, sys, out.params);
  return out;
}

inline residual_summary residual_report(const fit_result& res) {
  residual_summary s;
  s.per_point = res.residuals;
  if (res.residuals.empty()) return s;
  int inside = 0;
  for (double r : res.residuals) {
    s.mean += r;
    if (std::abs(r) <= 1.0) ++inside;
  }
  s.mean /= static_cast<double>(res.residuals.size());
  s.fraction_within_1sigma = static_cast<double>(inside) / static_cast<double>(res.residuals.size());
  return s;
}

}  // namespace hfqb
