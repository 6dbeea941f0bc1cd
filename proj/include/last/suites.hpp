#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "last/harness.hpp"

namespace last {

// ---------------------------------------------------------------------------
// Small statistics helpers
// ---------------------------------------------------------------------------

struct LineFit {
  double slope = 0.0, intercept = 0.0, r2 = 0.0, slope_se = 0.0;
};

inline LineFit fit_line(const Vec& xs, const Vec& ys) {
  require(xs.size() == ys.size() && xs.size() >= 2, "fit_line: need >= 2 points");
  const double n = double(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
    syy += ys[i] * ys[i];
  }
  const double vxx = sxx - sx * sx / n;
  const double vxy = sxy - sx * sy / n;
  const double vyy = syy - sy * sy / n;
  LineFit f;
  require(vxx > 0.0, "fit_line: degenerate x values");
  f.slope = vxy / vxx;
  f.intercept = (sy - f.slope * sx) / n;
  const double ss_res = std::max(vyy - f.slope * vxy, 0.0);
  f.r2 = vyy > 0.0 ? 1.0 - ss_res / vyy : 1.0;
  if (xs.size() > 2) f.slope_se = std::sqrt(ss_res / (n - 2.0) / vxx);
  return f;
}

// ---------------------------------------------------------------------------
// Theorem 1: exponential teachability of the fixed-gain teacher
// ---------------------------------------------------------------------------

struct EtSuiteResult {
  std::size_t runs = 0, passed = 0;
  double mean_measured_slope = 0.0;
  double mean_bound_slope = 0.0;
  bool pass = false;
  std::string details;
};

/// Noiseless realizable LSR pools; constants estimated from the pool:
///   mu_bar = R0 lambda_min(C),  L_max = R0 max_i |x_i|^2,
/// valid per step while the distance stays in [R0/2, R0]. The measured
/// log-distance slope over that window (after a 10-step burn-in) must not
/// exceed 1/2 log(1 - c1 eta mu_bar + c1^2 eta^2 L_max^2).
inline EtSuiteResult run_et_suite(std::size_t runs = 100, std::uint64_t seed0 = 1,
                                  std::size_t n = 50, std::size_t d = 4,
                                  double eta = 1e-3, std::size_t t_cap = 4000) {
  EtSuiteResult out;
  out.runs = runs;
  double sum_measured = 0.0, sum_bound = 0.0;
  for (std::size_t r = 0; r < runs; ++r) {
    SeededRng rng(seed0 + r);
    const Vec wstar = rng.normal_vec(d);
    Pool pool;
    pool.d = d;
    pool.label_kind = LabelKind::Regression;
    Mat C(d, d);
    double max_x2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Vec x = rng.normal_vec(d);
      max_x2 = std::max(max_x2, dot(x, x));
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) C(a, b) += x[a] * x[b] / double(n);
      pool.examples.push_back({x, {dot(wstar, x)}, i});
    }
    const double lam_min = sym_eig_min(C);

    // unit-distance start
    Vec dir = rng.normal_vec(d);
    dir = scale(dir, 1.0 / norm2(dir));
    Vec w = add(wstar, dir);
    const double R0 = 1.0;

    const double mu_bar = R0 * lam_min;
    const double L_max = R0 * max_x2;
    const double c1 = mu_bar / (2.0 * L_max * L_max * eta);
    const double c0 =
        1.0 - c1 * eta * mu_bar + c1 * c1 * eta * eta * L_max * L_max;
    const double bound_slope = 0.5 * std::log(c0);

    TeachCtx ctx{LearnerKind::Lsr, 0.0, 2};
    Vec log_dist;
    log_dist.push_back(std::log(dist2(w, wstar)));
    for (std::size_t t = 0; t < t_cap; ++t) {
      const std::size_t i = rng.uniform_index(n);
      w = et_gain_teacher(pool.examples[i].x, pool.examples[i].y[0], w, wstar, eta,
                          c1, ctx);
      const double dist = dist2(w, wstar);
      log_dist.push_back(std::log(dist));
      if (dist <= R0 / 2.0) break;
    }
    const std::size_t burn_in = 10;
    if (log_dist.size() <= burn_in + 2) continue;  // counts as a failed run
    Vec ts, ys;
    for (std::size_t t = burn_in; t < log_dist.size(); ++t) {
      ts.push_back(double(t));
      ys.push_back(log_dist[t]);
    }
    const LineFit f = fit_line(ts, ys);
    sum_measured += f.slope;
    sum_bound += bound_slope;
    if (f.slope <= bound_slope) ++out.passed;
  }
  out.mean_measured_slope = sum_measured / double(runs);
  out.mean_bound_slope = sum_bound / double(runs);
  out.pass = double(out.passed) >= 0.95 * double(runs);
  std::ostringstream os;
  os << out.passed << "/" << out.runs << " runs with measured slope <= bound"
     << " (mean measured " << out.mean_measured_slope << ", mean bound "
     << out.mean_bound_slope << ")";
  out.details = os.str();
  return out;
}

// ---------------------------------------------------------------------------
// Theorem 2: sufficient-decrease teacher
// ---------------------------------------------------------------------------

struct ArmijoSuiteResult {
  std::size_t steps = 0, violations = 0, fallbacks = 0;
  std::size_t runs = 0, exponential_runs = 0;
  double min_r2 = 1.0;
  bool pass = false;
  std::string details;
};

/// Replays the accepted condition on every step across >= `total_steps`
/// accepted steps and fits the log-distance decay per run.
inline ArmijoSuiteResult run_armijo_suite(std::size_t total_steps = 100000,
                                          std::uint64_t seed0 = 1, std::size_t n = 50,
                                          std::size_t d = 4, double eta = 1e-2,
                                          double c2 = 0.5) {
  ArmijoSuiteResult out;
  TeachCtx ctx{LearnerKind::Lsr, 0.0, 2};
  const std::size_t per_run = 1000;
  while (out.steps < total_steps) {
    SeededRng rng(seed0 + out.runs);
    ++out.runs;
    const Vec wstar = rng.normal_vec(d);
    Pool pool;
    pool.d = d;
    pool.label_kind = LabelKind::Regression;
    for (std::size_t i = 0; i < n; ++i) {
      Vec x = rng.normal_vec(d);
      pool.examples.push_back({x, {dot(wstar, x)}, i});
    }
    Vec w = add(wstar, rng.normal_vec(d));
    Vec ts, ys;
    for (std::size_t t = 0; t < per_run; ++t) {
      const double dist = dist2(w, wstar);
      if (dist > 1e-10) {
        ts.push_back(double(t));
        ys.push_back(std::log(dist));
      }
      const std::size_t i = rng.uniform_index(n);
      const Vec& x = pool.examples[i].x;
      const double yt = pool.examples[i].y[0];
      const Vec grad = ctx.grad(x, Vec{yt}, w);
      if (norm2(grad) < 1e-250) continue;
      const ArmijoResult res = armijo_teacher(x, yt, w, eta, c2, 0.5, ctx);
      ++out.steps;
      if (res.fallback) {
        ++out.fallbacks;
      } else {
        // replay the sufficient-decrease inequality exactly as accepted
        const double lhs = ctx.loss(x, Vec{yt}, res.w_next);
        const double rhs =
            ctx.loss(x, Vec{yt}, w) - c2 * eta * res.g * dot(grad, grad);
        if (!(lhs <= rhs)) ++out.violations;
      }
      w = res.w_next;
      if (out.steps >= total_steps && ts.size() >= 20) break;
    }
    if (ts.size() >= 20) {
      const LineFit f = fit_line(ts, ys);
      out.min_r2 = std::min(out.min_r2, f.r2);
      if (f.r2 > 0.95 && f.slope < 0.0) ++out.exponential_runs;
    }
  }
  out.pass = out.violations == 0 &&
             double(out.exponential_runs) >= 0.95 * double(out.runs);
  std::ostringstream os;
  os << out.steps << " steps, " << out.violations << " violations, "
     << out.fallbacks << " fallbacks; " << out.exponential_runs << "/" << out.runs
     << " runs with log-distance fit R^2 > 0.95 (min R^2 " << out.min_r2 << ")";
  out.details = os.str();
  return out;
}

// ---------------------------------------------------------------------------
// Theorem 3: one-step super exponential teachability on LSR
// ---------------------------------------------------------------------------

struct SuperEtResult {
  std::size_t starts = 0, within = 0;
  double max_residual = 0.0;
  bool pass = false;
  std::string details;
};

inline SuperEtResult run_super_et_suite(std::size_t starts = 100,
                                        std::uint64_t seed0 = 1, std::size_t n = 100,
                                        std::size_t d = 4, double lambda = 1e-2) {
  SuperEtResult out;
  SeededRng rng(seed0);
  const Vec wgen = rng.normal_vec(d);
  Pool pool;
  pool.d = d;
  pool.label_kind = LabelKind::Regression;
  for (std::size_t i = 0; i < n; ++i) {
    Vec x = rng.normal_vec(d);
    pool.examples.push_back({x, {dot(wgen, x) + 0.05 * rng.normal()}, i});
  }
  LsrObjective obj{pool, lambda};
  const Vec w_ridge = lsr_wstar(pool, lambda, /*bias=*/false);

  // every start is checked at every interpolation point
  for (std::size_t s = 0; s < starts; ++s) {
    const Vec w0 = rng.normal_vec(d, 0.0, 5.0);
    for (double alpha : {0.0, 0.5, 1.0}) {
      ++out.starts;
      const Vec w1 = newton_last_teacher([&](const Vec& v) { return obj.grad(v); },
                                         [&](const Vec& v) { return obj.hess(v); },
                                         w0, w_ridge, alpha);
      const double res = dist2(w1, w_ridge);
      out.max_residual = std::max(out.max_residual, res);
      if (res < 1e-9) ++out.within;
    }
  }
  out.pass = out.within == out.starts;
  std::ostringstream os;
  os << out.within << "/" << out.starts
     << " one-step residuals < 1e-9 (max residual " << out.max_residual << ")";
  out.details = os.str();
  return out;
}

// ---------------------------------------------------------------------------
// Proposition 1: paired LAST-vs-SGD ordering on the linreg defaults
// ---------------------------------------------------------------------------

struct MonotonicityResult {
  CompareReport report;
  bool dominates_in_window = true;  // mean_last(t) <= mean_sgd(t), t in [t0, T]
  std::size_t t0 = 10;
  bool pass = false;
  std::string details;
  std::vector<Vec> dist_last, dist_sgd;
};

inline MonotonicityResult run_monotonicity_suite(std::size_t n_seeds = 50,
                                                 std::size_t T = 1000,
                                                 std::uint64_t seed0 = 1) {
  ExperimentConfig base;
  base.dataset_kind = "linreg";
  base.dataset_n = 800;
  base.dataset_d = 4;
  base.noise_sd = 0.02;
  base.data_seed = seed0;
  base.learner_kind = "lsr";
  base.lambda = 5e-5;
  base.eta0 = 1e-3;
  base.bias = true;
  base.iterations = T;
  base.teacher_kind = "sgd";

  const Pool pool = build_pool(base);
  const Vec wstar = compute_wstar(pool, LearnerKind::Lsr, base.lambda, base.bias);

  MonotonicityResult out;
  ExperimentConfig last_cfg = base;
  last_cfg.teacher_kind = "last";
  for (std::size_t s = 0; s < n_seeds; ++s) {
    const std::uint64_t seed = seed0 + 1000 + s;
    out.dist_sgd.push_back(run_teaching(base, pool, wstar, seed).dist_curve());
    out.dist_last.push_back(run_teaching(last_cfg, pool, wstar, seed).dist_curve());
  }
  out.report = compare(out.dist_last, out.dist_sgd);
  const CurveStats sa = aggregate(out.dist_last), sb = aggregate(out.dist_sgd);
  for (std::size_t t = out.t0 - 1; t < sa.mean.size(); ++t)
    if (sa.mean[t] > sb.mean[t]) out.dominates_in_window = false;
  out.pass = out.dominates_in_window && out.report.p_final < 0.01;
  std::ostringstream os;
  os << "mean distance dominated at every t in [" << out.t0 << "," << T << "]: "
     << (out.dominates_in_window ? "yes" : "no") << "; final sign test p = "
     << out.report.p_final << " (" << out.report.wins << " wins / "
     << out.report.losses << " losses)";
  out.details = os.str();
  return out;
}

// ---------------------------------------------------------------------------
// Teacher cost scaling with pool size (selection scans vs synthesis)
// ---------------------------------------------------------------------------

struct CostScalingResult {
  Vec sizes;                 // pool sizes
  Vec imt_us, last_us;       // block-median per-iteration teacher time
  Vec imt_sizes, last_sizes; // x value per measurement block
  LineFit imt_fit, last_fit;
  bool pass = false;
  std::string details;
};

inline CostScalingResult run_cost_scaling(std::uint64_t seed = 1,
                                          std::size_t iters_per_block = 300,
                                          std::size_t blocks = 8) {
  CostScalingResult out;
  out.sizes = {100, 1000, 10000};
  const std::size_t d = 4;
  TeachCtx ctx{LearnerKind::Lsr, 0.0, 2};

  for (double size_d : out.sizes) {
    const std::size_t n = std::size_t(size_d);
    SeededRng rng(seed + n);
    const Vec wstar = rng.normal_vec(d);
    Pool pool;
    pool.d = d;
    pool.label_kind = LabelKind::Regression;
    for (std::size_t i = 0; i < n; ++i) {
      Vec x = rng.normal_vec(d);
      pool.examples.push_back({x, {dot(wstar, x) + 0.02 * rng.normal()}, i});
    }
    Vec w = rng.normal_vec(d);
    const double eta = 1e-3;

    for (std::size_t b = 0; b < blocks; ++b) {
      // IMT: full-pool selection per iteration
      Vec imt_times, last_times;
      for (std::size_t it = 0; it < iters_per_block; ++it) {
        detail::MicroTimer clock;
        const Selection sel = imt_select(pool, w, wstar, eta, ctx);
        imt_times.push_back(clock.us());
        (void)sel;
      }
      // LAST: closed-form synthesis on a uniform draw
      for (std::size_t it = 0; it < iters_per_block; ++it) {
        const std::size_t i = rng.uniform_index(n);
        detail::MicroTimer clock;
        const double y = synth_label_lsr(pool.examples[i].x, w, wstar, eta);
        last_times.push_back(clock.us());
        (void)y;
      }
      auto median = [](Vec v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
      };
      out.imt_us.push_back(median(imt_times));
      out.imt_sizes.push_back(size_d);
      out.last_us.push_back(median(last_times));
      out.last_sizes.push_back(size_d);
    }
  }
  out.imt_fit = fit_line(out.imt_sizes, out.imt_us);
  out.last_fit = fit_line(out.last_sizes, out.last_us);
  const bool imt_ok = out.imt_fit.slope > 0.0 && out.imt_fit.r2 > 0.9;
  // "within noise of 0": either inside the fit's own confidence band, or the
  // predicted time change across the whole size range is a small fraction of
  // a single iteration's cost (sub-jitter)
  double last_mean = 0.0;
  for (double v : out.last_us) last_mean += v / double(out.last_us.size());
  const double range = out.sizes.back() - out.sizes.front();
  const bool last_ok =
      std::abs(out.last_fit.slope) <= 3.0 * out.last_fit.slope_se + 1e-12 ||
      std::abs(out.last_fit.slope) * range <= 0.25 * last_mean;
  out.pass = imt_ok && last_ok;
  std::ostringstream os;
  os << "imt slope " << out.imt_fit.slope << " us/example (R^2 " << out.imt_fit.r2
     << "); last slope " << out.last_fit.slope << " us/example, predicted change "
     << std::abs(out.last_fit.slope) * range << " us over the full range vs "
     << last_mean << " us mean per-iteration cost";
  out.details = os.str();
  return out;
}

// ---------------------------------------------------------------------------
// Named theorem-suite front door
// ---------------------------------------------------------------------------

struct TheoremReport {
  std::string kind;
  bool pass = false;
  std::string details;
};

inline TheoremReport theorem_suite(const std::string& kind, std::uint64_t seed = 1) {
  if (kind == "et") {
    const EtSuiteResult r = run_et_suite(100, seed);
    return {kind, r.pass, r.details};
  }
  if (kind == "armijo") {
    const ArmijoSuiteResult r = run_armijo_suite(100000, seed);
    return {kind, r.pass, r.details};
  }
  if (kind == "super_et") {
    const SuperEtResult r = run_super_et_suite(100, seed);
    return {kind, r.pass, r.details};
  }
  if (kind == "monotonicity") {
    const MonotonicityResult r = run_monotonicity_suite(50, 1000, seed);
    return {kind, r.pass, r.details};
  }
  throw Error("theorem_suite: unknown kind '" + kind +
              "' (expected et | armijo | super_et | monotonicity)");
}

}  // namespace last
