#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "rmst/common.hpp"
#include "rmst/inference.hpp"
#include "rmst/pipeline.hpp"
#include "rmst/rng.hpp"
#include "rmst/survival.hpp"

namespace rmst {

// First time the restricted-mean difference returns to zero after having
// departed from it: the point at which accumulated survival time no longer
// favours either arm. +infinity when the curves never rebalance.
struct TuteRoot {
  double value = kInf;
  bool departed = false;
  int sign = 0;  // sign of the difference at departure
  double departure_tol = 0.0;
  std::vector<std::string> warnings;
};

// Root scan for a continuous difference curve on (t_lo, t_hi]: find the
// first departure beyond the tolerance, then the first sign change after it,
// refined by bisection. A non-positive tolerance requests the default of
// 1e-3 times the largest absolute value seen on the scan.
inline TuteRoot tute_point(const std::function<double(double)>& f, double t_lo, double t_hi,
                           double departure_tol = 0.0, int scan_points = 2048) {
  if (!(t_lo > 0.0) || !(t_hi > t_lo)) throw InvalidInput("search interval must satisfy 0 < t_lo < t_hi");
  if (scan_points < 8) throw InvalidInput("scan needs at least 8 points");
  const std::vector<double> ts = linspace(t_lo, t_hi, scan_points);
  std::vector<double> ys(ts.size());
  double max_abs = 0.0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    ys[k] = f(ts[k]);
    max_abs = std::max(max_abs, std::abs(ys[k]));
  }
  TuteRoot out;
  out.departure_tol = departure_tol > 0.0 ? departure_tol : 1e-3 * max_abs;
  std::size_t dep = ts.size();
  for (std::size_t k = 0; k < ts.size(); ++k)
    if (std::abs(ys[k]) > out.departure_tol) {
      dep = k;
      break;
    }
  if (dep == ts.size()) {
    out.warnings.push_back("curves indistinguishable within tolerance; no departure found");
    return out;
  }
  out.departed = true;
  out.sign = ys[dep] > 0.0 ? 1 : -1;
  const double s = out.sign;
  for (std::size_t k = dep + 1; k < ts.size(); ++k) {
    if (s * ys[k] <= 0.0) {
      double a = ts[k - 1], b = ts[k];
      const double tol = 1e-6 * t_hi;
      while (b - a > tol) {
        const double mid = 0.5 * (a + b);
        if (s * f(mid) > 0.0)
          a = mid;
        else
          b = mid;
      }
      out.value = 0.5 * (a + b);
      return out;
    }
  }
  return out;  // departed, never rebalanced
}

namespace detail {

// First departure and first subsequent return to zero on a sampled curve,
// with linear interpolation for the root. forced_sign 0 lets the curve pick
// its own departure side.
struct DiscreteRoot {
  bool departed = false;
  std::size_t dep_idx = 0;
  int sign = 0;
  double root = kInf;  // +inf when the curve never returns to zero
};

inline DiscreteRoot first_balance(const std::vector<double>& t, const std::vector<double>& y,
                                  double tol, int forced_sign = 0) {
  DiscreteRoot out;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const bool dep = forced_sign == 0 ? std::abs(y[k]) > tol
                                      : forced_sign * y[k] > tol;
    if (dep) {
      out.departed = true;
      out.dep_idx = k;
      out.sign = forced_sign != 0 ? forced_sign : (y[k] > 0.0 ? 1 : -1);
      break;
    }
  }
  if (!out.departed) return out;
  const double s = out.sign;
  for (std::size_t k = out.dep_idx + 1; k < y.size(); ++k) {
    if (s * y[k] <= 0.0) {
      const double y0 = y[k - 1], y1 = y[k];
      out.root = y0 == y1 ? t[k] : t[k - 1] + (t[k] - t[k - 1]) * y0 / (y0 - y1);
      return out;
    }
  }
  return out;
}

}  // namespace detail

struct TuteEstimate {
  double point = kInf;
  double ci_lo = 0.0;
  double ci_hi = kInf;
  bool departed = false;
  int sign = 0;
  double departure_tol = 0.0;
  std::string method;
  double frac_infinite = std::numeric_limits<double>::quiet_NaN();  // bootstrap methods only
  std::vector<std::string> warnings;
};

// Equipoise time with a confidence interval by inverting the pointwise CI
// curves. The CI edge nearer zero rebalances first and gives the lower
// limit, the farther edge gives the upper limit; an edge that never returns
// to zero leaves that side of the interval open.
inline TuteEstimate tute_ci_band(const RmstDiffCurve& curve) {
  if (curve.ci_lo.empty()) throw InvalidInput("interval inversion needs pointwise limits");
  TuteEstimate out;
  out.method = "model_band_inversion";
  double max_abs = 0.0;
  for (double v : curve.estimate) max_abs = std::max(max_abs, std::abs(v));
  out.departure_tol = 1e-3 * max_abs;

  const detail::DiscreteRoot est = detail::first_balance(curve.grid, curve.estimate, out.departure_tol);
  if (!est.departed) {
    out.warnings.push_back("curves indistinguishable within tolerance; no departure found");
    out.ci_lo = 0.0;
    out.ci_hi = kInf;
    return out;
  }
  out.departed = true;
  out.sign = est.sign;
  out.point = est.root;
  if (!std::isfinite(est.root))
    out.warnings.push_back("no finite equipoise time within the evaluation window");

  const std::vector<double>& inner = est.sign < 0 ? curve.ci_hi : curve.ci_lo;
  const std::vector<double>& outer = est.sign < 0 ? curve.ci_lo : curve.ci_hi;

  const detail::DiscreteRoot in = detail::first_balance(curve.grid, inner, out.departure_tol, est.sign);
  if (!in.departed || curve.grid[in.dep_idx] > out.point) {
    out.ci_lo = 0.0;  // zero stays inside the interval up to the point estimate
  } else if (std::isfinite(in.root)) {
    out.ci_lo = in.root;
  } else {
    out.ci_lo = curve.grid.back();  // interval excludes zero through the window end
    out.warnings.push_back("lower limit open: pointwise interval excludes zero through the window");
  }

  const detail::DiscreteRoot ot = detail::first_balance(curve.grid, outer, out.departure_tol, est.sign);
  out.ci_hi = ot.departed ? ot.root : kInf;

  out.ci_lo = std::min(out.ci_lo, out.point);
  out.ci_hi = std::max(out.ci_hi, out.point);
  return out;
}

struct BootstrapOptions {
  int n_boot = 1000;
  std::uint64_t seed = 0;
  enum class Estimator { plugin, model } estimator = Estimator::plugin;
  AnalysisOptions analysis;   // model estimator settings (band is forced off)
  int scan_points = 2048;     // plugin estimator root scan
  bool resample = true;       // false reuses the original sample every round (for tests)
};

namespace detail {

inline SurvivalSample resample_by_arm(const SurvivalSample& sample, Rng& rng) {
  SurvivalSample out;
  out.subjects.reserve(sample.size());
  for (int arm = 0; arm < 2; ++arm) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < sample.size(); ++i)
      if (sample.subjects[i].arm == arm) idx.push_back(static_cast<int>(i));
    for (std::size_t k = 0; k < idx.size(); ++k)
      out.subjects.push_back(sample.subjects[idx[rng.uniform_int(idx.size())]]);
  }
  return out;
}

inline TuteRoot plugin_tute(const SurvivalSample& sample, double t_hi, int scan_points) {
  const StepSurvivalCurve km0 = km_fit(sample, 0);
  const StepSurvivalCurve km1 = km_fit(sample, 1);
  auto diff = [&](double t) { return rmst(km1, t).value - rmst(km0, t).value; };
  return tute_point(diff, 1e-6 * t_hi, t_hi, 0.0, scan_points);
}

inline TuteRoot model_tute(const SurvivalSample& sample, const AnalysisOptions& opt) {
  AnalysisOptions o = opt;
  o.with_band = false;
  const AnalysisResult res = run_analysis(sample, o);
  double max_abs = 0.0;
  for (double v : res.curve.estimate) max_abs = std::max(max_abs, std::abs(v));
  const DiscreteRoot r = first_balance(res.curve.grid, res.curve.estimate, 1e-3 * max_abs);
  TuteRoot out;
  out.departed = r.departed;
  out.sign = r.sign;
  out.value = r.departed ? r.root : kInf;
  out.departure_tol = 1e-3 * max_abs;
  return out;
}

}  // namespace detail

// Nonparametric bootstrap CI for the equipoise time, resampling subjects
// within each arm. Replicates whose difference curve never rebalances count
// as +infinity and sit in the upper tail of the percentile interval; more
// than 5% of them leaves the upper limit open. More than 10% outright
// failures aborts.
inline TuteEstimate tute_ci_bootstrap(const SurvivalSample& sample, const BootstrapOptions& opt) {
  if (opt.n_boot < 200) throw InvalidInput("bootstrap needs at least 200 replicates");
  sample.validate();
  const double t_hi = sample.max_event_time();

  TuteEstimate out;
  out.method = opt.estimator == BootstrapOptions::Estimator::plugin ? "plugin_bootstrap"
                                                                    : "model_bootstrap";

  AnalysisOptions model_opt = opt.analysis;
  if (opt.estimator == BootstrapOptions::Estimator::model && model_opt.fixed_df == 0) {
    // Resolve the spline df once on the original sample; replicates reuse it.
    AnalysisOptions probe = model_opt;
    probe.with_band = false;
    const AnalysisResult orig = run_analysis(sample, probe);
    model_opt.fixed_df = orig.basis.kind == BasisKind::natural_cubic ? orig.basis.df : 0;
    if (model_opt.fixed_df == 0) model_opt.basis = orig.basis.kind;
  }

  const TuteRoot point = opt.estimator == BootstrapOptions::Estimator::plugin
                             ? detail::plugin_tute(sample, t_hi, opt.scan_points)
                             : detail::model_tute(sample, model_opt);
  out.point = point.value;
  out.departed = point.departed;
  out.sign = point.sign;
  out.departure_tol = point.departure_tol;
  if (!point.departed)
    out.warnings.push_back("curves indistinguishable within tolerance; no departure found");
  else if (!std::isfinite(point.value))
    out.warnings.push_back("no finite equipoise time in the observed window");

  std::vector<double> roots;
  roots.reserve(static_cast<std::size_t>(opt.n_boot));
  int failures = 0;
  std::string first_failure;
  for (int b = 0; b < opt.n_boot; ++b) {
    Rng rng = make_stream(opt.seed, 0x626f6f74u, static_cast<std::uint64_t>(b));
    try {
      const SurvivalSample rs = opt.resample ? detail::resample_by_arm(sample, rng) : sample;
      rs.validate();
      const TuteRoot r = opt.estimator == BootstrapOptions::Estimator::plugin
                             ? detail::plugin_tute(rs, t_hi, opt.scan_points)
                             : detail::model_tute(rs, model_opt);
      roots.push_back(r.departed ? r.value : kInf);
    } catch (const Error& e) {
      ++failures;
      if (first_failure.empty()) first_failure = e.what();
    }
  }
  if (failures > opt.n_boot / 10)
    throw NumericError("bootstrap failure rate above 10% (" + std::to_string(failures) + " of " +
                       std::to_string(opt.n_boot) + "; first: " + first_failure + ")");
  if (failures > 0)
    out.warnings.push_back(std::to_string(failures) + " bootstrap replicates failed and were dropped");

  std::sort(roots.begin(), roots.end());
  long n_inf = 0;
  for (double r : roots)
    if (!std::isfinite(r)) ++n_inf;
  out.frac_infinite = static_cast<double>(n_inf) / static_cast<double>(roots.size());

  out.ci_lo = quantile_type7(roots, 0.025);
  out.ci_hi = quantile_type7(roots, 0.975);
  if (out.frac_infinite > 0.05) {
    out.ci_hi = kInf;
    std::ostringstream msg;
    msg << "no evidence for a finite equipoise time (" << 100.0 * out.frac_infinite
        << "% of bootstrap replicates never rebalance)";
    out.warnings.push_back(msg.str());
  }
  return out;
}

// Where the two Kaplan-Meier curves cross, for the clinical-relevance check:
// a difference that only rebalances after most patients have died is of
// little practical interest.
struct SurvivalCrossing {
  bool found = false;
  double time = kInf;
  double surv0 = 1.0, surv1 = 1.0;  // survival just after the crossing
};

inline SurvivalCrossing km_crossing(const SurvivalSample& sample, double tol = 1e-3) {
  const StepSurvivalCurve km0 = km_fit(sample, 0);
  const StepSurvivalCurve km1 = km_fit(sample, 1);
  std::vector<double> times;
  times.reserve(km0.jump_times.size() + km1.jump_times.size());
  times.insert(times.end(), km0.jump_times.begin(), km0.jump_times.end());
  times.insert(times.end(), km1.jump_times.begin(), km1.jump_times.end());
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  SurvivalCrossing out;
  int sign = 0;
  for (double t : times) {
    const double d = km1.evaluate(t) - km0.evaluate(t);
    if (sign == 0) {
      if (std::abs(d) > tol) sign = d > 0.0 ? 1 : -1;
      continue;
    }
    if (sign * d < 0.0) {
      out.found = true;
      out.time = t;
      out.surv0 = km0.evaluate(t);
      out.surv1 = km1.evaluate(t);
      return out;
    }
  }
  return out;
}

}  // namespace rmst
