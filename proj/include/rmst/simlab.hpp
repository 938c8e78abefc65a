#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "rmst/common.hpp"
#include "rmst/integrate.hpp"
#include "rmst/pipeline.hpp"
#include "rmst/rng.hpp"
#include "rmst/survival.hpp"
#include "rmst/tute.hpp"

namespace rmst {

// Non-regularized upper incomplete gamma integral_x^inf t^(a-1) e^(-t) dt,
// by lower-tail series for x < a+1 and a continued fraction otherwise.
inline double upper_incomplete_gamma(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw InvalidInput("upper incomplete gamma needs a > 0, x >= 0");
  if (x == 0.0) return std::tgamma(a);
  const double log_front = a * std::log(x) - x;
  if (x < a + 1.0) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 1000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < 1e-16 * std::abs(sum)) {
        const double lower = std::exp(log_front) * sum;
        return std::exp(std::lgamma(a)) - lower;
      }
    }
    throw NumericError("incomplete gamma series did not converge");
  }
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-15) return std::exp(log_front) * h;
  }
  throw NumericError("incomplete gamma continued fraction did not converge");
}

// Event-time distribution with closed-form cumulative hazard, inverse, and
// restricted mean. Weibull is parameterized by the cumulative hazard
// lambda * t^shape; the shape/scale form (t/scale)^shape and the exponential
// are both normalized into the two stored kinds.
struct DistributionSpec {
  enum class Kind { weibull, piecewise_exponential };
  Kind kind = Kind::piecewise_exponential;
  double rate = 0.0;                   // weibull: lambda
  double shape = 1.0;                  // weibull: exponent on t
  std::vector<double> change_points;   // piecewise: ascending interior breaks
  std::vector<double> rates;           // piecewise: one per segment

  static DistributionSpec weibull_rate_shape(double lambda, double delta) {
    if (!(lambda > 0.0) || !(delta > 0.0)) throw InvalidInput("weibull needs positive rate and shape");
    DistributionSpec d;
    d.kind = Kind::weibull;
    d.rate = lambda;
    d.shape = delta;
    return d;
  }
  static DistributionSpec weibull_shape_scale(double shape, double scale) {
    return weibull_rate_shape(std::pow(scale, -shape), shape);
  }
  static DistributionSpec exponential(double lambda) { return piecewise({}, {lambda}); }
  static DistributionSpec piecewise(std::vector<double> cps, std::vector<double> rs) {
    if (rs.size() != cps.size() + 1) throw InvalidInput("piecewise needs one rate per segment");
    for (std::size_t k = 1; k < cps.size(); ++k)
      if (!(cps[k] > cps[k - 1])) throw InvalidInput("piecewise change points must increase");
    for (double r : rs)
      if (r < 0.0) throw InvalidInput("piecewise rates must be nonnegative");
    DistributionSpec d;
    d.kind = Kind::piecewise_exponential;
    d.change_points = std::move(cps);
    d.rates = std::move(rs);
    return d;
  }

  double cum_hazard(double t) const {
    if (t <= 0.0) return 0.0;
    if (kind == Kind::weibull) return rate * std::pow(t, shape);
    double H = 0.0;
    double prev = 0.0;
    for (std::size_t k = 0; k < change_points.size(); ++k) {
      if (t <= change_points[k]) return H + rates[k] * (t - prev);
      H += rates[k] * (change_points[k] - prev);
      prev = change_points[k];
    }
    return H + rates.back() * (t - prev);
  }

  double survival(double t) const { return std::exp(-cum_hazard(t)); }

  double time_at_cum_hazard(double H) const {
    if (H <= 0.0) return 0.0;
    if (kind == Kind::weibull) return std::pow(H / rate, 1.0 / shape);
    double acc = 0.0;
    double prev = 0.0;
    for (std::size_t k = 0; k < change_points.size(); ++k) {
      const double cap = rates[k] * (change_points[k] - prev);
      if (H <= acc + cap) return prev + (H - acc) / rates[k];
      acc += cap;
      prev = change_points[k];
    }
    if (rates.back() <= 0.0) return kInf;
    return prev + (H - acc) / rates.back();
  }

  double sample(Rng& rng) const { return time_at_cum_hazard(-std::log(rng.uniform())); }
};

// Exact restricted mean of the distribution at tau.
inline double true_rmst(const DistributionSpec& d, double tau) {
  if (!(tau > 0.0)) throw InvalidInput("restriction time must be positive");
  if (d.kind == DistributionSpec::Kind::weibull) {
    const double a = 1.0 / d.shape;
    const double g0 = upper_incomplete_gamma(a, 0.0);
    const double g1 = upper_incomplete_gamma(a, d.rate * std::pow(tau, d.shape));
    return a * std::pow(d.rate, -a) * (g0 - g1);
  }
  double area = 0.0;
  double H = 0.0;
  double prev = 0.0;
  for (std::size_t k = 0; k <= d.change_points.size(); ++k) {
    const double seg_end = k < d.change_points.size() ? std::min(d.change_points[k], tau) : tau;
    if (seg_end > prev) {
      const double r = d.rates[k];
      const double width = seg_end - prev;
      const double s0 = std::exp(-H);
      area += r > 0.0 ? s0 * (1.0 - std::exp(-r * width)) / r : s0 * width;
      H += r * width;
      prev = seg_end;
    }
    if (prev >= tau) break;
  }
  return area;
}

// A two-arm data-generating setup: arm 1 is the treated arm. Standard
// scenarios fix the per-arm size and censor 20% uniformly; the Weibull bias
// cells allocate by a fair coin and censor 25% exponentially.
struct ScenarioSpec {
  std::string name;
  DistributionSpec arm0, arm1;
  enum class CensorKind { none, uniform, exponential } censor_kind = CensorKind::none;
  double censor_frac = 0.0;
  bool bernoulli_allocation = false;
  double t_max = 0.0;  // horizon for truth root searches

  static ScenarioSpec standard(int id) {
    ScenarioSpec s;
    s.censor_kind = CensorKind::uniform;
    s.censor_frac = 0.20;
    switch (id) {
      case 1:
        s.arm1 = DistributionSpec::weibull_rate_shape(0.18, 1.5);
        s.arm0 = DistributionSpec::weibull_rate_shape(0.20, 0.75);
        s.t_max = 8.0;
        break;
      case 2:
        s.arm1 = DistributionSpec::weibull_shape_scale(2.5, 30.0);
        s.arm0 = DistributionSpec::piecewise({1.0}, {0.125, 0.01});
        s.t_max = 60.0;
        break;
      case 3:
        s.arm1 = DistributionSpec::exponential(1.0 / 12.0);
        s.arm0 = DistributionSpec::piecewise({2.0}, {0.25, 1.0 / 35.0});
        s.t_max = 40.0;
        break;
      case 4:
        s.arm1 = DistributionSpec::weibull_shape_scale(1.5, 5.0);
        s.arm0 = DistributionSpec::piecewise({1.5}, {0.5, 0.1});
        s.t_max = 30.0;
        break;
      case 5:
        s.arm1 = DistributionSpec::weibull_shape_scale(1.6, 110.0);
        s.arm0 = DistributionSpec::piecewise({12.0, 30.0}, {0.0025, 0.01, 0.003});
        s.t_max = 160.0;
        break;
      default:
        throw InvalidInput("scenario id must be 1..5");
    }
    s.name = "s" + std::to_string(id);
    return s;
  }

  // Proportional effect on the Weibull rate: lambda = exp(log_rate_effect * Z).
  static ScenarioSpec weibull_cell(double delta, double log_rate_effect) {
    ScenarioSpec s;
    s.name = "cell";
    s.arm0 = DistributionSpec::weibull_rate_shape(1.0, delta);
    s.arm1 = DistributionSpec::weibull_rate_shape(std::exp(log_rate_effect), delta);
    s.censor_kind = CensorKind::exponential;
    s.censor_frac = 0.25;
    s.bernoulli_allocation = true;
    s.t_max = 0.0;
    return s;
  }
};

inline double true_rmst_diff(const ScenarioSpec& s, double t) {
  return true_rmst(s.arm1, t) - true_rmst(s.arm0, t);
}

// First rebalancing time of the true difference curve.
inline TuteRoot true_tute(const ScenarioSpec& s) {
  if (!(s.t_max > 0.0)) throw InvalidInput("scenario has no truth horizon");
  return tute_point([&](double t) { return true_rmst_diff(s, t); }, 1e-6 * s.t_max, s.t_max);
}

// First crossing of the true survival curves.
inline TuteRoot true_survival_crossing(const ScenarioSpec& s) {
  if (!(s.t_max > 0.0)) throw InvalidInput("scenario has no truth horizon");
  return tute_point([&](double t) { return s.arm1.survival(t) - s.arm0.survival(t); },
                    1e-6 * s.t_max, s.t_max);
}

namespace detail {

inline double mean_rmst(const ScenarioSpec& s, double tau) {
  return 0.5 * (true_rmst(s.arm0, tau) + true_rmst(s.arm1, tau));
}

inline double horizon(const DistributionSpec& d) { return d.time_at_cum_hazard(46.0); }

}  // namespace detail

// Root-finds the censoring parameter so the expected censored fraction hits
// the scenario target. Uniform censoring (the follow-up scenarios) targets
// the allocation-averaged study fraction. Exponential censoring (the Weibull
// bias design) targets the control arm: the design's restriction times are
// percentiles of the control distribution, so the censoring rate depends
// only on the shape, not on the treatment effect.
inline double calibrate_censoring(const ScenarioSpec& s) {
  if (s.censor_kind == ScenarioSpec::CensorKind::none || s.censor_frac <= 0.0) return 0.0;
  const double target = s.censor_frac;
  if (!(target > 0.0 && target < 1.0)) throw InvalidInput("censored fraction must be in (0, 1)");

  if (s.censor_kind == ScenarioSpec::CensorKind::uniform) {
    // P(censored) = E[min(T, c)] / c, decreasing in c.
    auto frac = [&](double c) { return detail::mean_rmst(s, c) / c; };
    double lo = 1e-9, hi = 1.0;
    int guard = 0;
    while (frac(hi) > target) {
      hi *= 2.0;
      if (++guard > 200) throw NumericError("censoring calibration failed to bracket");
    }
    for (int it = 0; it < 200 && (hi - lo) > 1e-12 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (frac(mid) > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  // Exponential: P(censored) = integral of mu e^(-mu t) S0(t) dt,
  // increasing in mu.
  const double t_end = detail::horizon(s.arm0);
  const std::vector<double> breaks = s.arm0.change_points;
  auto frac = [&](double mu) {
    auto f = [&](double t) { return mu * std::exp(-mu * t) * s.arm0.survival(t); };
    return integrate_piecewise(f, 0.0, t_end, breaks, 1e-11);
  };
  double lo = 1e-9, hi = 1.0;
  int guard = 0;
  while (frac(lo) > target) {
    lo *= 0.5;
    if (++guard > 200) throw NumericError("censoring calibration failed to bracket");
  }
  guard = 0;
  while (frac(hi) < target) {
    hi *= 2.0;
    if (++guard > 200) throw NumericError("censoring calibration failed to bracket");
  }
  for (int it = 0; it < 200 && (hi - lo) > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (frac(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// One simulated trial. n is the per-arm size under fixed allocation and the
// total size under Bernoulli allocation. Each subject has its own keyed
// stream, so results are independent of traversal and thread layout; the
// draw order inside a stream is allocation coin (when random), event time,
// censoring time. Pass the calibrated censoring parameter (uniform upper
// bound or exponential rate); zero means no censoring.
inline SurvivalSample simulate(const ScenarioSpec& s, int n, std::uint64_t seed,
                               std::uint64_t replicate, double censor_param) {
  if (n < 2) throw InvalidInput("simulation needs at least 2 subjects");
  const int total = s.bernoulli_allocation ? n : 2 * n;
  SurvivalSample out;
  out.subjects.resize(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) {
    Rng rng = make_stream(seed, replicate, static_cast<std::uint64_t>(i) + 1);
    int arm;
    if (s.bernoulli_allocation)
      arm = rng.uniform() < 0.5 ? 0 : 1;
    else
      arm = i < n ? 0 : 1;
    const DistributionSpec& dist = arm == 1 ? s.arm1 : s.arm0;
    const double t = dist.sample(rng);
    double c = kInf;
    if (censor_param > 0.0) {
      if (s.censor_kind == ScenarioSpec::CensorKind::uniform)
        c = censor_param * rng.uniform();
      else if (s.censor_kind == ScenarioSpec::CensorKind::exponential)
        c = -std::log(rng.uniform()) / censor_param;
    }
    Subject& sub = out.subjects[static_cast<std::size_t>(i)];
    sub.time = std::min(t, c);
    sub.event = t <= c;
    sub.arm = arm;
  }
  return out;
}

struct StudyConfig {
  enum class Mode { scenario, cell } mode = Mode::scenario;
  int scenario_id = 1;
  double delta = 1.0;            // cell: Weibull shape
  double log_rate_effect = 0.0;  // cell: coefficient on Z in the log rate
  double percentile = 0.75;      // cell: baseline quantile defining tau
  int n = 200;                   // per arm (scenario) or total (cell)
  int replicates = 500;
  std::uint64_t seed = 1;
  int grid_m = 16;
  int df_lo = 4;
  int df_hi = 12;
  double alpha = 0.05;
  long band_draws = 100000;
  int band_points = 30;
  unsigned threads = 0;
};

struct StudyReport {
  StudyConfig config;
  int used = 0;
  int failures = 0;
  std::vector<std::string> failure_messages;

  // scenario mode
  double true_tute_value = std::numeric_limits<double>::quiet_NaN();
  double model_mae = std::numeric_limits<double>::quiet_NaN();
  double band_coverage = std::numeric_limits<double>::quiet_NaN();
  double band_length = std::numeric_limits<double>::quiet_NaN();
  double mean_u95 = std::numeric_limits<double>::quiet_NaN();
  double plugin_mae = std::numeric_limits<double>::quiet_NaN();
  double tute_bias = std::numeric_limits<double>::quiet_NaN();
  double tute_rmse = std::numeric_limits<double>::quiet_NaN();
  double tute_coverage = std::numeric_limits<double>::quiet_NaN();
  double tute_frac_infinite = std::numeric_limits<double>::quiet_NaN();
  double tute_frac_right_open = std::numeric_limits<double>::quiet_NaN();
  int tute_finite = 0;
  double plugin_tute_rmse = std::numeric_limits<double>::quiet_NaN();

  // cell mode
  double tau = std::numeric_limits<double>::quiet_NaN();
  double true_baseline = std::numeric_limits<double>::quiet_NaN();
  double true_diff = std::numeric_limits<double>::quiet_NaN();
  double scalar_baseline_bias = std::numeric_limits<double>::quiet_NaN();
  double scalar_diff_bias = std::numeric_limits<double>::quiet_NaN();
  double vector_baseline_bias = std::numeric_limits<double>::quiet_NaN();
  double vector_diff_bias = std::numeric_limits<double>::quiet_NaN();
  int excluded_last_event = 0;
  int vector_extrapolated = 0;

  std::string csv() const;
};

namespace detail {

struct ScenarioRep {
  bool ok = false;
  std::string err;
  double mae = 0.0, length = 0.0, u95 = 0.0, plugin_mae = 0.0;
  bool cover = false;
  double tute_point = kInf;
  bool tute_cover = false, right_open = false;
  double plugin_tute = kInf;
};

struct CellRep {
  bool ok = false;
  bool excluded = false;
  bool extrapolated = false;
  std::string err;
  double s_b0 = 0.0, s_b1 = 0.0, v_b0 = 0.0, v_b1 = 0.0;
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t r) {
  return make_stream(seed, tag, r).next_u64();
}

}  // namespace detail

// Monte Carlo study. Scenario mode picks grid_m restriction times at
// quantiles of the event times observed within the scenario follow-up,
// evenly spaced in probability up to the 99th percentile but skipping
// probability zero (restricted means at the very first event are degenerate,
// with standard errors too small for a meaningful band check), and measures
// the difference-curve estimator there: mean absolute error against the true
// curve, simultaneous-band coverage and mean width, and equipoise-time
// accuracy with band-inverted CI coverage.
// Cell mode measures mean bias of the regression coefficients at a single
// restriction time, both for the single-time model and for the spline model
// evaluated at that time; replicates whose largest event time falls short of
// tau are excluded and counted, spline evaluations beyond the grid are kept
// and counted.
inline StudyReport replicate_study(const StudyConfig& cfg) {
  if (cfg.replicates < 100) throw InvalidInput("study needs at least 100 replicates");
  StudyReport rep;
  rep.config = cfg;

  if (cfg.mode == StudyConfig::Mode::scenario) {
    const ScenarioSpec scn = ScenarioSpec::standard(cfg.scenario_id);
    const double censor_param = calibrate_censoring(scn);
    const TuteRoot truth_tute = true_tute(scn);
    rep.true_tute_value = truth_tute.value;

    std::vector<detail::ScenarioRep> outs(static_cast<std::size_t>(cfg.replicates));
    parallel_for(static_cast<std::size_t>(cfg.replicates), cfg.threads, [&](std::size_t r) {
      detail::ScenarioRep& o = outs[r];
      try {
        const SurvivalSample sample = simulate(scn, cfg.n, cfg.seed, r, censor_param);
        std::vector<double> events;
        for (const Subject& sub : sample.subjects)
          if (sub.event && sub.time <= scn.t_max) events.push_back(sub.time);
        if (events.empty()) throw InvalidInput("no events within the scenario follow-up");
        std::sort(events.begin(), events.end());
        AnalysisOptions opt;
        opt.restriction_times.reserve(static_cast<std::size_t>(cfg.grid_m));
        for (int k = 1; k <= cfg.grid_m; ++k)
          opt.restriction_times.push_back(
              quantile_type7(events, 0.99 * static_cast<double>(k) / static_cast<double>(cfg.grid_m)));
        opt.df_lo = cfg.df_lo;
        opt.df_hi = cfg.df_hi;
        opt.alpha = cfg.alpha;
        opt.band_draws = cfg.band_draws;
        opt.band_points = cfg.band_points;
        opt.seed = detail::derive_seed(cfg.seed, 0xa5eedu, r);
        const AnalysisResult res = run_analysis(sample, opt);

        const std::size_t G = res.curve.grid.size();
        std::vector<double> truth(G);
        for (std::size_t g = 0; g < G; ++g) truth[g] = true_rmst_diff(scn, res.curve.grid[g]);

        double abs_err = 0.0, width = 0.0;
        for (std::size_t g = 0; g < G; ++g) {
          abs_err += std::abs(res.curve.estimate[g] - truth[g]);
          width += res.curve.band_hi[g] - res.curve.band_lo[g];
        }
        o.mae = abs_err / static_cast<double>(G);
        o.length = width / static_cast<double>(G);
        o.u95 = res.curve.critical_value;
        o.cover = band_covers(res.curve, truth);

        const TuteEstimate te = tute_ci_band(res.curve);
        o.tute_point = te.point;
        o.tute_cover = te.ci_lo <= truth_tute.value && truth_tute.value <= te.ci_hi;
        o.right_open = !std::isfinite(te.ci_hi);

        const StepSurvivalCurve km0 = km_fit(sample, 0);
        const StepSurvivalCurve km1 = km_fit(sample, 1);
        double plugin_err = 0.0;
        for (std::size_t g = 0; g < G; ++g) {
          const double pl = rmst(km1, res.curve.grid[g]).value - rmst(km0, res.curve.grid[g]).value;
          plugin_err += std::abs(pl - truth[g]);
        }
        o.plugin_mae = plugin_err / static_cast<double>(G);
        o.plugin_tute = detail::plugin_tute(sample, sample.max_event_time(), 2048).value;
        o.ok = true;
      } catch (const Error& e) {
        o.err = e.what();
      }
    });

    double mae = 0.0, len = 0.0, u95 = 0.0, pmae = 0.0;
    int cover = 0, tcover = 0, ropen = 0, tfin = 0, pfin = 0;
    double tbias = 0.0, tsq = 0.0, psq = 0.0;
    for (const detail::ScenarioRep& o : outs) {
      if (!o.ok) {
        ++rep.failures;
        if (rep.failure_messages.size() < 5) rep.failure_messages.push_back(o.err);
        continue;
      }
      ++rep.used;
      mae += o.mae;
      len += o.length;
      u95 += o.u95;
      pmae += o.plugin_mae;
      cover += o.cover;
      tcover += o.tute_cover;
      ropen += o.right_open;
      if (std::isfinite(o.tute_point) && std::isfinite(truth_tute.value)) {
        ++tfin;
        tbias += o.tute_point - truth_tute.value;
        tsq += (o.tute_point - truth_tute.value) * (o.tute_point - truth_tute.value);
      }
      if (std::isfinite(o.plugin_tute) && std::isfinite(truth_tute.value)) {
        ++pfin;
        psq += (o.plugin_tute - truth_tute.value) * (o.plugin_tute - truth_tute.value);
      }
    }
    if (rep.used > 0) {
      rep.model_mae = mae / rep.used;
      rep.band_length = len / rep.used;
      rep.mean_u95 = u95 / rep.used;
      rep.plugin_mae = pmae / rep.used;
      rep.band_coverage = static_cast<double>(cover) / rep.used;
      rep.tute_coverage = static_cast<double>(tcover) / rep.used;
      rep.tute_frac_right_open = static_cast<double>(ropen) / rep.used;
      rep.tute_frac_infinite = static_cast<double>(rep.used - tfin) / rep.used;
      rep.tute_finite = tfin;
      if (tfin > 0) {
        rep.tute_bias = tbias / tfin;
        rep.tute_rmse = std::sqrt(tsq / tfin);
      }
      if (pfin > 0) rep.plugin_tute_rmse = std::sqrt(psq / pfin);
    }
    return rep;
  }

  // Cell mode.
  const ScenarioSpec scn = ScenarioSpec::weibull_cell(cfg.delta, cfg.log_rate_effect);
  const double censor_param = calibrate_censoring(scn);
  rep.tau = std::pow(-std::log(1.0 - cfg.percentile), 1.0 / cfg.delta);
  rep.true_baseline = true_rmst(scn.arm0, rep.tau);
  rep.true_diff = true_rmst(scn.arm1, rep.tau) - rep.true_baseline;

  std::vector<detail::CellRep> outs(static_cast<std::size_t>(cfg.replicates));
  parallel_for(static_cast<std::size_t>(cfg.replicates), cfg.threads, [&](std::size_t r) {
    detail::CellRep& o = outs[r];
    try {
      const SurvivalSample sample = simulate(scn, cfg.n, cfg.seed, r, censor_param);
      sample.validate();
      if (sample.max_event_time() < rep.tau) {
        o.excluded = true;
        return;
      }
      RestrictionGrid single;
      single.taus = {rep.tau};
      const PseudoValueMatrix pv = pseudo_values_by_arm(sample, single);
      const SplineBasis ind = indicator_basis(single);
      const DesignMatrix design = build_design(sample, single, ind, false);
      const GeeFit fit = gee_fit(design, flatten_responses(pv));
      o.s_b0 = fit.coefficients[0] - rep.true_baseline;
      o.s_b1 = fit.coefficients[1] - rep.true_diff;

      AnalysisOptions opt;
      opt.grid_m = cfg.grid_m;
      opt.df_lo = cfg.df_lo;
      opt.df_hi = cfg.df_hi;
      opt.band_points = 2;
      opt.with_band = false;
      const AnalysisResult res = run_analysis(sample, opt);
      o.extrapolated = rep.tau > res.grid.taus.back() || rep.tau < res.grid.taus.front();
      const RmstDiffCurve at_tau = diff_curve(res.fit, res.basis, {rep.tau}, true);
      const std::vector<double> base = baseline_curve(res.fit, res.basis, {rep.tau}, true);
      o.v_b0 = base[0] - rep.true_baseline;
      o.v_b1 = at_tau.estimate[0] - rep.true_diff;
      o.ok = true;
    } catch (const Error& e) {
      o.err = e.what();
    }
  });

  double sb0 = 0.0, sb1 = 0.0, vb0 = 0.0, vb1 = 0.0;
  for (const detail::CellRep& o : outs) {
    if (o.excluded) {
      ++rep.excluded_last_event;
      continue;
    }
    if (!o.ok) {
      ++rep.failures;
      if (rep.failure_messages.size() < 5) rep.failure_messages.push_back(o.err);
      continue;
    }
    ++rep.used;
    if (o.extrapolated) ++rep.vector_extrapolated;
    sb0 += o.s_b0;
    sb1 += o.s_b1;
    vb0 += o.v_b0;
    vb1 += o.v_b1;
  }
  if (rep.used > 0) {
    rep.scalar_baseline_bias = sb0 / rep.used;
    rep.scalar_diff_bias = sb1 / rep.used;
    rep.vector_baseline_bias = vb0 / rep.used;
    rep.vector_diff_bias = vb1 / rep.used;
  }
  return rep;
}

inline std::string StudyReport::csv() const {
  std::ostringstream os;
  os.precision(10);
  if (config.mode == StudyConfig::Mode::scenario) {
    os << "mode,scenario,n_per_arm,replicates,used,failures,model_mae,band_coverage,band_length,"
          "mean_u95,plugin_mae,tute_true,tute_bias,tute_rmse,tute_coverage,tute_finite,"
          "tute_frac_infinite,tute_frac_right_open,plugin_tute_rmse\n";
    os << "scenario," << config.scenario_id << ',' << config.n << ',' << config.replicates << ','
       << used << ',' << failures << ',' << model_mae << ',' << band_coverage << ',' << band_length
       << ',' << mean_u95 << ',' << plugin_mae << ',' << true_tute_value << ',' << tute_bias << ','
       << tute_rmse << ',' << tute_coverage << ',' << tute_finite << ',' << tute_frac_infinite << ','
       << tute_frac_right_open << ',' << plugin_tute_rmse << '\n';
  } else {
    os << "mode,shape,log_rate_effect,percentile,n_total,tau,replicates,used,excluded_last_event,"
          "vector_extrapolated,failures,true_baseline,true_diff,scalar_baseline_bias,"
          "scalar_diff_bias,vector_baseline_bias,vector_diff_bias\n";
    os << "cell," << config.delta << ',' << config.log_rate_effect << ',' << config.percentile << ','
       << config.n << ',' << tau << ',' << config.replicates << ',' << used << ','
       << excluded_last_event << ',' << vector_extrapolated << ',' << failures << ','
       << true_baseline << ',' << true_diff << ',' << scalar_baseline_bias << ',' << scalar_diff_bias
       << ',' << vector_baseline_bias << ',' << vector_diff_bias << '\n';
  }
  return os.str();
}

}  // namespace rmst
