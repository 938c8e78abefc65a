#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "rmst/common.hpp"
#include "rmst/survival.hpp"

namespace rmst {

// Restriction times tau_1 < ... < tau_M at which restricted means are
// modelled. Kept small (M <= 30): each added time multiplies the regression
// rows, and a saturated indicator model needs M-1 columns.
struct RestrictionGrid {
  std::vector<double> taus;

  std::size_t size() const { return taus.size(); }

  void validate() const {
    if (taus.empty()) throw InvalidInput("restriction grid is empty");
    if (taus.size() > 30) throw InvalidInput("restriction grid exceeds 30 points");
    double prev = 0.0;
    for (double t : taus) {
      if (!(t > prev) || !std::isfinite(t))
        throw InvalidInput("restriction times must be positive, finite and strictly increasing");
      prev = t;
    }
  }
};

struct GridSelection {
  RestrictionGrid grid;
  std::vector<std::string> warnings;
};

// Picks m restriction times at quantiles of the observed event times, evenly
// spaced in probability from the minimum event time to the 99th percentile.
// Falls back to the distinct event times when there are fewer than m of them.
inline GridSelection select_grid(const SurvivalSample& sample, int m = 16) {
  if (m < 1) throw InvalidInput("grid size must be at least 1");
  GridSelection out;
  if (m > 20) {
    out.warnings.push_back("grid size capped at 20 (requested " + std::to_string(m) + ")");
    m = 20;
  }
  std::vector<double> events;
  for (const Subject& s : sample.subjects)
    if (s.event) events.push_back(s.time);
  if (events.empty()) throw InvalidInput("sample has no events; cannot select restriction times");
  std::sort(events.begin(), events.end());
  std::vector<double> distinct = events;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<double> taus;
  if (static_cast<int>(distinct.size()) < m) {
    taus = distinct;
    out.warnings.push_back("only " + std::to_string(distinct.size()) +
                           " distinct event times; using them all instead of " + std::to_string(m) +
                           " quantiles");
  } else if (m == 1) {
    taus.push_back(quantile_type7(events, 0.99));
  } else {
    for (int k = 0; k < m; ++k) {
      const double p = 0.99 * static_cast<double>(k) / static_cast<double>(m - 1);
      taus.push_back(quantile_type7(events, p));
    }
    taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
    if (static_cast<int>(taus.size()) < m)
      out.warnings.push_back("duplicate quantiles dropped; grid has " + std::to_string(taus.size()) +
                             " of " + std::to_string(m) + " requested points");
  }
  out.grid.taus = std::move(taus);
  out.grid.validate();
  return out;
}

// Jackknife pseudo-values of the restricted mean: row i holds
// n * rmst(full KM) - (n-1) * rmst(leave-i-out KM) at every restriction time.
struct PseudoValueMatrix {
  Eigen::MatrixXd values;  // n x M, rows aligned with sample.subjects
  RestrictionGrid grid;
  std::vector<std::string> warnings;
};

enum class PseudoMethod { optimized, naive };

namespace detail {

// Restricted-mean integrals of a step curve at several increasing times in a
// single left-to-right walk. The accumulation order matches rmst() exactly.
inline void rmst_multi(const std::vector<double>& jump_times, const std::vector<double>& survival,
                       const std::vector<double>& taus, double* out) {
  double area = 0.0;
  double prev = 0.0;
  double s = 1.0;
  std::size_t k = 0;
  for (std::size_t j = 0; j < taus.size(); ++j) {
    const double tau = taus[j];
    while (k < jump_times.size() && jump_times[k] < tau) {
      area += s * (jump_times[k] - prev);
      prev = jump_times[k];
      s = survival[k];
      ++k;
    }
    out[j] = area + s * (tau - prev);
  }
}

struct SortedObs {
  std::vector<double> times;   // distinct observed times, ascending
  std::vector<int> events;     // events at each distinct time
  std::vector<int> leaving;    // subjects leaving (event or censored)
  std::vector<int> at_risk;    // at risk just before each distinct time
  int n = 0;
};

inline SortedObs tabulate(const SurvivalSample& sample, const std::vector<int>& rows) {
  std::vector<std::pair<double, bool>> obs;
  obs.reserve(rows.size());
  for (int r : rows) obs.emplace_back(sample.subjects[r].time, sample.subjects[r].event);
  std::sort(obs.begin(), obs.end());
  SortedObs t;
  t.n = static_cast<int>(obs.size());
  int remaining = t.n;
  std::size_t i = 0;
  while (i < obs.size()) {
    const double tt = obs[i].first;
    int d = 0, m = 0;
    while (i < obs.size() && obs[i].first == tt) {
      if (obs[i].second) ++d;
      ++m;
      ++i;
    }
    t.times.push_back(tt);
    t.events.push_back(d);
    t.leaving.push_back(m);
    t.at_risk.push_back(remaining);
    remaining -= m;
  }
  return t;
}

// Leave-one-out KM jump structure for a subject observed at (t_out, ev_out),
// derived from the full tabulation by decrementing counts.
inline void loo_curve(const SortedObs& tab, double t_out, bool ev_out, std::vector<double>& jumps,
                      std::vector<double>& surv) {
  jumps.clear();
  surv.clear();
  double s = 1.0;
  for (std::size_t k = 0; k < tab.times.size(); ++k) {
    const int nk = tab.at_risk[k] - (t_out >= tab.times[k] ? 1 : 0);
    const int dk = tab.events[k] - (ev_out && t_out == tab.times[k] ? 1 : 0);
    if (dk > 0) {
      s *= 1.0 - static_cast<double>(dk) / static_cast<double>(nk);
      jumps.push_back(tab.times[k]);
      surv.push_back(s);
    }
  }
}

}  // namespace detail

// Pseudo-values against the Kaplan-Meier of the whole passed sample.
//
// The grid must stay at or below the sample's largest event time; past it the
// jackknife average no longer reproduces the full-sample estimate. With
// allow_extension the check relaxes to a warning and the constant extension
// of the curve is integrated (the leave-one-out recomputations always extend;
// that is required for the average identity and costs nothing when the curve
// has already dropped to zero).
inline PseudoValueMatrix pseudo_values(const SurvivalSample& sample, const RestrictionGrid& grid,
                                       PseudoMethod method = PseudoMethod::optimized,
                                       bool allow_extension = false) {
  grid.validate();
  if (sample.size() < 2) throw InvalidInput("pseudo-values need at least 2 subjects");
  const double max_event = sample.max_event_time();
  PseudoValueMatrix out;
  out.grid = grid;
  if (grid.taus.back() > max_event) {
    if (!allow_extension) {
      std::ostringstream msg;
      msg << "restriction time beyond last event (" << grid.taus.back() << " > " << max_event << ")";
      throw InvalidInput(msg.str());
    }
    std::ostringstream msg;
    msg << "restriction time " << grid.taus.back() << " beyond last event " << max_event
        << "; Kaplan-Meier constant extension in use";
    out.warnings.push_back(msg.str());
  }

  const int n = static_cast<int>(sample.size());
  const int M = static_cast<int>(grid.size());
  out.values.resize(n, M);

  std::vector<int> rows(n);
  for (int i = 0; i < n; ++i) rows[i] = i;
  const detail::SortedObs tab = detail::tabulate(sample, rows);

  // Full-sample curve and its integrals.
  std::vector<double> jumps, surv;
  double s = 1.0;
  for (std::size_t k = 0; k < tab.times.size(); ++k)
    if (tab.events[k] > 0) {
      s *= 1.0 - static_cast<double>(tab.events[k]) / static_cast<double>(tab.at_risk[k]);
      jumps.push_back(tab.times[k]);
      surv.push_back(s);
    }
  std::vector<double> full(M);
  detail::rmst_multi(jumps, surv, grid.taus, full.data());

  if (method == PseudoMethod::naive) {
    // Reference path: rebuild the subsample and refit KM for every subject.
    std::vector<std::pair<double, bool>> obs;
    for (int i = 0; i < n; ++i) {
      obs.clear();
      for (int r = 0; r < n; ++r)
        if (r != i) obs.emplace_back(sample.subjects[r].time, sample.subjects[r].event);
      const StepSurvivalCurve loo = detail::km_from_pairs(obs);
      for (int j = 0; j < M; ++j) {
        const double v = rmst(loo, grid.taus[j]).value;
        out.values(i, j) = n * full[j] - (n - 1) * v;
      }
    }
    return out;
  }

  // Optimized path: subjects sharing (time, status) share the leave-one-out
  // curve, and each curve is a counted-down pass over the shared tabulation.
  std::vector<double> loo_jumps, loo_surv, loo_vals(M);
  for (std::size_t k = 0; k < tab.times.size(); ++k) {
    for (int ev = 0; ev <= 1; ++ev) {
      const int count = ev ? tab.events[k] : tab.leaving[k] - tab.events[k];
      if (count == 0) continue;
      detail::loo_curve(tab, tab.times[k], ev != 0, loo_jumps, loo_surv);
      detail::rmst_multi(loo_jumps, loo_surv, grid.taus, loo_vals.data());
      for (int i = 0; i < n; ++i) {
        const Subject& sub = sample.subjects[i];
        if (sub.time == tab.times[k] && sub.event == (ev != 0))
          for (int j = 0; j < M; ++j) out.values(i, j) = n * full[j] - (n - 1) * loo_vals[j];
      }
    }
  }
  return out;
}

// Pseudo-values for the analysis pipeline: each arm is jackknifed against its
// own Kaplan-Meier, so arm-wise pseudo-value means reproduce arm-wise
// restricted means exactly. The grid is validated against the pooled sample;
// an arm whose own events end earlier is integrated with the constant
// extension and a warning names that arm.
inline PseudoValueMatrix pseudo_values_by_arm(const SurvivalSample& sample,
                                              const RestrictionGrid& grid,
                                              PseudoMethod method = PseudoMethod::optimized) {
  grid.validate();
  const double max_event = sample.max_event_time();
  if (grid.taus.back() > max_event) {
    std::ostringstream msg;
    msg << "restriction time beyond last event (" << grid.taus.back() << " > " << max_event << ")";
    throw InvalidInput(msg.str());
  }
  PseudoValueMatrix out;
  out.grid = grid;
  out.values.resize(static_cast<int>(sample.size()), static_cast<int>(grid.size()));
  for (int arm = 0; arm < 2; ++arm) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < sample.size(); ++i)
      if (sample.subjects[i].arm == arm) idx.push_back(static_cast<int>(i));
    if (idx.empty()) continue;
    SurvivalSample sub;
    sub.subjects.reserve(idx.size());
    for (int i : idx) sub.subjects.push_back(sample.subjects[i]);
    PseudoValueMatrix pm = pseudo_values(sub, grid, method, /*allow_extension=*/true);
    for (std::size_t r = 0; r < idx.size(); ++r) out.values.row(idx[r]) = pm.values.row(r);
    for (const std::string& w : pm.warnings)
      out.warnings.push_back("arm " + std::to_string(arm) + ": " + w);
  }
  return out;
}

}  // namespace rmst
