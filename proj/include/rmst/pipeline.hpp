#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmst/basis.hpp"
#include "rmst/common.hpp"
#include "rmst/gee.hpp"
#include "rmst/inference.hpp"
#include "rmst/pseudo.hpp"
#include "rmst/survival.hpp"

namespace rmst {

struct AnalysisOptions {
  int grid_m = 16;                        // restriction times requested from select_grid
  std::vector<double> restriction_times;  // overrides grid_m when nonempty
  BasisKind basis = BasisKind::natural_cubic;
  int fixed_df = 0;                       // > 0 skips the information-criterion search
  int df_lo = 4;
  int df_hi = 12;
  LinkFunction link;
  bool with_covariates = false;
  int band_points = 30;                   // evaluation grid size over [tau_1, tau_M]
  double alpha = 0.05;                    // simultaneous band level
  long band_draws = 100000;
  std::uint64_t seed = 0;                 // band draws
  bool with_band = true;
};

struct AnalysisResult {
  RestrictionGrid grid;
  PseudoValueMatrix pseudo;
  SplineBasis basis;
  DfSelection df_selection;  // empty trace when fixed_df was used
  GeeFit fit;
  RmstDiffCurve curve;
  std::vector<double> baseline;  // fitted arm-0 restricted mean on curve.grid
  std::vector<std::string> warnings;
};

// Full pipeline: restriction grid from event-time quantiles, arm-stratified
// jackknife pseudo-values, spline df chosen by the information criterion,
// GEE fit with robust covariance, difference curve with pointwise limits and
// a simultaneous band over an evenly spaced evaluation grid.
inline AnalysisResult run_analysis(const SurvivalSample& sample, const AnalysisOptions& opt) {
  sample.validate();
  AnalysisResult res;

  if (!opt.restriction_times.empty()) {
    res.grid.taus = opt.restriction_times;
    res.grid.validate();
  } else {
    GridSelection sel = select_grid(sample, opt.grid_m);
    res.grid = std::move(sel.grid);
    for (std::string& w : sel.warnings) res.warnings.push_back(std::move(w));
  }

  res.pseudo = pseudo_values_by_arm(sample, res.grid);
  for (const std::string& w : res.pseudo.warnings) res.warnings.push_back(w);
  const Eigen::VectorXd y = flatten_responses(res.pseudo);

  const int M = static_cast<int>(res.grid.size());
  if (opt.basis == BasisKind::indicator) {
    res.basis = indicator_basis(res.grid);
  } else if (M == 1) {
    res.basis = indicator_basis(res.grid);  // degenerate: model is {intercept, treat}
  } else if (opt.fixed_df > 0) {
    res.basis = natural_cubic_basis(res.grid, opt.fixed_df);
  } else {
    res.df_selection =
        detail::select_df_impl(sample, res.grid, y, opt.link, opt.df_lo, opt.df_hi, opt.with_covariates);
    for (const std::string& w : res.df_selection.warnings) res.warnings.push_back(w);
    res.basis = natural_cubic_basis(res.grid, res.df_selection.best_df);
  }

  const DesignMatrix design = build_design(sample, res.grid, res.basis, opt.with_covariates);
  res.fit = gee_fit(design, y, opt.link);
  for (const std::string& w : res.fit.warnings) res.warnings.push_back(w);

  std::vector<double> eval_grid;
  if (M == 1) {
    eval_grid = res.grid.taus;
  } else if (opt.basis == BasisKind::indicator) {
    eval_grid = res.grid.taus;
  } else {
    if (opt.band_points < 2) throw InvalidInput("evaluation grid needs at least 2 points");
    eval_grid = linspace(res.grid.taus.front(), res.grid.taus.back(), opt.band_points);
  }
  res.curve = diff_curve(res.fit, res.basis, eval_grid);
  res.baseline = baseline_curve(res.fit, res.basis, eval_grid);
  if (opt.with_band) simultaneous_band(res.curve, res.fit, opt.alpha, opt.band_draws, opt.seed);
  for (const std::string& w : res.curve.warnings) res.warnings.push_back(w);
  return res;
}

}  // namespace rmst
