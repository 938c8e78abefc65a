#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "rmst/basis.hpp"
#include "rmst/common.hpp"
#include "rmst/gee.hpp"
#include "rmst/rng.hpp"

namespace rmst {

// Estimated difference in restricted mean survival, arm 1 minus arm 0, as a
// function of the restriction time, with pointwise and simultaneous limits.
struct RmstDiffCurve {
  std::vector<double> grid;
  std::vector<double> estimate;
  std::vector<double> se;
  std::vector<double> ci_lo, ci_hi;      // pointwise 95%
  std::vector<double> band_lo, band_hi;  // simultaneous, filled by simultaneous_band
  double critical_value = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t band_seed = 0;
  long band_draws = 0;
  Eigen::MatrixXd contrast;  // n_grid x p, rows c(t) with estimate = c(t)' beta
  std::vector<std::string> warnings;
};

namespace detail {

inline void check_eval_range(double t, const SplineBasis& basis, bool allow_extrapolation,
                             std::vector<std::string>& warnings, bool& warned) {
  const double lo = basis.lower();
  const double hi = basis.upper();
  const double slack = 1e-9 * std::max(1.0, std::abs(hi));
  if (t >= lo - slack && t <= hi + slack) return;
  std::ostringstream msg;
  msg << "evaluation time " << t << " outside the restriction grid [" << lo << ", " << hi << "]";
  if (!allow_extrapolation) throw InvalidInput(msg.str());
  if (!warned) {
    warnings.push_back(msg.str() + "; basis extrapolation in use");
    warned = true;
  }
}

inline Eigen::VectorXd contrast_row(const GeeFit& fit, const SplineBasis& basis, double t,
                                    bool treatment_difference) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(fit.coefficients.size());
  const std::vector<double> h = basis.df > 0 ? basis.eval(t) : std::vector<double>{};
  for (std::size_t j = 0; j < fit.columns.size(); ++j) {
    const DesignColumn& col = fit.columns[j];
    if (treatment_difference) {
      if (col.role == DesignColumn::Role::treat) c[j] = 1.0;
      if (col.role == DesignColumn::Role::treat_time) c[j] = h[col.basis_index];
    } else {
      if (col.role == DesignColumn::Role::intercept) c[j] = 1.0;
      if (col.role == DesignColumn::Role::time) c[j] = h[col.basis_index];
    }
  }
  return c;
}

}  // namespace detail

// Difference curve with pointwise 95% limits from the sandwich covariance.
// Evaluation outside the restriction grid is refused unless explicitly
// allowed (the basis is linear out there, so allowed extrapolation is tame
// but still flagged).
inline RmstDiffCurve diff_curve(const GeeFit& fit, const SplineBasis& basis,
                                const std::vector<double>& eval_grid,
                                bool allow_extrapolation = false) {
  if (eval_grid.empty()) throw InvalidInput("evaluation grid is empty");
  RmstDiffCurve out;
  out.grid = eval_grid;
  const int G = static_cast<int>(eval_grid.size());
  const int p = static_cast<int>(fit.coefficients.size());
  out.contrast.resize(G, p);
  out.estimate.resize(G);
  out.se.resize(G);
  out.ci_lo.resize(G);
  out.ci_hi.resize(G);
  bool warned = false;
  for (int g = 0; g < G; ++g) {
    detail::check_eval_range(eval_grid[g], basis, allow_extrapolation, out.warnings, warned);
    const Eigen::VectorXd c = detail::contrast_row(fit, basis, eval_grid[g], true);
    out.contrast.row(g) = c;
    out.estimate[g] = c.dot(fit.coefficients);
    const double var = c.dot(fit.robust_cov * c);
    out.se[g] = std::sqrt(std::max(var, 0.0));
    out.ci_lo[g] = out.estimate[g] - 1.96 * out.se[g];
    out.ci_hi[g] = out.estimate[g] + 1.96 * out.se[g];
  }
  return out;
}

// Fitted restricted mean for arm 0 as a function of the restriction time.
inline std::vector<double> baseline_curve(const GeeFit& fit, const SplineBasis& basis,
                                          const std::vector<double>& eval_grid,
                                          bool allow_extrapolation = false) {
  std::vector<double> out(eval_grid.size());
  std::vector<std::string> sink;
  bool warned = false;
  for (std::size_t g = 0; g < eval_grid.size(); ++g) {
    detail::check_eval_range(eval_grid[g], basis, allow_extrapolation, sink, warned);
    out[g] = detail::contrast_row(fit, basis, eval_grid[g], false).dot(fit.coefficients);
  }
  return out;
}

// Simultaneous confidence band over the whole evaluation grid: the critical
// value is the empirical (1-alpha) quantile of max_t |Z(t)| where Z is a
// mean-zero Gaussian vector with the correlation structure of the estimated
// curve. Draws are generated in fixed-size chunks with one keyed stream per
// chunk, so the result depends only on the seed.
inline void simultaneous_band(RmstDiffCurve& curve, const GeeFit& fit, double alpha = 0.05,
                              long n_draws = 100000, std::uint64_t seed = 0) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must be in (0, 1)");
  if (n_draws < 10000) throw InvalidInput("simultaneous band needs at least 10000 draws");
  const int G = static_cast<int>(curve.grid.size());
  Eigen::MatrixXd cov = curve.contrast * fit.robust_cov * curve.contrast.transpose();

  Eigen::VectorXd sd(G);
  for (int g = 0; g < G; ++g) sd[g] = std::sqrt(std::max(cov(g, g), 1e-300));
  Eigen::MatrixXd corr(G, G);
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j) corr(i, j) = cov(i, j) / (sd[i] * sd[j]);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
  if (eig.info() != Eigen::Success) throw NumericError("band correlation eigendecomposition failed");
  Eigen::VectorXd lam = eig.eigenvalues();
  if (lam.minCoeff() < -1e-8)
    curve.warnings.push_back("band correlation matrix not positive semidefinite; eigenvalues floored");
  for (int i = 0; i < G; ++i) lam[i] = std::max(lam[i], 1e-12);
  const Eigen::MatrixXd L = eig.eigenvectors() * lam.cwiseSqrt().asDiagonal();

  const long chunk = 8192;
  const long n_chunks = (n_draws + chunk - 1) / chunk;
  std::vector<double> maxima(static_cast<std::size_t>(n_draws));
  for (long c = 0; c < n_chunks; ++c) {
    Rng rng = make_stream(seed, 0x62616e64u, static_cast<std::uint64_t>(c));
    const long lo = c * chunk;
    const long hi = std::min(n_draws, lo + chunk);
    Eigen::MatrixXd Z(hi - lo, G);
    for (long r = 0; r < hi - lo; ++r)
      for (int g = 0; g < G; ++g) Z(r, g) = rng.normal();
    const Eigen::MatrixXd S = Z * L.transpose();
    for (long r = 0; r < hi - lo; ++r) maxima[static_cast<std::size_t>(lo + r)] = S.row(r).cwiseAbs().maxCoeff();
  }
  std::sort(maxima.begin(), maxima.end());
  const double u = quantile_type7(maxima, 1.0 - alpha);

  curve.critical_value = u;
  curve.band_seed = seed;
  curve.band_draws = n_draws;
  curve.band_lo.resize(G);
  curve.band_hi.resize(G);
  for (int g = 0; g < G; ++g) {
    curve.band_lo[g] = curve.estimate[g] - u * curve.se[g];
    curve.band_hi[g] = curve.estimate[g] + u * curve.se[g];
  }
}

// True curve inside the simultaneous band at every grid point?
inline bool band_covers(const RmstDiffCurve& curve, const std::vector<double>& truth) {
  if (truth.size() != curve.grid.size() || curve.band_lo.empty())
    throw InvalidInput("band coverage check needs a band and a truth of matching length");
  for (std::size_t g = 0; g < truth.size(); ++g)
    if (truth[g] < curve.band_lo[g] || truth[g] > curve.band_hi[g]) return false;
  return true;
}

}  // namespace rmst
