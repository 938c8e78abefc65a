#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "rmst/basis.hpp"
#include "rmst/common.hpp"
#include "rmst/pseudo.hpp"

namespace rmst {

// Mean link for the pseudo-value regression. Identity solves in one least
// squares pass; log uses Fisher scoring with step halving.
struct LinkFunction {
  enum class Kind { identity, log_link };
  Kind kind = Kind::identity;

  static LinkFunction identity() { return {Kind::identity}; }
  static LinkFunction log_link() { return {Kind::log_link}; }

  double mean(double eta) const { return kind == Kind::identity ? eta : std::exp(eta); }
};

// Independence-working-covariance GEE fit with a cluster-robust sandwich.
struct GeeFit {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd robust_cov;  // sandwich, clustered by subject
  Eigen::MatrixXd naive_cov;   // model-based, scaled by the dispersion
  double ssr = 0.0;
  double dispersion = 0.0;
  double qic = 0.0;
  bool converged = true;
  int n_rows = 0;
  int n_clusters = 0;
  LinkFunction link;
  std::vector<DesignColumn> columns;
  std::vector<std::string> warnings;
};

namespace detail {

// Column scales for equilibration. Solving on the rescaled columns and
// mapping back is exact algebra, not an approximation; it only protects the
// QR from wildly different column magnitudes (times vs. cubed times).
inline Eigen::VectorXd column_scales(const Eigen::MatrixXd& X, const std::vector<DesignColumn>& cols) {
  Eigen::VectorXd s(X.cols());
  for (int j = 0; j < X.cols(); ++j) {
    s[j] = X.col(j).cwiseAbs().maxCoeff();
    if (s[j] == 0.0)
      throw InvalidInput("design is rank deficient; column '" + cols[j].label + "' is all zero");
  }
  return s;
}

inline void sandwich(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& weights,
                     const Eigen::VectorXd& resid, const std::vector<int>& cluster,
                     const Eigen::MatrixXd& bread_inv, Eigen::MatrixXd& robust_s) {
  const int p = static_cast<int>(Xs.cols());
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(p);
  long r = 0;
  const long N = Xs.rows();
  while (r < N) {
    const int c = cluster[r];
    u.setZero();
    while (r < N && cluster[r] == c) {
      u.noalias() += Xs.row(r).transpose() * (weights[r] * resid[r]);
      ++r;
    }
    meat.noalias() += u * u.transpose();
  }
  robust_s.noalias() = bread_inv * meat * bread_inv;
}

}  // namespace detail

// Fits E[y | x] = g^{-1}(x' beta) with independence working covariance.
// Rows of the same cluster id (which must be contiguous, as build_design
// emits them) share one score contribution in the robust covariance. The
// stored qic uses the trace penalty tr(naive^{-1} robust), falling back to
// 2p with a warning when the naive matrix is singular.
inline GeeFit gee_fit(const DesignMatrix& design, const Eigen::VectorXd& y, LinkFunction link = {}) {
  const Eigen::MatrixXd& X = design.X;
  const long N = X.rows();
  const int p = static_cast<int>(X.cols());
  if (y.size() != N) throw InvalidInput("response length does not match design rows");
  if (N <= p) throw InvalidInput("fewer rows than coefficients");

  GeeFit fit;
  fit.link = link;
  fit.columns = design.columns;
  fit.n_rows = static_cast<int>(N);
  fit.n_clusters = 0;
  for (long r = 0; r < N; ++r)
    if (r == 0 || design.cluster[r] != design.cluster[r - 1]) ++fit.n_clusters;

  const Eigen::VectorXd scales = detail::column_scales(X, design.columns);
  Eigen::MatrixXd Xs = X;
  for (int j = 0; j < p; ++j) Xs.col(j) /= scales[j];

  Eigen::VectorXd beta_s(p);
  Eigen::VectorXd fitted(N);
  Eigen::VectorXd weights(N);  // d mu / d eta per row
  Eigen::MatrixXd bread_inv(p, p);

  if (link.kind == LinkFunction::Kind::identity) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
    if (qr.rank() < p) {
      const auto perm = qr.colsPermutation().indices();
      std::ostringstream msg;
      msg << "design is rank deficient; collinear columns:";
      for (int j = static_cast<int>(qr.rank()); j < p; ++j)
        msg << " '" << design.columns[perm[j]].label << "'";
      throw InvalidInput(msg.str());
    }
    beta_s = qr.solve(y);
    fitted.noalias() = Xs * beta_s;
    weights.setOnes();
    bread_inv = (Xs.transpose() * Xs).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  } else {
    // Fisher scoring for the log link, halving the step until the score
    // norm decreases. Convergence on the unscaled coefficient update.
    beta_s.setZero();
    const double ybar = y.mean();
    beta_s[0] = std::log(std::max(ybar, 1e-8)) * scales[0];
    Eigen::VectorXd eta(N), mu(N), score(p), step(p);
    Eigen::MatrixXd info(p, p);
    auto eval_score = [&](const Eigen::VectorXd& b, Eigen::VectorXd& sc) {
      eta.noalias() = Xs * b;
      for (long r = 0; r < N; ++r) {
        if (eta[r] > 500.0) throw NumericError("log-link linear predictor overflow");
        mu[r] = std::exp(eta[r]);
      }
      sc.noalias() = Xs.transpose() * (mu.cwiseProduct(y - mu));
    };
    eval_score(beta_s, score);
    fit.converged = false;
    for (int it = 0; it < 100; ++it) {
      info.noalias() = Xs.transpose() * mu.array().square().matrix().asDiagonal() * Xs;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
      if (ldlt.info() != Eigen::Success)
        throw NumericError("log-link information matrix is singular");
      step = ldlt.solve(score);
      double step_scale = 1.0;
      const double score_norm = score.norm();
      Eigen::VectorXd cand(p), cand_score(p);
      bool accepted = false;
      for (int h = 0; h < 30 && !accepted; ++h) {
        cand = beta_s + step_scale * step;
        try {
          eval_score(cand, cand_score);
          accepted = cand_score.norm() <= score_norm || h == 29;
        } catch (const NumericError&) {
        }
        if (!accepted) step_scale *= 0.5;
      }
      if (!accepted) throw NumericError("log-link step halving failed");
      double max_update = 0.0;
      for (int j = 0; j < p; ++j)
        max_update = std::max(max_update, std::abs(step_scale * step[j] / scales[j]));
      beta_s = cand;
      score = cand_score;
      if (max_update < 1e-10) {
        fit.converged = true;
        break;
      }
    }
    if (!fit.converged) {
      std::ostringstream msg;
      msg << "log-link fit did not converge in 100 iterations; last coefficients:";
      for (int j = 0; j < p; ++j) msg << ' ' << beta_s[j] / scales[j];
      throw NumericError(msg.str());
    }
    eta.noalias() = Xs * beta_s;
    for (long r = 0; r < N; ++r) {
      fitted[r] = std::exp(eta[r]);
      weights[r] = fitted[r];
    }
    info.noalias() = Xs.transpose() * weights.array().square().matrix().asDiagonal() * Xs;
    bread_inv = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  }

  const Eigen::VectorXd resid = y - fitted;
  fit.ssr = resid.squaredNorm();
  fit.dispersion = fit.ssr / static_cast<double>(N - p);

  Eigen::MatrixXd robust_s(p, p);
  detail::sandwich(Xs, weights, resid, design.cluster, bread_inv, robust_s);

  const Eigen::VectorXd inv_scales = scales.cwiseInverse();
  fit.coefficients = beta_s.cwiseProduct(inv_scales);
  fit.robust_cov = inv_scales.asDiagonal() * robust_s * inv_scales.asDiagonal();
  fit.naive_cov = inv_scales.asDiagonal() * (fit.dispersion * bread_inv) * inv_scales.asDiagonal();

  // Trace penalty on the scaled matrices (the scale factors cancel in the
  // trace, so this equals tr(naive^{-1} robust) on the original scale).
  Eigen::LDLT<Eigen::MatrixXd> naive_ldlt(fit.dispersion * bread_inv);
  double penalty = 2.0 * p;
  bool fallback = naive_ldlt.info() != Eigen::Success || !(fit.dispersion > 0.0);
  if (!fallback) {
    const Eigen::MatrixXd ratio = naive_ldlt.solve(robust_s);
    if (ratio.allFinite())
      penalty = 2.0 * ratio.trace();
    else
      fallback = true;
  }
  if (fallback)
    fit.warnings.push_back("naive covariance singular; information criterion penalty fell back to 2p");
  fit.qic = fit.ssr + penalty;
  return fit;
}

// Standard errors from the sandwich.
inline Eigen::VectorXd robust_se(const GeeFit& fit) {
  return fit.robust_cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

// Information criterion SSR + 2 tr(naive^{-1} robust) recomputed from the
// stored covariances. fallback_2p forces the 2p penalty; it also applies
// automatically when the naive matrix cannot be inverted to a finite trace.
inline double qic(const GeeFit& fit, bool fallback_2p = false) {
  const double p = static_cast<double>(fit.coefficients.size());
  double penalty = 2.0 * p;
  if (!fallback_2p) {
    Eigen::LDLT<Eigen::MatrixXd> naive_ldlt(fit.naive_cov);
    if (naive_ldlt.info() == Eigen::Success) {
      const Eigen::MatrixXd ratio = naive_ldlt.solve(fit.robust_cov);
      if (ratio.allFinite()) penalty = 2.0 * ratio.trace();
    }
  }
  return fit.ssr + penalty;
}

struct DfCandidate {
  int df = 0;
  double qic = 0.0;
  bool ok = false;
  std::string message;
};

struct DfSelection {
  int best_df = 0;
  std::vector<DfCandidate> trace;
  std::vector<std::string> warnings;
};

namespace detail {

inline DfSelection select_df_impl(const SurvivalSample& sample, const RestrictionGrid& grid,
                                  const Eigen::VectorXd& y, LinkFunction link, int df_lo, int df_hi,
                                  bool with_covariates) {
  if (df_lo < 1 || df_hi < df_lo) throw InvalidInput("invalid spline df range");
  DfSelection sel;
  const int M = static_cast<int>(grid.size());
  const int cap = M - 2;
  if (df_hi > cap) {
    sel.warnings.push_back("spline df range capped at " + std::to_string(cap) +
                           " by the restriction grid size");
    df_hi = cap;
  }
  if (df_hi < df_lo)
    throw InvalidInput("restriction grid too small for the requested spline df range");
  for (int df = df_lo; df <= df_hi; ++df) {
    DfCandidate cand;
    cand.df = df;
    try {
      const SplineBasis basis = natural_cubic_basis(grid, df);
      const DesignMatrix design = build_design(sample, grid, basis, with_covariates);
      const GeeFit fit = gee_fit(design, y, link);
      cand.qic = fit.qic;
      cand.ok = true;
    } catch (const Error& e) {
      cand.message = e.what();
      sel.warnings.push_back("df " + std::to_string(df) + " skipped: " + e.what());
    }
    sel.trace.push_back(cand);
  }
  double best = kInf;
  int best_df = 0;
  for (const DfCandidate& c : sel.trace)
    if (c.ok && c.qic < best) {
      best = c.qic;
      best_df = c.df;
    }
  if (best_df == 0) throw NumericError("every candidate spline df failed to fit");
  sel.best_df = best_df;
  return sel;
}

}  // namespace detail

// Picks the spline df by the information criterion over [df_lo, df_hi]
// (upper end capped at M-2). Ties resolve to the smaller df.
inline DfSelection select_df(const SurvivalSample& sample, const RestrictionGrid& grid,
                             LinkFunction link, int df_lo, int df_hi, bool with_covariates = false) {
  const PseudoValueMatrix pv = pseudo_values_by_arm(sample, grid);
  return detail::select_df_impl(sample, grid, flatten_responses(pv), link, df_lo, df_hi,
                                with_covariates);
}

}  // namespace rmst
