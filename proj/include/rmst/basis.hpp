#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "rmst/common.hpp"
#include "rmst/pseudo.hpp"
#include "rmst/survival.hpp"

namespace rmst {

enum class BasisKind { natural_cubic, indicator };

// Time basis h(t) used for the regression, excluding the intercept. The
// natural cubic variant is linear outside its boundary knots, so the model
// cannot oscillate past the restriction grid. The indicator variant turns
// each grid point past the first into its own free level (saturated model).
struct SplineBasis {
  BasisKind kind = BasisKind::natural_cubic;
  int df = 0;                       // number of basis columns
  std::vector<double> knots;        // natural_cubic: boundary + interior, ascending
  std::vector<double> grid_times;   // indicator: the restriction times

  double lower() const { return kind == BasisKind::natural_cubic ? knots.front() : grid_times.front(); }
  double upper() const { return kind == BasisKind::natural_cubic ? knots.back() : grid_times.back(); }

  // Basis values at one time point; length df.
  std::vector<double> eval(double t) const {
    std::vector<double> v(static_cast<std::size_t>(df), 0.0);
    if (df == 0) return v;
    if (kind == BasisKind::indicator) {
      // One-hot level for the grid interval containing t (right-continuous).
      std::size_t j = 0;
      while (j + 1 < grid_times.size() && t >= grid_times[j + 1]) ++j;
      if (j >= 1) v[j - 1] = 1.0;
      return v;
    }
    const double a = knots.front();
    const double b = knots.back();
    v[0] = t - a;
    if (df == 1) return v;
    auto p3 = [](double x) { return x > 0.0 ? x * x * x : 0.0; };
    auto dd = [&](double xi) { return (p3(t - xi) - p3(t - b)) / (b - xi); };
    const double d_last = dd(knots[knots.size() - 2]);
    for (int j = 1; j < df; ++j) v[j] = dd(knots[j - 1]) - d_last;
    return v;
  }
};

// Natural cubic basis anchored on a restriction grid: boundary knots at the
// first and last restriction times, interior knots at evenly spaced
// quantiles of the grid.
inline SplineBasis natural_cubic_basis(const RestrictionGrid& grid, int df) {
  grid.validate();
  if (df < 1) throw InvalidInput("spline df must be at least 1");
  SplineBasis basis;
  basis.kind = BasisKind::natural_cubic;
  basis.df = df;
  const double a = grid.taus.front();
  const double b = grid.taus.back();
  if (!(a < b)) throw InvalidInput("spline basis needs at least 2 distinct restriction times");
  basis.knots.push_back(a);
  for (int k = 1; k < df; ++k) {
    const double q = quantile_type7(grid.taus, static_cast<double>(k) / static_cast<double>(df));
    basis.knots.push_back(q);
  }
  basis.knots.push_back(b);
  for (std::size_t k = 1; k < basis.knots.size(); ++k)
    if (!(basis.knots[k] > basis.knots[k - 1]))
      throw InvalidInput("spline df " + std::to_string(df) +
                         " too large for the restriction grid (coincident knots)");
  return basis;
}

inline SplineBasis indicator_basis(const RestrictionGrid& grid) {
  grid.validate();
  SplineBasis basis;
  basis.kind = BasisKind::indicator;
  basis.grid_times = grid.taus;
  basis.df = static_cast<int>(grid.taus.size()) - 1;
  return basis;
}

struct DesignColumn {
  enum class Role { intercept, time, treat, treat_time, covariate, covariate_time };
  Role role;
  std::string label;
  int basis_index = -1;      // which basis column, for time-interaction roles
  int covariate_index = -1;  // which covariate, for covariate roles
};

// Long-format regression design: one row per (subject, restriction time),
// responses aligned as subject-major (row = subject * M + grid index).
struct DesignMatrix {
  Eigen::MatrixXd X;
  std::vector<int> cluster;  // subject index per row
  std::vector<DesignColumn> columns;
  int n_subjects = 0;
  int n_times = 0;
};

namespace detail {

inline void rank_check(const Eigen::MatrixXd& X, const std::vector<DesignColumn>& cols) {
  Eigen::MatrixXd Xs = X;
  for (int j = 0; j < Xs.cols(); ++j) {
    const double s = Xs.col(j).cwiseAbs().maxCoeff();
    if (s == 0.0)
      throw InvalidInput("design is rank deficient; column '" + cols[j].label + "' is all zero");
    Xs.col(j) /= s;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
  const int rank = static_cast<int>(qr.rank());
  if (rank < Xs.cols()) {
    const auto perm = qr.colsPermutation().indices();
    std::ostringstream msg;
    msg << "design is rank deficient; collinear columns:";
    for (int j = rank; j < Xs.cols(); ++j) msg << " '" << cols[perm[j]].label << "'";
    throw InvalidInput(msg.str());
  }
}

}  // namespace detail

// Assembles the regression design. With a single restriction time the model
// collapses to {intercept, treatment} (plus covariate main effects); with
// several it is {intercept, h(t), Z, Z*h(t)} and, when requested, every
// covariate with its own main effect and time interaction.
inline DesignMatrix build_design(const SurvivalSample& sample, const RestrictionGrid& grid,
                                 const SplineBasis& basis, bool with_covariates,
                                 bool with_interaction = true) {
  grid.validate();
  const int n = static_cast<int>(sample.size());
  const int M = static_cast<int>(grid.size());
  const int df = M > 1 ? basis.df : 0;
  const int n_cov = with_covariates ? static_cast<int>(sample.n_covariates()) : 0;

  DesignMatrix d;
  d.n_subjects = n;
  d.n_times = M;

  d.columns.push_back({DesignColumn::Role::intercept, "intercept", -1, -1});
  for (int k = 0; k < df; ++k)
    d.columns.push_back({DesignColumn::Role::time, "time_b" + std::to_string(k + 1), k, -1});
  d.columns.push_back({DesignColumn::Role::treat, "treat", -1, -1});
  if (with_interaction)
    for (int k = 0; k < df; ++k)
      d.columns.push_back({DesignColumn::Role::treat_time, "treat_time_b" + std::to_string(k + 1), k, -1});
  for (int c = 0; c < n_cov; ++c) {
    const std::string name = "x" + std::to_string(c + 1);
    d.columns.push_back({DesignColumn::Role::covariate, name, -1, c});
    if (with_interaction)
      for (int k = 0; k < df; ++k)
        d.columns.push_back(
            {DesignColumn::Role::covariate_time, name + "_time_b" + std::to_string(k + 1), k, c});
  }

  const int p = static_cast<int>(d.columns.size());
  d.X.resize(static_cast<long>(n) * M, p);
  d.cluster.resize(static_cast<std::size_t>(n) * M);

  std::vector<std::vector<double>> h(M);
  for (int j = 0; j < M; ++j) h[j] = df > 0 ? basis.eval(grid.taus[j]) : std::vector<double>{};

  for (int i = 0; i < n; ++i) {
    const Subject& sub = sample.subjects[i];
    for (int j = 0; j < M; ++j) {
      const long r = static_cast<long>(i) * M + j;
      d.cluster[r] = i;
      for (int c = 0; c < p; ++c) {
        const DesignColumn& col = d.columns[c];
        double v = 0.0;
        switch (col.role) {
          case DesignColumn::Role::intercept: v = 1.0; break;
          case DesignColumn::Role::time: v = h[j][col.basis_index]; break;
          case DesignColumn::Role::treat: v = sub.arm; break;
          case DesignColumn::Role::treat_time: v = sub.arm * h[j][col.basis_index]; break;
          case DesignColumn::Role::covariate: v = sub.covariates[col.covariate_index]; break;
          case DesignColumn::Role::covariate_time:
            v = sub.covariates[col.covariate_index] * h[j][col.basis_index];
            break;
        }
        d.X(r, c) = v;
      }
    }
  }
  detail::rank_check(d.X, d.columns);
  return d;
}

// Responses matching build_design row order.
inline Eigen::VectorXd flatten_responses(const PseudoValueMatrix& pv) {
  const int n = static_cast<int>(pv.values.rows());
  const int M = static_cast<int>(pv.values.cols());
  Eigen::VectorXd y(static_cast<long>(n) * M);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < M; ++j) y[static_cast<long>(i) * M + j] = pv.values(i, j);
  return y;
}

}  // namespace rmst
