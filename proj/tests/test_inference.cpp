#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "rmst/pipeline.hpp"

using testutil::random_sample;

namespace {

rmst::RestrictionGrid grid_of(std::vector<double> taus) {
  rmst::RestrictionGrid g;
  g.taus = std::move(taus);
  return g;
}

// A fully specified fit on {intercept, time_b1, treat, treat_time_b1} whose
// covariance is small and hand-checkable.
struct TinyModel {
  rmst::GeeFit fit;
  rmst::SplineBasis basis;
};

TinyModel tiny_model() {
  TinyModel m;
  m.basis = rmst::natural_cubic_basis(grid_of({1.0, 3.0}), 1);
  m.fit.coefficients = Eigen::VectorXd(4);
  m.fit.coefficients << 0.5, 0.25, -0.4, 0.3;
  m.fit.robust_cov = Eigen::MatrixXd::Zero(4, 4);
  m.fit.robust_cov << 0.04, 0.01, 0.00, 0.00,
                      0.01, 0.02, 0.00, 0.01,
                      0.00, 0.00, 0.09, 0.02,
                      0.00, 0.01, 0.02, 0.05;
  m.fit.naive_cov = m.fit.robust_cov;
  m.fit.columns = {{rmst::DesignColumn::Role::intercept, "intercept", -1, -1},
                   {rmst::DesignColumn::Role::time, "time_b1", 0, -1},
                   {rmst::DesignColumn::Role::treat, "treat", -1, -1},
                   {rmst::DesignColumn::Role::treat_time, "treat_time_b1", 0, -1}};
  return m;
}

}  // namespace

TEST_CASE("difference curve is the treatment contrast with sandwich noise") {
  const TinyModel m = tiny_model();
  const std::vector<double> ts = {1.0, 2.0, 3.0};
  const rmst::RmstDiffCurve curve = rmst::diff_curve(m.fit, m.basis, ts);

  for (std::size_t g = 0; g < ts.size(); ++g) {
    const double h = ts[g] - 1.0;  // the df=1 natural basis is t - a
    const double want = -0.4 + 0.3 * h;
    REQUIRE(curve.estimate[g] == Catch::Approx(want).margin(1e-12));

    // Hand quadratic form over the {treat, treat_time} block.
    const double var = 0.09 + 2.0 * h * 0.02 + h * h * 0.05;
    REQUIRE(curve.se[g] == Catch::Approx(std::sqrt(var)).margin(1e-12));
    REQUIRE(curve.ci_lo[g] == Catch::Approx(want - 1.96 * std::sqrt(var)).margin(1e-12));
    REQUIRE(curve.ci_hi[g] == Catch::Approx(want + 1.96 * std::sqrt(var)).margin(1e-12));

    // Contrast row: zero on baseline columns, one on treat, basis on the
    // interaction.
    REQUIRE(curve.contrast(static_cast<int>(g), 0) == 0.0);
    REQUIRE(curve.contrast(static_cast<int>(g), 1) == 0.0);
    REQUIRE(curve.contrast(static_cast<int>(g), 2) == 1.0);
    REQUIRE(curve.contrast(static_cast<int>(g), 3) == Catch::Approx(h).margin(1e-12));
  }

  const std::vector<double> base = rmst::baseline_curve(m.fit, m.basis, ts);
  for (std::size_t g = 0; g < ts.size(); ++g)
    REQUIRE(base[g] == Catch::Approx(0.5 + 0.25 * (ts[g] - 1.0)).margin(1e-12));
}

TEST_CASE("evaluation beyond the restriction window is refused unless allowed") {
  const TinyModel m = tiny_model();
  REQUIRE_THROWS_WITH(rmst::diff_curve(m.fit, m.basis, {0.5}),
                      Catch::Matchers::ContainsSubstring("outside the restriction grid"));
  REQUIRE_THROWS_AS(rmst::diff_curve(m.fit, m.basis, {3.5}), rmst::InvalidInput);
  const rmst::RmstDiffCurve allowed = rmst::diff_curve(m.fit, m.basis, {3.5}, true);
  REQUIRE(allowed.warnings.size() == 1);
  REQUIRE(allowed.estimate[0] == Catch::Approx(-0.4 + 0.3 * 2.5).margin(1e-12));
}

TEST_CASE("saturated indicator model reproduces the plug-in differences exactly") {
  const rmst::SurvivalSample s = random_sample(60, 201);
  rmst::AnalysisOptions opt;
  opt.grid_m = 10;
  opt.basis = rmst::BasisKind::indicator;
  opt.with_band = false;
  const rmst::AnalysisResult res = rmst::run_analysis(s, opt);

  const std::vector<double> plug = rmst::rmst_diff_plugin(s, res.grid.taus);
  REQUIRE(res.curve.grid == res.grid.taus);
  for (std::size_t j = 0; j < plug.size(); ++j)
    REQUIRE(res.curve.estimate[j] == Catch::Approx(plug[j]).margin(1e-10));

  const rmst::StepSurvivalCurve km0 = rmst::km_fit(s, 0);
  for (std::size_t j = 0; j < res.grid.size(); ++j)
    REQUIRE(res.baseline[j] ==
            Catch::Approx(rmst::rmst(km0, res.grid.taus[j]).value).margin(1e-10));
}

TEST_CASE("single-point critical value is the normal quantile") {
  const TinyModel m = tiny_model();
  rmst::RmstDiffCurve curve = rmst::diff_curve(m.fit, m.basis, {2.0});
  rmst::simultaneous_band(curve, m.fit, 0.05, 200000, 7);
  REQUIRE(curve.critical_value == Catch::Approx(1.96).margin(0.02));
  REQUIRE(curve.band_lo[0] == Catch::Approx(curve.estimate[0] -
                                            curve.critical_value * curve.se[0]).margin(1e-12));

  // A duplicated evaluation point is perfectly correlated with the first, so
  // the maximum is unchanged and the critical value stays at the quantile.
  rmst::RmstDiffCurve dup = rmst::diff_curve(m.fit, m.basis, {2.0, 2.0});
  rmst::simultaneous_band(dup, m.fit, 0.05, 200000, 7);
  REQUIRE(dup.critical_value == Catch::Approx(1.96).margin(0.03));
}

TEST_CASE("band contains the pointwise interval at every grid point") {
  const rmst::SurvivalSample s = random_sample(80, 211);
  rmst::AnalysisOptions opt;
  opt.grid_m = 12;
  opt.fixed_df = 3;
  opt.band_points = 25;
  opt.band_draws = 50000;
  opt.seed = 3;
  const rmst::AnalysisResult res = rmst::run_analysis(s, opt);

  REQUIRE(res.curve.critical_value > 1.96 - 0.02);
  for (std::size_t g = 0; g < res.curve.grid.size(); ++g) {
    REQUIRE(res.curve.band_lo[g] <= res.curve.ci_lo[g] + 1e-12);
    REQUIRE(res.curve.band_hi[g] >= res.curve.ci_hi[g] - 1e-12);
  }
}

TEST_CASE("band draws are reproducible and respect the floor") {
  const TinyModel m = tiny_model();
  rmst::RmstDiffCurve a = rmst::diff_curve(m.fit, m.basis, {1.0, 1.5, 2.0, 3.0});
  rmst::RmstDiffCurve b = a;
  rmst::simultaneous_band(a, m.fit, 0.05, 20000, 42);
  rmst::simultaneous_band(b, m.fit, 0.05, 20000, 42);
  REQUIRE(a.critical_value == b.critical_value);
  REQUIRE(a.band_lo == b.band_lo);
  REQUIRE(a.band_hi == b.band_hi);

  rmst::RmstDiffCurve c = rmst::diff_curve(m.fit, m.basis, {1.0, 1.5, 2.0, 3.0});
  rmst::simultaneous_band(c, m.fit, 0.05, 20000, 43);
  REQUIRE(c.critical_value != a.critical_value);

  REQUIRE_THROWS_AS(rmst::simultaneous_band(c, m.fit, 0.05, 5000, 1), rmst::InvalidInput);
}

TEST_CASE("scaling the response scales the band linearly") {
  const TinyModel m = tiny_model();
  const double c = 12.5;
  TinyModel scaled = m;
  scaled.fit.coefficients *= c;
  scaled.fit.robust_cov *= c * c;
  scaled.fit.naive_cov *= c * c;

  rmst::RmstDiffCurve base = rmst::diff_curve(m.fit, m.basis, {1.0, 2.0, 3.0});
  rmst::RmstDiffCurve big = rmst::diff_curve(scaled.fit, scaled.basis, {1.0, 2.0, 3.0});
  rmst::simultaneous_band(base, m.fit, 0.05, 20000, 5);
  rmst::simultaneous_band(big, scaled.fit, 0.05, 20000, 5);

  REQUIRE(big.critical_value == Catch::Approx(base.critical_value).margin(1e-8));
  for (std::size_t g = 0; g < base.grid.size(); ++g) {
    REQUIRE(big.estimate[g] == Catch::Approx(c * base.estimate[g]).margin(1e-10));
    REQUIRE(big.band_lo[g] == Catch::Approx(c * base.band_lo[g]).margin(1e-8));
    REQUIRE(big.band_hi[g] == Catch::Approx(c * base.band_hi[g]).margin(1e-8));
  }
}

TEST_CASE("band coverage bookkeeping") {
  const TinyModel m = tiny_model();
  rmst::RmstDiffCurve curve = rmst::diff_curve(m.fit, m.basis, {1.0, 2.0, 3.0});
  rmst::simultaneous_band(curve, m.fit, 0.05, 20000, 9);
  REQUIRE(rmst::band_covers(curve, curve.estimate));
  std::vector<double> outside = curve.estimate;
  outside[1] = curve.band_hi[1] + 1.0;
  REQUIRE_FALSE(rmst::band_covers(curve, outside));
}
