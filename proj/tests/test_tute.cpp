#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "rmst/simlab.hpp"
#include "rmst/tute.hpp"

using testutil::Row;
using testutil::make_sample;

namespace {

const double inf = std::numeric_limits<double>::infinity();

rmst::RmstDiffCurve hand_curve(std::vector<double> grid, std::vector<double> est,
                               std::vector<double> lo, std::vector<double> hi) {
  rmst::RmstDiffCurve c;
  c.grid = std::move(grid);
  c.estimate = std::move(est);
  c.ci_lo = std::move(lo);
  c.ci_hi = std::move(hi);
  return c;
}

// Two arms whose restricted-mean difference starts negative and recovers:
// arm 1 loses half its subjects early, then outlives arm 0's steady decline.
rmst::SurvivalSample crossing_sample() {
  return make_sample({{2, 1, 0}, {4, 1, 0}, {6, 1, 0}, {8, 1, 0},
                      {1, 1, 1}, {1.5, 1, 1}, {9, 1, 1}, {10, 1, 1}});
}

}  // namespace

TEST_CASE("root scan finds the first rebalancing time") {
  const rmst::TuteRoot r = rmst::tute_point([](double t) { return t * (t - 5.0); }, 0.01, 10.0);
  REQUIRE(r.departed);
  REQUIRE(r.sign == -1);
  REQUIRE(r.value == Catch::Approx(5.0).margin(1e-4));

  // Mirrored curve: same root, opposite departure side.
  const rmst::TuteRoot m = rmst::tute_point([](double t) { return t * (5.0 - t); }, 0.01, 10.0);
  REQUIRE(m.sign == 1);
  REQUIRE(m.value == Catch::Approx(r.value).margin(1e-6));
}

TEST_CASE("a curve that departs and never returns has an infinite root") {
  const rmst::TuteRoot r = rmst::tute_point([](double t) { return -1.0 - t; }, 0.01, 10.0);
  REQUIRE(r.departed);
  REQUIRE(r.sign == -1);
  REQUIRE(std::isinf(r.value));
}

TEST_CASE("a curve inside the tolerance never departs") {
  const rmst::TuteRoot r =
      rmst::tute_point([](double t) { return 0.5 * std::sin(t); }, 0.01, 10.0, 1.0);
  REQUIRE_FALSE(r.departed);
  REQUIRE(std::isinf(r.value));
  REQUIRE_THAT(r.warnings.at(0), Catch::Matchers::ContainsSubstring("indistinguishable"));
}

TEST_CASE("root scan input checks") {
  auto f = [](double t) { return t - 1.0; };
  REQUIRE_THROWS_AS(rmst::tute_point(f, 0.0, 10.0), rmst::InvalidInput);
  REQUIRE_THROWS_AS(rmst::tute_point(f, 2.0, 2.0), rmst::InvalidInput);
  REQUIRE_THROWS_AS(rmst::tute_point(f, 0.1, 10.0, 0.0, 7), rmst::InvalidInput);
}

TEST_CASE("interval inversion on a two-sided hand curve") {
  // Estimate crosses zero between 2 and 3 by linear interpolation at 2.5; the
  // interval edges cross at 2.4 and 2.6.
  const rmst::RmstDiffCurve c = hand_curve({1.0, 2.0, 3.0}, {-1.0, -1.0, 1.0},
                                           {-1.2, -1.2, 0.8}, {-0.8, -0.8, 1.2});
  const rmst::TuteEstimate e = rmst::tute_ci_band(c);
  REQUIRE(e.method == "model_band_inversion");
  REQUIRE(e.departed);
  REQUIRE(e.sign == -1);
  REQUIRE(e.point == Catch::Approx(2.5).margin(1e-12));
  REQUIRE(e.ci_lo == Catch::Approx(2.4).margin(1e-12));
  REQUIRE(e.ci_hi == Catch::Approx(2.6).margin(1e-12));
}

TEST_CASE("interval open at zero when the near edge never leaves it") {
  const rmst::RmstDiffCurve c = hand_curve({1.0, 2.0, 3.0}, {-1.0, -1.0, 1.0},
                                           {-3.0, -3.0, 0.5}, {0.5, 0.5, 1.5});
  const rmst::TuteEstimate e = rmst::tute_ci_band(c);
  REQUIRE(e.point == Catch::Approx(2.5).margin(1e-12));
  REQUIRE(e.ci_lo == 0.0);
  REQUIRE(e.ci_hi == Catch::Approx(2.0 + 3.0 / 3.5).margin(1e-12));
}

TEST_CASE("interval open above when the far edge never recovers") {
  const rmst::RmstDiffCurve c = hand_curve({1.0, 2.0, 3.0}, {-1.0, -1.0, 1.0},
                                           {-3.0, -3.0, -0.5}, {-0.5, -0.5, 1.5});
  const rmst::TuteEstimate e = rmst::tute_ci_band(c);
  REQUIRE(e.point == Catch::Approx(2.5).margin(1e-12));
  REQUIRE(e.ci_lo == Catch::Approx(2.25).margin(1e-12));
  REQUIRE(std::isinf(e.ci_hi));
}

TEST_CASE("interval pinned to the window end when the near edge excludes zero throughout") {
  const rmst::RmstDiffCurve c = hand_curve({1.0, 2.0, 3.0}, {-1.0, -1.0, -0.5},
                                           {-1.4, -1.4, -0.9}, {-0.6, -0.6, -0.1});
  const rmst::TuteEstimate e = rmst::tute_ci_band(c);
  REQUIRE(e.departed);
  REQUIRE(std::isinf(e.point));
  REQUIRE(e.ci_lo == 3.0);
  REQUIRE(std::isinf(e.ci_hi));
  bool open = false, window = false;
  for (const std::string& w : e.warnings) {
    if (w.find("lower limit open") != std::string::npos) open = true;
    if (w.find("no finite equipoise time") != std::string::npos) window = true;
  }
  REQUIRE(open);
  REQUIRE(window);
}

TEST_CASE("near edge departing after the point estimate leaves the lower limit at zero") {
  const rmst::RmstDiffCurve c = hand_curve({1.0, 2.0, 3.0, 4.0}, {-1.0, -1.0, 1.0, 1.0},
                                           {-2.0, -2.0, 0.5, -1.0}, {0.1, 0.2, 1.5, -0.2});
  const rmst::TuteEstimate e = rmst::tute_ci_band(c);
  REQUIRE(e.point == Catch::Approx(2.5).margin(1e-12));
  REQUIRE(e.ci_lo == 0.0);
}

TEST_CASE("a flat zero curve reports no departure") {
  const rmst::RmstDiffCurve c = hand_curve({1.0, 2.0, 3.0}, {0.0, 0.0, 0.0},
                                           {-0.0, -0.0, -0.0}, {0.0, 0.0, 0.0});
  const rmst::TuteEstimate e = rmst::tute_ci_band(c);
  REQUIRE_FALSE(e.departed);
  REQUIRE(std::isinf(e.point));
  REQUIRE(e.ci_lo == 0.0);
  REQUIRE(std::isinf(e.ci_hi));

  rmst::RmstDiffCurve bare;
  bare.grid = {1.0};
  bare.estimate = {0.5};
  REQUIRE_THROWS_WITH(rmst::tute_ci_band(bare),
                      Catch::Matchers::ContainsSubstring("pointwise limits"));
}

TEST_CASE("interval inversion on fitted data keeps the point inside the interval") {
  const rmst::ScenarioSpec s = rmst::ScenarioSpec::standard(2);
  const double c = rmst::calibrate_censoring(s);
  const rmst::SurvivalSample sample = rmst::simulate(s, 150, 77, 1, c);

  rmst::AnalysisOptions opt;
  opt.fixed_df = 3;
  opt.with_band = false;
  const rmst::AnalysisResult res = rmst::run_analysis(sample, opt);
  const rmst::TuteEstimate e = rmst::tute_ci_band(res.curve);
  REQUIRE(e.departed);
  REQUIRE(e.sign != 0);
  REQUIRE(e.ci_lo <= e.point);
  REQUIRE(e.point <= e.ci_hi);
}

TEST_CASE("bootstrap input checks") {
  rmst::BootstrapOptions opt;
  opt.n_boot = 199;
  opt.seed = 1;
  REQUIRE_THROWS_WITH(rmst::tute_ci_bootstrap(crossing_sample(), opt),
                      Catch::Matchers::ContainsSubstring("at least 200"));
}

TEST_CASE("degenerate bootstrap collapses onto the point estimate") {
  rmst::BootstrapOptions opt;
  opt.n_boot = 200;
  opt.seed = 5;
  opt.resample = false;
  const rmst::TuteEstimate e = rmst::tute_ci_bootstrap(crossing_sample(), opt);
  REQUIRE(e.method == "plugin_bootstrap");
  REQUIRE(e.departed);
  REQUIRE(e.sign == -1);
  REQUIRE(std::isfinite(e.point));
  REQUIRE(e.ci_lo == Catch::Approx(e.point).margin(1e-12));
  REQUIRE(e.ci_hi == Catch::Approx(e.point).margin(1e-12));
  REQUIRE(e.frac_infinite == 0.0);
}

TEST_CASE("model-based bootstrap reports its method and stays coherent") {
  const rmst::ScenarioSpec s = rmst::ScenarioSpec::standard(2);
  const double c = rmst::calibrate_censoring(s);
  const rmst::SurvivalSample sample = rmst::simulate(s, 60, 31, 2, c);

  rmst::BootstrapOptions opt;
  opt.n_boot = 200;
  opt.seed = 11;
  opt.resample = false;
  opt.estimator = rmst::BootstrapOptions::Estimator::model;
  opt.analysis.grid_m = 8;
  opt.analysis.fixed_df = 2;
  const rmst::TuteEstimate e = rmst::tute_ci_bootstrap(sample, opt);
  REQUIRE(e.method == "model_bootstrap");
  REQUIRE(e.ci_lo <= e.ci_hi);
  if (e.departed && std::isfinite(e.point)) {
    REQUIRE(e.ci_lo == Catch::Approx(e.point).margin(1e-12));
    REQUIRE(e.ci_hi == Catch::Approx(e.point).margin(1e-12));
  }
}

TEST_CASE("bootstrap is reproducible for a fixed seed") {
  const rmst::ScenarioSpec s = rmst::ScenarioSpec::standard(2);
  const double c = rmst::calibrate_censoring(s);
  const rmst::SurvivalSample sample = rmst::simulate(s, 80, 19, 3, c);

  rmst::BootstrapOptions opt;
  opt.n_boot = 200;
  opt.seed = 23;
  const rmst::TuteEstimate a = rmst::tute_ci_bootstrap(sample, opt);
  const rmst::TuteEstimate b = rmst::tute_ci_bootstrap(sample, opt);
  REQUIRE(a.point == b.point);
  REQUIRE(a.ci_lo == b.ci_lo);
  REQUIRE(a.ci_hi == b.ci_hi);
  REQUIRE(a.frac_infinite == b.frac_infinite);
  REQUIRE(a.ci_lo <= a.ci_hi);
}

TEST_CASE("dominant arm leaves the upper limit open with a warning") {
  // Arm 1 strictly outlives arm 0, so no replicate ever rebalances.
  const rmst::SurvivalSample sample =
      make_sample({{1, 1, 0}, {2, 1, 0}, {3, 1, 0}, {4, 1, 0}, {5, 1, 0},
                   {6, 1, 1}, {7, 1, 1}, {8, 1, 1}, {9, 1, 1}, {10, 1, 1}});
  rmst::BootstrapOptions opt;
  opt.n_boot = 200;
  opt.seed = 3;
  const rmst::TuteEstimate e = rmst::tute_ci_bootstrap(sample, opt);
  REQUIRE(e.frac_infinite > 0.05);
  REQUIRE(std::isinf(e.ci_hi));
  bool warned = false;
  for (const std::string& w : e.warnings)
    if (w.find("no evidence for a finite equipoise time") != std::string::npos) warned = true;
  REQUIRE(warned);
}

TEST_CASE("bootstrap aborts when too many replicates fail") {
  // Arm 0 has a single event among many censored subjects, so about a third
  // of the resamples contain no event at all and cannot be fitted.
  std::vector<Row> rows;
  for (int i = 0; i < 19; ++i) rows.push_back({1.0 + 0.1 * i, 0, 0});
  rows.push_back({2.0, 1, 0});
  for (int i = 0; i < 10; ++i) rows.push_back({1.0 + 0.3 * i, 1, 1});
  rmst::BootstrapOptions opt;
  opt.n_boot = 200;
  opt.seed = 7;
  REQUIRE_THROWS_WITH(rmst::tute_ci_bootstrap(make_sample(rows), opt),
                      Catch::Matchers::ContainsSubstring("failure rate above 10%"));
}

TEST_CASE("survival crossing detection") {
  const rmst::SurvivalCrossing x = rmst::km_crossing(crossing_sample());
  REQUIRE(x.found);
  REQUIRE(x.time == Catch::Approx(6.0).margin(1e-12));
  REQUIRE(x.surv0 == Catch::Approx(0.25).margin(1e-12));
  REQUIRE(x.surv1 == Catch::Approx(0.5).margin(1e-12));

  const rmst::SurvivalCrossing none = rmst::km_crossing(
      make_sample({{1, 1, 0}, {2, 1, 0}, {3, 1, 0}, {4, 1, 1}, {5, 1, 1}, {6, 1, 1}}));
  REQUIRE_FALSE(none.found);
  REQUIRE(std::isinf(none.time));
}
