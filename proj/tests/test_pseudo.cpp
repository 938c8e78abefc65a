#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "rmst/pseudo.hpp"

using testutil::make_sample;
using testutil::random_sample;

namespace {

rmst::RestrictionGrid grid_of(std::vector<double> taus) {
  rmst::RestrictionGrid g;
  g.taus = std::move(taus);
  return g;
}

}  // namespace

TEST_CASE("without censoring pseudo-values are the truncated times") {
  const auto s = make_sample({{1.0, 1, 0}, {2.0, 1, 0}, {3.0, 1, 0}});
  const rmst::PseudoValueMatrix pv = rmst::pseudo_values(s, grid_of({2.5}));
  REQUIRE(pv.values(0, 0) == Catch::Approx(1.0).margin(1e-10));
  REQUIRE(pv.values(1, 0) == Catch::Approx(2.0).margin(1e-10));
  REQUIRE(pv.values(2, 0) == Catch::Approx(2.5).margin(1e-10));

  const rmst::SurvivalSample big = random_sample(30, 21, 0.4, 0.25, 0.0);
  const double tau = 2.0;
  const rmst::PseudoValueMatrix pv2 = rmst::pseudo_values(big, grid_of({tau}));
  for (std::size_t i = 0; i < big.size(); ++i)
    REQUIRE(pv2.values(static_cast<int>(i), 0) ==
            Catch::Approx(std::min(big.subjects[i].time, tau)).margin(1e-10));
}

TEST_CASE("two-subject jackknife matches the hand calculation") {
  const auto s = make_sample({{1.0, 1, 0}, {2.0, 0, 0}});
  // Full curve drops to 1/2 at t=1; leave-one-out curves are flat 1 and a
  // drop to 0, so at tau=1 the pseudo-values are 2*1 - 1 = 1 for both.
  const rmst::PseudoValueMatrix at1 = rmst::pseudo_values(s, grid_of({1.0}));
  REQUIRE(at1.values(0, 0) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(at1.values(1, 0) == Catch::Approx(1.0).margin(1e-12));

  // tau=1.5 is beyond the last event, so the strict path refuses and the
  // extension path reproduces 2*1.25 - 1.5 = 1.0 and 2*1.25 - 1.0 = 1.5.
  REQUIRE_THROWS_WITH(rmst::pseudo_values(s, grid_of({1.5})),
                      Catch::Matchers::ContainsSubstring("beyond last event"));
  const rmst::PseudoValueMatrix ext =
      rmst::pseudo_values(s, grid_of({1.5}), rmst::PseudoMethod::optimized, true);
  REQUIRE(ext.values(0, 0) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(ext.values(1, 0) == Catch::Approx(1.5).margin(1e-12));
  REQUIRE_FALSE(ext.warnings.empty());
}

TEST_CASE("pseudo-value columns average to the full-sample restricted mean") {
  const rmst::SurvivalSample s = random_sample(50, 31);
  const rmst::GridSelection sel = rmst::select_grid(s, 8);
  const rmst::PseudoValueMatrix pv = rmst::pseudo_values(s, sel.grid);
  const rmst::StepSurvivalCurve km = rmst::km_fit_pooled(s);
  for (std::size_t j = 0; j < sel.grid.size(); ++j) {
    const double col_mean = pv.values.col(static_cast<int>(j)).mean();
    REQUIRE(col_mean == Catch::Approx(rmst::rmst(km, sel.grid.taus[j]).value).margin(1e-10));
  }
}

TEST_CASE("leave-one-out shortcut agrees with rebuilding every curve") {
  rmst::SurvivalSample s = random_sample(45, 41);
  // Force heavy ties, including event/censoring ties at the same time.
  for (rmst::Subject& sub : s.subjects) sub.time = std::ceil(sub.time * 4.0) / 4.0;
  const rmst::GridSelection sel = rmst::select_grid(s, 10);
  const rmst::PseudoValueMatrix fast =
      rmst::pseudo_values(s, sel.grid, rmst::PseudoMethod::optimized);
  const rmst::PseudoValueMatrix slow = rmst::pseudo_values(s, sel.grid, rmst::PseudoMethod::naive);
  REQUIRE((fast.values - slow.values).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("restriction grid selection follows the event-time quantiles") {
  SECTION("fewer distinct events than requested falls back to them") {
    const auto s = make_sample({{1.0, 1, 0}, {1.0, 1, 0}, {2.0, 1, 0}, {2.0, 0, 0}});
    const rmst::GridSelection sel = rmst::select_grid(s, 5);
    REQUIRE(sel.grid.taus == std::vector<double>{1.0, 2.0});
    REQUIRE_FALSE(sel.warnings.empty());
  }

  SECTION("single point sits at the 99th percentile of event times") {
    const rmst::SurvivalSample s = random_sample(100, 51);
    std::vector<double> events;
    for (const rmst::Subject& sub : s.subjects)
      if (sub.event) events.push_back(sub.time);
    std::sort(events.begin(), events.end());
    const rmst::GridSelection sel = rmst::select_grid(s, 1);
    REQUIRE(sel.grid.taus.size() == 1);
    REQUIRE(sel.grid.taus[0] == Catch::Approx(rmst::quantile_type7(events, 0.99)).margin(1e-12));
  }

  SECTION("default spacing is even in probability up to the 99th percentile") {
    const rmst::SurvivalSample s = random_sample(200, 61);
    std::vector<double> events;
    for (const rmst::Subject& sub : s.subjects)
      if (sub.event) events.push_back(sub.time);
    std::sort(events.begin(), events.end());
    const int m = 16;
    const rmst::GridSelection sel = rmst::select_grid(s, m);
    REQUIRE(sel.grid.taus.size() == static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) {
      const double p = 0.99 * k / (m - 1);
      REQUIRE(sel.grid.taus[k] == Catch::Approx(rmst::quantile_type7(events, p)).margin(1e-12));
    }
  }

  SECTION("oversized requests are capped with a warning") {
    const rmst::SurvivalSample s = random_sample(200, 71);
    const rmst::GridSelection sel = rmst::select_grid(s, 25);
    REQUIRE(sel.grid.taus.size() <= 20);
    bool capped = false;
    for (const std::string& w : sel.warnings) capped = capped || w.find("capped") != std::string::npos;
    REQUIRE(capped);
  }
}

TEST_CASE("restriction grid validation") {
  REQUIRE_THROWS_AS(grid_of({}).validate(), rmst::InvalidInput);
  REQUIRE_THROWS_AS(grid_of({1.0, 1.0}).validate(), rmst::InvalidInput);
  REQUIRE_THROWS_AS(grid_of({2.0, 1.0}).validate(), rmst::InvalidInput);
  REQUIRE_THROWS_AS(grid_of({-1.0, 1.0}).validate(), rmst::InvalidInput);
  std::vector<double> too_many(31);
  for (int i = 0; i < 31; ++i) too_many[i] = i + 1.0;
  REQUIRE_THROWS_AS(grid_of(too_many).validate(), rmst::InvalidInput);
  REQUIRE_NOTHROW(grid_of({0.5, 1.0, 4.0}).validate());
}

TEST_CASE("arm-stratified pseudo-values jackknife each arm against itself") {
  const rmst::SurvivalSample s = random_sample(35, 81);
  const rmst::GridSelection sel = rmst::select_grid(s, 6);
  const rmst::PseudoValueMatrix both = rmst::pseudo_values_by_arm(s, sel.grid);

  for (int arm = 0; arm < 2; ++arm) {
    rmst::SurvivalSample only;
    std::vector<int> rows;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s.subjects[i].arm == arm) {
        only.subjects.push_back(s.subjects[i]);
        rows.push_back(static_cast<int>(i));
      }
    const rmst::PseudoValueMatrix single =
        rmst::pseudo_values(only, sel.grid, rmst::PseudoMethod::optimized, true);
    for (std::size_t k = 0; k < rows.size(); ++k)
      for (std::size_t j = 0; j < sel.grid.size(); ++j)
        REQUIRE(both.values(rows[k], static_cast<int>(j)) ==
                single.values(static_cast<int>(k), static_cast<int>(j)));

    // Column means per arm recover that arm's Kaplan-Meier restricted mean,
    // which is what makes the saturated model reproduce the plug-in exactly.
    const rmst::StepSurvivalCurve km = rmst::km_fit(s, arm);
    for (std::size_t j = 0; j < sel.grid.size(); ++j) {
      double mean = 0.0;
      for (int r : rows) mean += both.values(r, static_cast<int>(j));
      mean /= static_cast<double>(rows.size());
      REQUIRE(mean == Catch::Approx(rmst::rmst(km, sel.grid.taus[j]).value).margin(1e-10));
    }
  }
}

TEST_CASE("stratified path warns when one arm needs the constant extension") {
  rmst::SurvivalSample s;
  // Arm 0 has events out to 10; arm 1 stops observing at 2.
  for (int i = 0; i < 12; ++i) s.subjects.push_back({0.5 + i, true, 0, {}});
  for (int i = 0; i < 12; ++i) s.subjects.push_back({0.25 + 0.15 * i, i % 3 != 2, 1, {}});
  rmst::RestrictionGrid g;
  g.taus = {1.0, 9.0};
  const rmst::PseudoValueMatrix pv = rmst::pseudo_values_by_arm(s, g);
  bool arm_warned = false;
  for (const std::string& w : pv.warnings)
    arm_warned = arm_warned || w.find("arm 1") != std::string::npos;
  REQUIRE(arm_warned);

  rmst::RestrictionGrid far;
  far.taus = {20.0};
  REQUIRE_THROWS_WITH(rmst::pseudo_values_by_arm(s, far),
                      Catch::Matchers::ContainsSubstring("beyond last event"));
}
