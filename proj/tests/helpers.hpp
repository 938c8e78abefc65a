#pragma once

#include <tuple>
#include <vector>

#include "rmst/rng.hpp"
#include "rmst/survival.hpp"

namespace testutil {

struct Row {
  double time;
  int status;
  int arm;
};

inline rmst::SurvivalSample make_sample(const std::vector<Row>& rows) {
  rmst::SurvivalSample s;
  for (const Row& r : rows) s.subjects.push_back({r.time, r.status == 1, r.arm, {}});
  return s;
}

// Two-arm sample with exponential events and uniform censoring, keyed so
// every call with the same arguments reproduces the same data.
inline rmst::SurvivalSample random_sample(int n_per_arm, std::uint64_t seed,
                                          double rate0 = 0.4, double rate1 = 0.25,
                                          double censor_hi = 6.0) {
  rmst::SurvivalSample s;
  for (int arm = 0; arm < 2; ++arm) {
    const double rate = arm == 0 ? rate0 : rate1;
    for (int i = 0; i < n_per_arm; ++i) {
      rmst::Rng rng = rmst::make_stream(seed, static_cast<std::uint64_t>(arm),
                                        static_cast<std::uint64_t>(i) + 1);
      const double t = -std::log(rng.uniform()) / rate;
      const double c = censor_hi > 0.0 ? censor_hi * rng.uniform() : rmst::kInf;
      s.subjects.push_back({std::min(t, c), t <= c, arm, {}});
    }
  }
  return s;
}

}  // namespace testutil
