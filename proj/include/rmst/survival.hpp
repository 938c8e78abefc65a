#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "rmst/common.hpp"

namespace rmst {

struct Subject {
  double time = 0.0;
  bool event = false;
  int arm = 0;
  std::vector<double> covariates;
};

// Right-censored two-arm sample. Arms are coded 0/1; covariates, when
// present, must have the same length for every subject.
struct SurvivalSample {
  std::vector<Subject> subjects;

  std::size_t size() const { return subjects.size(); }

  std::size_t n_covariates() const {
    return subjects.empty() ? 0 : subjects.front().covariates.size();
  }

  void validate() const {
    if (subjects.size() < 2) throw InvalidInput("sample needs at least 2 subjects");
    const std::size_t ncov = subjects.front().covariates.size();
    bool event_in_arm[2] = {false, false};
    bool seen_arm[2] = {false, false};
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      const Subject& s = subjects[i];
      if (!(s.time >= 0.0) || !std::isfinite(s.time))
        throw InvalidInput("subject " + std::to_string(i + 1) + ": time must be non-negative and finite");
      if (s.arm != 0 && s.arm != 1)
        throw InvalidInput("subject " + std::to_string(i + 1) + ": arm must be coded 0 or 1");
      if (s.covariates.size() != ncov)
        throw InvalidInput("subject " + std::to_string(i + 1) + ": inconsistent covariate count");
      for (double v : s.covariates)
        if (!std::isfinite(v))
          throw InvalidInput("subject " + std::to_string(i + 1) + ": non-finite covariate");
      seen_arm[s.arm] = true;
      if (s.event) event_in_arm[s.arm] = true;
    }
    for (int a = 0; a < 2; ++a)
      if (seen_arm[a] && !event_in_arm[a])
        throw InvalidInput("arm " + std::to_string(a) + " has no events");
  }

  // Largest event time, over the whole sample or one arm (-1 = pooled).
  double max_event_time(int arm = -1) const {
    double m = -kInf;
    for (const Subject& s : subjects)
      if (s.event && (arm < 0 || s.arm == arm)) m = std::max(m, s.time);
    return m;
  }
};

// Kaplan-Meier curve as a right-continuous step function. jump_times are the
// distinct event times; survival[k] is the value on [jump_times[k],
// jump_times[k+1]). Before the first jump the curve is 1. Beyond the last
// observed time the curve is extended at its last value; rmst() flags that.
struct StepSurvivalCurve {
  std::vector<double> jump_times;
  std::vector<double> survival;
  std::vector<int> at_risk;
  std::vector<int> events;
  double max_observed_time = 0.0;
  int n = 0;

  double last_survival() const { return survival.empty() ? 1.0 : survival.back(); }

  double evaluate(double t) const {
    if (jump_times.empty() || t < jump_times.front()) return 1.0;
    const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    return survival[static_cast<std::size_t>(it - jump_times.begin()) - 1];
  }
};

namespace detail {

// Product-limit fit over (time, event) pairs; ties are processed with events
// before censorings, i.e. subjects censored at t are still at risk for the
// event at t.
inline StepSurvivalCurve km_from_pairs(std::vector<std::pair<double, bool>>& obs) {
  if (obs.empty()) throw InvalidInput("no observations in arm");
  std::sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second > b.second;
  });
  StepSurvivalCurve c;
  c.n = static_cast<int>(obs.size());
  c.max_observed_time = obs.back().first;
  double s = 1.0;
  std::size_t i = 0;
  int remaining = c.n;
  while (i < obs.size()) {
    const double t = obs[i].first;
    int d = 0, m = 0;
    while (i < obs.size() && obs[i].first == t) {
      if (obs[i].second) ++d;
      ++m;
      ++i;
    }
    if (d > 0) {
      s *= 1.0 - static_cast<double>(d) / static_cast<double>(remaining);
      c.jump_times.push_back(t);
      c.survival.push_back(s);
      c.at_risk.push_back(remaining);
      c.events.push_back(d);
    }
    remaining -= m;
  }
  return c;
}

}  // namespace detail

// Kaplan-Meier estimate for one arm.
inline StepSurvivalCurve km_fit(const SurvivalSample& sample, int arm) {
  std::vector<std::pair<double, bool>> obs;
  obs.reserve(sample.size());
  for (const Subject& s : sample.subjects)
    if (s.arm == arm) obs.emplace_back(s.time, s.event);
  if (obs.empty()) throw InvalidInput("no observations in arm " + std::to_string(arm));
  return detail::km_from_pairs(obs);
}

// Kaplan-Meier estimate over every subject regardless of arm.
inline StepSurvivalCurve km_fit_pooled(const SurvivalSample& sample) {
  std::vector<std::pair<double, bool>> obs;
  obs.reserve(sample.size());
  for (const Subject& s : sample.subjects) obs.emplace_back(s.time, s.event);
  return detail::km_from_pairs(obs);
}

struct RmstValue {
  double value = 0.0;
  // True when tau exceeds the last observed time while the curve is still
  // positive there, i.e. the constant extension actually added area that the
  // data cannot support.
  bool extrapolated = false;
};

// Restricted mean survival time: the exact integral of the step function on
// [0, tau]. No quadrature is involved.
inline RmstValue rmst(const StepSurvivalCurve& curve, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw InvalidInput("restriction time must be positive and finite");
  double area = 0.0;
  double prev = 0.0;
  double s = 1.0;
  for (std::size_t k = 0; k < curve.jump_times.size(); ++k) {
    const double t = curve.jump_times[k];
    if (t >= tau) break;
    area += s * (t - prev);
    prev = t;
    s = curve.survival[k];
  }
  area += s * (tau - prev);
  RmstValue out;
  out.value = area;
  out.extrapolated = tau > curve.max_observed_time && curve.last_survival() > 0.0;
  return out;
}

// Arm-wise plug-in RMST differences (arm 1 minus arm 0) on a grid of
// restriction times. Refuses extrapolated values unless allow_extension,
// in which case the constant-extension value is used.
inline std::vector<double> rmst_diff_plugin(const SurvivalSample& sample,
                                            const std::vector<double>& grid,
                                            bool allow_extension = false) {
  const StepSurvivalCurve k0 = km_fit(sample, 0);
  const StepSurvivalCurve k1 = km_fit(sample, 1);
  std::vector<double> out;
  out.reserve(grid.size());
  for (double tau : grid) {
    const RmstValue r0 = rmst(k0, tau);
    const RmstValue r1 = rmst(k1, tau);
    if ((r0.extrapolated || r1.extrapolated) && !allow_extension) {
      std::ostringstream msg;
      msg << "restricted mean at t=" << tau << " extrapolates beyond the observed data in arm "
          << (r0.extrapolated ? 0 : 1);
      throw InvalidInput(msg.str());
    }
    out.push_back(r1.value - r0.value);
  }
  return out;
}

struct LoadedSample {
  SurvivalSample sample;
  std::vector<std::string> covariate_names;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  for (std::string& f : fields) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = (b == std::string::npos) ? std::string() : f.substr(b, e - b + 1);
  }
  return fields;
}

inline double parse_number(const std::string& s, std::size_t line_no, const std::string& col) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidInput("line " + std::to_string(line_no) + ": cannot parse '" + s +
                       "' in column '" + col + "'");
  }
}

}  // namespace detail

// Reads a sample from CSV with header "time,status,arm[,covariate...]".
// status is 1 for an event, 0 for censoring.
inline LoadedSample read_sample_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("empty input: expected a CSV header");
  const std::vector<std::string> header = detail::split_csv_line(line);
  const char* required[3] = {"time", "status", "arm"};
  for (std::size_t k = 0; k < 3; ++k)
    if (header.size() <= k || header[k] != required[k])
      throw InvalidInput(std::string("CSV header must start with 'time,status,arm'; ") +
                         "missing or misplaced column '" + required[k] + "'");
  LoadedSample out;
  out.covariate_names.assign(header.begin() + 3, header.end());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> f = detail::split_csv_line(line);
    if (f.size() != header.size())
      throw InvalidInput("line " + std::to_string(line_no) + ": expected " +
                         std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    Subject s;
    s.time = detail::parse_number(f[0], line_no, "time");
    const double st = detail::parse_number(f[1], line_no, "status");
    if (st != 0.0 && st != 1.0)
      throw InvalidInput("line " + std::to_string(line_no) + ": status must be 0 or 1");
    s.event = st == 1.0;
    const double arm = detail::parse_number(f[2], line_no, "arm");
    if (arm != 0.0 && arm != 1.0)
      throw InvalidInput("line " + std::to_string(line_no) + ": arm must be 0 or 1");
    s.arm = static_cast<int>(arm);
    for (std::size_t k = 3; k < f.size(); ++k)
      s.covariates.push_back(detail::parse_number(f[k], line_no, header[k]));
    out.sample.subjects.push_back(std::move(s));
  }
  out.sample.validate();
  return out;
}

inline LoadedSample read_sample_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open input file '" + path + "'");
  return read_sample_csv(in);
}

}  // namespace rmst
