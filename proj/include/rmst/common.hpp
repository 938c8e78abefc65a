#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rmst {

// Base error for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user input: malformed data, invalid options, violated preconditions.
struct InvalidInput : Error {
  explicit InvalidInput(const std::string& msg) : Error(msg) {}
};

// Numerical failure: non-convergence, singular systems, calibration failure.
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Linear-interpolation quantile on a sorted vector (the common "type 7" rule:
// h = (n-1)p, interpolate between floor(h) and floor(h)+1).
inline double quantile_type7(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InvalidInput("quantile of empty vector");
  if (p <= 0.0) return sorted.front();
  if (p >= 1.0) return sorted.back();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= sorted.size() || frac == 0.0) return sorted[lo];
  if (std::isinf(sorted[lo])) return sorted[lo];
  if (std::isinf(sorted[lo + 1])) return sorted[lo + 1];
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {a};
  std::vector<double> out(n);
  const double step = (b - a) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = a + step * static_cast<double>(i);
  out.back() = b;
  return out;
}

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks so results
// depend only on i, never on the thread count; callers must write to
// preallocated, disjoint slots.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (n == 0) return;
  unsigned hw = threads > 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
  hw = static_cast<unsigned>(std::min<std::size_t>(hw, n));
  if (hw <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(hw);
  std::exception_ptr first_error;
  std::mutex mtx;
  const std::size_t chunk = (n + hw - 1) / hw;
  for (unsigned t = 0; t < hw; ++t) {
    const std::size_t lo = static_cast<std::size_t>(t) * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi]() {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> g(mtx);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rmst
