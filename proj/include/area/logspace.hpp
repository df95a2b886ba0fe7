#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace area {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

inline double log_sum_exp(std::span<const double> xs) {
  double hi = neg_inf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == neg_inf) return neg_inf;
  if (std::isinf(hi)) return hi;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

// Turns log-weights into probabilities in place and returns the log normalizer.
inline double softmax_inplace(std::span<double> xs) {
  double hi = neg_inf;
  for (double x : xs) hi = std::max(hi, x);
  double total = 0.0;
  for (double& x : xs) total += (x = std::exp(x - hi));
  for (double& x : xs) x /= total;
  return hi + std::log(total);
}

// sum_i w_i v_i for a probability vector w, anchored at min v so that equal
// values come out exactly.
inline double expect_anchored(std::span<const double> w, std::span<const double> v) {
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (w[i] > 0.0) lo = std::min(lo, v[i]);
  if (!std::isfinite(lo)) return lo == std::numeric_limits<double>::infinity() ? 0.0 : lo;
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (w[i] > 0.0) s += w[i] * (v[i] - lo);
  return lo + s;
}

// x*log(x) with the 0*log(0) = 0 convention.
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

inline double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) h -= xlogx(p);
  return h;
}

}  // namespace area
