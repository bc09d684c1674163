#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace finmart {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data.data() + r * cols, cols);
  }
};

// The artifact's stand-in for (Omega, F, P): M simulated sample paths over a
// finite horizon. Immutable once built; all event evaluation is read-only.
struct PathEnsemble {
  Matrix values;  // [paths x horizon+1]

  std::size_t paths() const { return values.rows; }
  std::size_t horizon() const { return values.cols == 0 ? 0 : values.cols - 1; }
  std::span<const double> path(std::size_t p) const { return values.row(p); }
};

// A bounded-horizon event over a single path. `max_index` declares how far
// into the path the predicate reads; evaluating it against a shorter
// ensemble is an error rather than a silent truncation.
struct PathEvent {
  std::size_t max_index;
  std::function<bool(std::span<const double>)> holds;
};

struct EmpiricalVerdict {
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 1.0;
  double bound = 1.0;
  bool pass = false;
  bool ci_mode = false;  // true when pass was decided on the Wilson upper CI
};

inline double empirical_prob(const PathEnsemble& ens, const PathEvent& event) {
  if (event.max_index > ens.horizon())
    throw std::out_of_range("empirical_prob: event reads index " + std::to_string(event.max_index) +
                            " beyond horizon " + std::to_string(ens.horizon()));
  if (ens.paths() == 0) throw std::invalid_argument("empirical_prob: empty ensemble");
  std::size_t hits = 0;
  for (std::size_t p = 0; p < ens.paths(); ++p)
    if (event.holds(ens.path(p))) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ens.paths());
}

inline std::size_t count_paths(const PathEnsemble& ens, const PathEvent& event) {
  if (event.max_index > ens.horizon())
    throw std::out_of_range("count_paths: event out of horizon");
  std::size_t hits = 0;
  for (std::size_t p = 0; p < ens.paths(); ++p)
    if (event.holds(ens.path(p))) ++hits;
  return hits;
}

inline double empirical_mean(const PathEnsemble& ens,
                             const std::function<double(std::span<const double>)>& functional) {
  if (ens.paths() == 0) throw std::invalid_argument("empirical_mean: empty ensemble");
  double acc = 0.0;
  for (std::size_t p = 0; p < ens.paths(); ++p) acc += functional(ens.path(p));
  return acc / static_cast<double>(ens.paths());
}

// Inverse standard normal CDF (Acklam's rational approximation, ~1e-9).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p outside (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01, -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double plow = 0.02425;
  double q, r, x;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    q = p - 0.5;
    r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  return x;
}

struct Interval {
  double low;
  double high;
};

// Wilson score interval for a binomial proportion.
inline Interval wilson_interval(std::size_t successes, std::size_t trials, double confidence) {
  if (trials == 0) throw std::invalid_argument("wilson_interval: trials must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw std::invalid_argument("wilson_interval: confidence outside (0,1)");
  const double z = normal_quantile(0.5 + confidence / 2.0);
  const double n = static_cast<double>(trials);
  const double phat = static_cast<double>(successes) / n;
  const double z2n = z * z / n;
  const double center = (phat + z2n / 2.0) / (1.0 + z2n);
  const double half = z * std::sqrt(phat * (1.0 - phat) / n + z * z / (4.0 * n * n)) / (1.0 + z2n);
  double lo = center - half;
  double hi = center + half;
  // The interval endpoints are exactly 0 and 1 at the boundary proportions;
  // don't let rounding in center/half leak through.
  if (successes == 0) lo = 0.0;
  if (successes == trials) hi = 1.0;
  if (lo < 0.0) lo = 0.0;
  if (hi > 1.0) hi = 1.0;
  return {lo, hi};
}

// Verdict for an empirical claim "P(bad) < bound". The default check is the
// point estimate; the Wilson upper CI check is the stricter opt-in mode.
inline EmpiricalVerdict make_verdict(std::size_t hits, std::size_t trials, double bound,
                                     bool use_ci = false, double confidence = 0.95) {
  EmpiricalVerdict v;
  v.estimate = static_cast<double>(hits) / static_cast<double>(trials);
  Interval ci = wilson_interval(hits, trials, confidence);
  v.ci_low = ci.low;
  v.ci_high = ci.high;
  v.bound = bound;
  v.ci_mode = use_ci;
  v.pass = use_ci ? (v.ci_high < bound) : (v.estimate < bound);
  return v;
}

}  // namespace finmart
