#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "finmart/ensemble.hpp"
#include "finmart/rng.hpp"

namespace finmart {

// Per-path evolving state of a generator-defined adapted process. cond_mean
// must be the exact mean of advance()'s output distribution at the current
// state; the test suite validates this statistically for every canonical
// generator.
class PathState {
 public:
  virtual ~PathState() = default;
  virtual double value() const = 0;
  virtual double cond_mean() const = 0;
  virtual void advance(RandomStream& rng) = 0;
};

class PathGenerator {
 public:
  virtual ~PathGenerator() = default;
  virtual std::string name() const = 0;
  virtual bool nonnegative() const = 0;
  virtual std::unique_ptr<PathState> start() const = 0;
};

using GeneratorPtr = std::shared_ptr<const PathGenerator>;

struct SimResult {
  PathEnsemble ensemble;     // [M x N+1]
  Matrix cond_mean_trace;    // [M x N], entry (p, n) = E[X_{n+1} | F_n] on path p
};

inline SimResult simulate(const PathGenerator& gen, std::size_t M, std::size_t N,
                          const RandomSource& src) {
  if (M < 1 || N < 1) throw std::invalid_argument("simulate: need M >= 1 and N >= 1");
  SimResult out;
  out.ensemble.values = Matrix(M, N + 1);
  out.cond_mean_trace = Matrix(M, N);
  for (std::size_t p = 0; p < M; ++p) {
    RandomStream rng = src.substream(p);
    auto state = gen.start();
    double x = state->value();
    for (std::size_t n = 0;; ++n) {
      if (!std::isfinite(x))
        throw std::runtime_error("simulate: generator '" + gen.name() + "' emitted non-finite value at path " +
                                 std::to_string(p) + ", step " + std::to_string(n));
      if (gen.nonnegative() && x < 0)
        throw std::runtime_error("simulate: generator '" + gen.name() + "' emitted a negative value at path " +
                                 std::to_string(p) + ", step " + std::to_string(n));
      out.ensemble.values.at(p, n) = x;
      if (n == N) break;
      out.cond_mean_trace.at(p, n) = state->cond_mean();
      state->advance(rng);
      x = state->value();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Canonical generators (each ships its analytic conditional mean)
// ---------------------------------------------------------------------------

namespace detail {

class PolyaState final : public PathState {
 public:
  PolyaState(double red, double blue) : red_(red), blue_(blue) {}
  double value() const override { return red_ / (red_ + blue_); }
  double cond_mean() const override { return value(); }  // classical urn martingale
  void advance(RandomStream& rng) override {
    if (rng.uniform() < value()) red_ += 1.0; else blue_ += 1.0;
  }
 private:
  double red_, blue_;
};

class PolyaGenerator final : public PathGenerator {
 public:
  PolyaGenerator(double r0, double b0) : r0_(r0), b0_(b0) {
    if (r0 < 0 || b0 < 0 || r0 + b0 <= 0) throw std::invalid_argument("polya_urn: empty urn");
  }
  std::string name() const override { return "polya_urn"; }
  bool nonnegative() const override { return true; }
  std::unique_ptr<PathState> start() const override {
    return std::make_unique<PolyaState>(r0_, b0_);
  }
 private:
  double r0_, b0_;
};

class MultiplicativeState final : public PathState {
 public:
  MultiplicativeState(double x, double theta) : x_(x), theta_(theta) {}
  double value() const override { return x_; }
  double cond_mean() const override { return theta_ * x_; }  // U uniform on [0, 2*theta]
  void advance(RandomStream& rng) override { x_ *= rng.uniform(0.0, 2.0 * theta_); }
 private:
  double x_, theta_;
};

class MultiplicativeGenerator final : public PathGenerator {
 public:
  MultiplicativeGenerator(double theta, double x0) : theta_(theta), x0_(x0) {
    if (theta < 0) throw std::invalid_argument("multiplicative: theta must be >= 0");
    if (x0 < 0) throw std::invalid_argument("multiplicative: x0 must be >= 0");
  }
  std::string name() const override { return "multiplicative"; }
  bool nonnegative() const override { return true; }
  std::unique_ptr<PathState> start() const override {
    return std::make_unique<MultiplicativeState>(x0_, theta_);
  }
 private:
  double theta_, x0_;
};

class RSCanonicalState final : public PathState {
 public:
  RSCanonicalState(double x, std::function<double(std::size_t)> chi,
                   std::function<double(std::size_t)> eta)
      : x_(x), chi_(std::move(chi)), eta_(std::move(eta)) {}
  double value() const override { return x_; }
  double cond_mean() const override { return (1.0 + chi_(n_)) * x_ + eta_(n_); }
  void advance(RandomStream& rng) override {
    double b = rng.bernoulli(0.5) ? 2.0 : 0.0;  // mean-one multiplier
    x_ = ((1.0 + chi_(n_)) * x_ + eta_(n_)) * b;
    ++n_;
  }
 private:
  double x_;
  std::size_t n_ = 0;
  std::function<double(std::size_t)> chi_, eta_;
};

class RSCanonicalGenerator final : public PathGenerator {
 public:
  RSCanonicalGenerator(std::function<double(std::size_t)> chi,
                       std::function<double(std::size_t)> eta, double x0)
      : chi_(std::move(chi)), eta_(std::move(eta)), x0_(x0) {
    if (x0 < 0) throw std::invalid_argument("rs_canonical: x0 must be >= 0");
  }
  std::string name() const override { return "rs_canonical"; }
  bool nonnegative() const override { return true; }
  std::unique_ptr<PathState> start() const override {
    return std::make_unique<RSCanonicalState>(x0_, chi_, eta_);
  }
 private:
  std::function<double(std::size_t)> chi_, eta_;
  double x0_;
};

class BoundedWalkState final : public PathState {
 public:
  BoundedWalkState(double x, double step, double lo, double hi)
      : x_(x), step_(step), lo_(lo), hi_(hi) {}
  double value() const override { return x_; }
  double cond_mean() const override {
    // A proposed move that would exit [lo, hi] is cancelled.
    double m = x_;
    if (x_ + step_ <= hi_) m += 0.5 * step_;
    if (x_ - step_ >= lo_) m -= 0.5 * step_;
    return m;
  }
  void advance(RandomStream& rng) override {
    double s = rng.bernoulli(0.5) ? step_ : -step_;
    double next = x_ + s;
    if (next >= lo_ && next <= hi_) x_ = next;
  }
 private:
  double x_, step_, lo_, hi_;
};

class BoundedWalkGenerator final : public PathGenerator {
 public:
  BoundedWalkGenerator(double x0, double step, double lo, double hi)
      : x0_(x0), step_(step), lo_(lo), hi_(hi) {
    if (!(step > 0)) throw std::invalid_argument("bounded_walk: step must be > 0");
    if (!(lo <= x0 && x0 <= hi)) throw std::invalid_argument("bounded_walk: x0 outside [lo, hi]");
  }
  std::string name() const override { return "bounded_walk"; }
  bool nonnegative() const override { return lo_ >= 0; }
  std::unique_ptr<PathState> start() const override {
    return std::make_unique<BoundedWalkState>(x0_, step_, lo_, hi_);
  }
 private:
  double x0_, step_, lo_, hi_;
};

class ConstantState final : public PathState {
 public:
  explicit ConstantState(double c) : c_(c) {}
  double value() const override { return c_; }
  double cond_mean() const override { return c_; }
  void advance(RandomStream&) override {}
 private:
  double c_;
};

class ConstantGenerator final : public PathGenerator {
 public:
  explicit ConstantGenerator(double c) : c_(c) {}
  std::string name() const override { return "constant"; }
  bool nonnegative() const override { return c_ >= 0; }
  std::unique_ptr<PathState> start() const override { return std::make_unique<ConstantState>(c_); }
 private:
  double c_;
};

}  // namespace detail

inline GeneratorPtr polya_urn(double r0, double b0) {
  return std::make_shared<detail::PolyaGenerator>(r0, b0);
}
inline GeneratorPtr multiplicative(double theta, double x0) {
  return std::make_shared<detail::MultiplicativeGenerator>(theta, x0);
}
inline GeneratorPtr rs_canonical(std::function<double(std::size_t)> chi,
                                 std::function<double(std::size_t)> eta, double x0) {
  return std::make_shared<detail::RSCanonicalGenerator>(std::move(chi), std::move(eta), x0);
}
inline GeneratorPtr bounded_walk(double x0, double step, double lo, double hi) {
  return std::make_shared<detail::BoundedWalkGenerator>(x0, step, lo, hi);
}
inline GeneratorPtr constant_process(double c) {
  return std::make_shared<detail::ConstantGenerator>(c);
}

// ---------------------------------------------------------------------------
// Verification against the finitary definitions
// ---------------------------------------------------------------------------

inline void check_trace_shape(const PathEnsemble& ens, const Matrix& trace, std::size_t N) {
  if (trace.rows != ens.paths() || trace.cols + 1 != ens.values.cols)
    throw std::invalid_argument("trace shape does not match ensemble");
  if (N > trace.cols) throw std::invalid_argument("N exceeds trace length");
}

// Per n < N, the empirical frequency of E[X_{n+1}|F_n] > X_n + eps, judged
// against lambda.
inline std::vector<EmpiricalVerdict> verify_finitary_supermartingale(
    const PathEnsemble& ens, const Matrix& trace, double lambda, double eps, std::size_t N,
    bool use_ci = false) {
  check_trace_shape(ens, trace, N);
  std::vector<EmpiricalVerdict> out;
  out.reserve(N);
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t hits = 0;
    for (std::size_t p = 0; p < ens.paths(); ++p)
      if (trace.at(p, n) > ens.values.at(p, n) + eps) ++hits;
    out.push_back(make_verdict(hits, ens.paths(), lambda, use_ci));
  }
  return out;
}

// Robbins-Siegmund variant: target (1+chi_n) X_n + eta_n + eps. The
// deterministic-schedule overload covers the canonical fixtures; the matrix
// overload is the explicit-matrix mode where adaptedness is the caller's
// declared responsibility.
inline std::vector<EmpiricalVerdict> verify_rs_process(const PathEnsemble& ens, const Matrix& trace,
                                                       const Matrix& eta, const Matrix& chi,
                                                       double lambda, double eps, std::size_t N,
                                                       bool use_ci = false) {
  check_trace_shape(ens, trace, N);
  if (eta.rows != ens.paths() || chi.rows != ens.paths() || eta.cols < N || chi.cols < N)
    throw std::invalid_argument("verify_rs_process: eta/chi shape mismatch");
  std::vector<EmpiricalVerdict> out;
  out.reserve(N);
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t hits = 0;
    for (std::size_t p = 0; p < ens.paths(); ++p) {
      double e = eta.at(p, n), c = chi.at(p, n);
      if (e < 0 || c < 0) throw std::invalid_argument("verify_rs_process: negative eta or chi entry");
      if (trace.at(p, n) > (1.0 + c) * ens.values.at(p, n) + e + eps) ++hits;
    }
    out.push_back(make_verdict(hits, ens.paths(), lambda, use_ci));
  }
  return out;
}

inline std::vector<EmpiricalVerdict> verify_rs_process(const PathEnsemble& ens, const Matrix& trace,
                                                       const std::vector<double>& eta,
                                                       const std::vector<double>& chi,
                                                       double lambda, double eps, std::size_t N,
                                                       bool use_ci = false) {
  check_trace_shape(ens, trace, N);
  if (eta.size() < N || chi.size() < N)
    throw std::invalid_argument("verify_rs_process: schedule shorter than N");
  std::vector<EmpiricalVerdict> out;
  out.reserve(N);
  for (std::size_t n = 0; n < N; ++n) {
    if (eta[n] < 0 || chi[n] < 0)
      throw std::invalid_argument("verify_rs_process: negative eta or chi entry");
    std::size_t hits = 0;
    for (std::size_t p = 0; p < ens.paths(); ++p)
      if (trace.at(p, n) > (1.0 + chi[n]) * ens.values.at(p, n) + eta[n] + eps) ++hits;
    out.push_back(make_verdict(hits, ens.paths(), lambda, use_ci));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Doob decomposition, stochastic integral, stopping
// ---------------------------------------------------------------------------

struct DoobDecomposition {
  PathEnsemble martingale_part;   // Y
  PathEnsemble predictable_part;  // Z, with Z_0 = 0
};

// Z_n = sum_{k=1}^n (E[X_k|F_{k-1}] - X_{k-1}), Y = X - Z.
inline DoobDecomposition doob_decompose(const PathEnsemble& ens, const Matrix& trace) {
  check_trace_shape(ens, trace, trace.cols);
  const std::size_t M = ens.paths(), cols = ens.values.cols;
  DoobDecomposition d;
  d.predictable_part.values = Matrix(M, cols);
  d.martingale_part.values = Matrix(M, cols);
  for (std::size_t p = 0; p < M; ++p) {
    double z = 0.0;
    d.predictable_part.values.at(p, 0) = 0.0;
    d.martingale_part.values.at(p, 0) = ens.values.at(p, 0);
    for (std::size_t n = 1; n < cols; ++n) {
      z += trace.at(p, n - 1) - ens.values.at(p, n - 1);
      d.predictable_part.values.at(p, n) = z;
      d.martingale_part.values.at(p, n) = ens.values.at(p, n) - z;
    }
  }
  return d;
}

// Predictable integrand: entry (p, n) must be computable from the path
// prefix up to n-1. Explicit-matrix form; the declared bound is validated.
struct PredictableProcess {
  Matrix values;  // [M x N+1]
  double bound;   // K_C with 0 <= C <= K_C
};

inline PathEnsemble stochastic_integral(const PredictableProcess& c, const PathEnsemble& ens) {
  if (c.values.rows != ens.paths() || c.values.cols != ens.values.cols)
    throw std::invalid_argument("stochastic_integral: shape mismatch");
  const std::size_t M = ens.paths(), cols = ens.values.cols;
  PathEnsemble out;
  out.values = Matrix(M, cols);
  for (std::size_t p = 0; p < M; ++p) {
    double acc = 0.0;
    out.values.at(p, 0) = 0.0;
    for (std::size_t n = 1; n < cols; ++n) {
      double cn = c.values.at(p, n);
      if (cn < 0 || cn > c.bound)
        throw std::invalid_argument("stochastic_integral: integrand outside [0, K_C] at path " +
                                    std::to_string(p) + ", index " + std::to_string(n));
      acc += cn * (ens.values.at(p, n) - ens.values.at(p, n - 1));
      out.values.at(p, n) = acc;
    }
  }
  return out;
}

// Conditional-mean trace of the transform: E[(C.X)_{n+1}|F_n] =
// (C.X)_n + C_{n+1} (E[X_{n+1}|F_n] - X_n). Exact because C is predictable.
inline Matrix integral_cond_trace(const PredictableProcess& c, const PathEnsemble& ens,
                                  const Matrix& trace, const PathEnsemble& integral) {
  check_trace_shape(ens, trace, trace.cols);
  Matrix out(ens.paths(), trace.cols);
  for (std::size_t p = 0; p < ens.paths(); ++p)
    for (std::size_t n = 0; n < trace.cols; ++n)
      out.at(p, n) = integral.values.at(p, n) +
                     c.values.at(p, n + 1) * (trace.at(p, n) - ens.values.at(p, n));
  return out;
}

// decide() sees the prefix X_0..X_n and may only use it (stopping-time
// property); the induced stopping time is capped.
struct StoppingRule {
  std::function<bool(std::span<const double>)> decide;
  std::size_t cap;
};

inline std::size_t stopping_time(std::span<const double> path, const StoppingRule& rule) {
  std::size_t cap = std::min(rule.cap, path.size() - 1);
  for (std::size_t n = 0; n <= cap; ++n)
    if (rule.decide(path.subspan(0, n + 1))) return n;
  return cap;
}

inline PathEnsemble stop_process(const PathEnsemble& ens, const StoppingRule& rule) {
  PathEnsemble out;
  out.values = Matrix(ens.paths(), ens.values.cols);
  for (std::size_t p = 0; p < ens.paths(); ++p) {
    auto row = ens.path(p);
    std::size_t tau = stopping_time(row, rule);
    for (std::size_t n = 0; n < ens.values.cols; ++n)
      out.values.at(p, n) = row[std::min(n, tau)];
  }
  return out;
}

// E[X_{(n+1) and tau} | F_n] = X_tau if tau <= n, else E[X_{n+1}|F_n].
inline Matrix stopped_cond_trace(const PathEnsemble& ens, const Matrix& trace,
                                 const StoppingRule& rule) {
  check_trace_shape(ens, trace, trace.cols);
  Matrix out(ens.paths(), trace.cols);
  for (std::size_t p = 0; p < ens.paths(); ++p) {
    auto row = ens.path(p);
    std::size_t tau = stopping_time(row, rule);
    for (std::size_t n = 0; n < trace.cols; ++n)
      out.at(p, n) = (tau <= n) ? row[tau] : trace.at(p, n);
  }
  return out;
}

// Mean and Monte Carlo standard error of the one-step martingale residual
// X_{n+1} - E[X_{n+1}|F_n], optionally restricted to a prefix-measurable
// event. Used to validate analytic conditional means.
struct ResidualStats {
  double mean;
  double stderr_;
  std::size_t count;
};

inline std::vector<ResidualStats> martingale_residual_stats(
    const PathEnsemble& ens, const Matrix& trace,
    const std::function<bool(std::span<const double>, std::size_t)>& event = nullptr) {
  check_trace_shape(ens, trace, trace.cols);
  std::vector<ResidualStats> out;
  out.reserve(trace.cols);
  for (std::size_t n = 0; n < trace.cols; ++n) {
    double sum = 0.0, sumsq = 0.0;
    std::size_t cnt = 0;
    for (std::size_t p = 0; p < ens.paths(); ++p) {
      if (event && !event(ens.path(p), n)) continue;
      double r = ens.values.at(p, n + 1) - trace.at(p, n);
      sum += r;
      sumsq += r * r;
      ++cnt;
    }
    if (cnt == 0) { out.push_back({0.0, 0.0, 0}); continue; }
    double mean = sum / static_cast<double>(cnt);
    double var = sumsq / static_cast<double>(cnt) - mean * mean;
    if (var < 0) var = 0;
    out.push_back({mean, std::sqrt(var / static_cast<double>(cnt)), cnt});
  }
  return out;
}

}  // namespace finmart
