#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "finmart/rational.hpp"

namespace finmart {

// Quantitative witness of integrability: P(A) < eval(eps) implies
// E[|X| 1_A] <= eps. Every instance must be monotone in eps and strictly
// positive; the factories below are monotone by construction and table-based
// construction clamps.
class AbsContModulus {
 public:
  AbsContModulus() : fn_([](const Rational& e) { return e; }) {}
  explicit AbsContModulus(std::function<Rational(const Rational&)> fn) : fn_(std::move(fn)) {}

  Rational eval(const Rational& eps) const {
    if (eps <= 0) throw std::invalid_argument("AbsContModulus: eps must be > 0");
    Rational v = fn_(eps);
    if (v <= 0) throw std::logic_error("AbsContModulus: modulus returned a nonpositive value");
    return v;
  }

  // mu(eps) = eps (valid whenever |X| <= 1).
  static AbsContModulus identity() { return AbsContModulus(); }

  // mu(eps) = eps / c (valid whenever |X| <= c).
  static AbsContModulus linear_over(Rational c) {
    if (c <= 0) throw std::invalid_argument("linear_over: c must be > 0");
    return AbsContModulus([c](const Rational& e) { return Rational(e / c); });
  }

  // mu(eps) = eps^2 / s (valid whenever E[X^2] <= s, by Cauchy-Schwarz).
  static AbsContModulus quadratic_over(Rational s) {
    if (s <= 0) throw std::invalid_argument("quadratic_over: s must be > 0");
    return AbsContModulus([s](const Rational& e) { return Rational(e * e / s); });
  }

  // Piecewise-constant modulus from (eps, value) samples; values are clamped
  // so the result is monotone.
  static AbsContModulus from_table(std::vector<std::pair<Rational, Rational>> samples) {
    if (samples.empty()) throw std::invalid_argument("from_table: empty table");
    std::sort(samples.begin(), samples.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < samples.size(); ++i)
      samples[i].second = std::max(samples[i].second, samples[i - 1].second);
    if (samples.front().second <= 0) throw std::invalid_argument("from_table: nonpositive value");
    return AbsContModulus([samples](const Rational& e) {
      // largest sampled eps' <= e decides; below the smallest sample, scale
      // linearly (the conservative direction).
      if (e < samples.front().first)
        return Rational(samples.front().second * e / samples.front().first);
      Rational v = samples.front().second;
      for (const auto& [se, sv] : samples) {
        if (se <= e) v = sv;
        else break;
      }
      return v;
    });
  }

 private:
  std::function<Rational(const Rational&)> fn_;
};

// Per-index moduli mu_n with a tail rule: mu_n = prefix[n] for n < |prefix|,
// and the tail modulus beyond. N arguments are BigInt because the
// metastability recursion calls in with horizons far outside 64 bits.
class ModulusFamily {
 public:
  ModulusFamily() = default;
  ModulusFamily(std::vector<AbsContModulus> prefix, AbsContModulus tail)
      : prefix_(std::move(prefix)), tail_(std::move(tail)) {}

  static ModulusFamily uniform(AbsContModulus m) { return ModulusFamily({}, std::move(m)); }

  // mu^M_N(eps) = min{mu_n(eps) | n <= N}.
  Rational min_at(const Rational& eps, const BigInt& N) const {
    if (N < 0) throw std::invalid_argument("ModulusFamily::min_at: negative N");
    bool tail_in_range = N >= BigInt(prefix_.size());
    Rational best;
    bool have = false;
    std::size_t upto = prefix_.size();
    if (!tail_in_range) upto = N.convert_to<std::size_t>() + 1;
    for (std::size_t n = 0; n < upto; ++n) {
      Rational v = prefix_[n].eval(eps);
      if (!have || v < best) { best = v; have = true; }
    }
    if (tail_in_range) {
      Rational v = tail_.eval(eps);
      if (!have || v < best) { best = v; have = true; }
    }
    return best;
  }

 private:
  std::vector<AbsContModulus> prefix_;
  AbsContModulus tail_;
};

// The (lambda*, eps*) pair a process must satisfy as a
// lambda*-eps*-N-supermartingale for a given result to apply.
struct SupermartingaleGrade {
  Rational lambda_star;
  Rational eps_star;
};

inline AbsContModulus min_modulus(const ModulusFamily& fam, BigInt N) {
  return AbsContModulus([fam, N](const Rational& e) { return fam.min_at(e, N); });
}

// Lemma: a boundedly stopped nonnegative process X_tau inherits
// eps |-> mu^M_N(eps/N).
inline AbsContModulus stopped_modulus(const ModulusFamily& fam, BigInt N) {
  if (N < 1) throw std::invalid_argument("stopped_modulus: N must be >= 1");
  return AbsContModulus([fam, N](const Rational& e) { return fam.min_at(Rational(e / Rational(N)), N); });
}

// Discrete stochastic integral with 0 <= C <= K_C: eps |-> mu^M_N(eps/(K_C N)).
inline AbsContModulus integral_modulus(const ModulusFamily& fam, Rational K_C, BigInt N) {
  if (K_C <= 0) throw std::invalid_argument("integral_modulus: K_C must be > 0");
  if (N < 1) throw std::invalid_argument("integral_modulus: N must be >= 1");
  return AbsContModulus(
      [fam, K_C, N](const Rational& e) { return fam.min_at(Rational(e / (K_C * Rational(N))), N); });
}

// Grade under which E[X_m] <= E[X_n] + eps for all n <= m <= N.
inline SupermartingaleGrade descent_premise(const ModulusFamily& fam, BigInt N, Rational eps) {
  if (N < 1) throw std::invalid_argument("descent_premise: N must be >= 1");
  if (eps <= 0) throw std::invalid_argument("descent_premise: eps must be > 0");
  Rational n(N);
  return {fam.min_at(Rational(eps / (4 * n)), N), Rational(eps / (2 * n))};
}

struct CondCharThresholds {
  Rational forward;                 // E[X 1_A] < eps*lambda for all A
  SupermartingaleGrade backward;    // (eps/2, mu(eps/2)) premise pair
};

inline CondCharThresholds cond_char_thresholds(const AbsContModulus& mu, Rational eps,
                                               Rational lambda) {
  if (eps <= 0 || lambda <= 0) throw std::invalid_argument("cond_char_thresholds: need eps, lambda > 0");
  Rational half = eps / 2;
  return {Rational(eps * lambda), {mu.eval(half), half}};
}

// Ville: P(exists t <= k: X_t >= alpha) <= (E[X_0] + eps)/alpha.
inline Rational ville_bound(Rational mean0, Rational alpha, Rational eps) {
  if (alpha <= 0) throw std::invalid_argument("ville_bound: alpha must be > 0");
  Rational v = (mean0 + eps) / alpha;
  if (v < 0) v = 0;
  if (v > 1) v = 1;
  return v;
}

inline SupermartingaleGrade ville_premise(const ModulusFamily& fam, BigInt N, Rational eps) {
  if (N < 1) throw std::invalid_argument("ville_premise: N must be >= 1");
  Rational n(N);
  return {fam.min_at(Rational(eps / (8 * n * n)), N), Rational(eps / (2 * n))};
}

// Downcrossing inequality, simplified E[X_0] <= K form:
// E[D_N[alpha,beta]] <= (K + E[(X_N - beta)^+])/(beta - alpha) + eps.
inline Rational downcrossing_bound(Rational K, Rational alpha, Rational beta, Rational tail_mean,
                                   Rational eps) {
  if (!(alpha < beta)) throw std::invalid_argument("downcrossing_bound: need alpha < beta");
  return Rational((K + tail_mean) / (beta - alpha) + eps);
}

inline SupermartingaleGrade downcrossing_premise(const ModulusFamily& fam, BigInt N, Rational eps,
                                                 Rational delta) {
  if (N < 1) throw std::invalid_argument("downcrossing_premise: N must be >= 1");
  if (delta <= 0) throw std::invalid_argument("downcrossing_premise: delta must be > 0");
  Rational n(N);
  return {fam.min_at(Rational(eps * delta / (4 * n * n)), N), Rational(eps * delta / (2 * n))};
}

// Optional stopping: grade under which P(E[X_tau|F_rho] > X_rho + eps) < lambda.
inline SupermartingaleGrade optional_stopping_premise(const ModulusFamily& fam, BigInt N,
                                                      Rational eps, Rational lambda) {
  if (N < 1) throw std::invalid_argument("optional_stopping_premise: N must be >= 1");
  Rational n(N);
  return {fam.min_at(Rational(eps * lambda / (16 * n)), N), Rational(eps * lambda / (8 * n))};
}

// N_K(lambda, eps) = ceil(512 (K+1)^2 / (lambda^2 eps^2)).
inline BigInt uniform_horizon(Rational K, Rational lambda, Rational eps) {
  if (!(lambda > 0 && lambda <= 1) || !(eps > 0 && eps <= 1))
    throw std::invalid_argument("uniform_horizon: lambda, eps must lie in (0,1]");
  Rational kp1 = K + 1;
  return rat_ceil(Rational(512 * kp1 * kp1 / (lambda * lambda * eps * eps)));
}

struct UniformConvergencePremise {
  BigInt horizon;  // N_K(lambda, eps)
  SupermartingaleGrade grade;
};

// Premise of the quantitative supermartingale convergence theorem:
// a mu^M(eps^2/32 N^2)-(eps^2/16 N)-N supermartingale at N = N_K.
inline UniformConvergencePremise uniform_convergence_premise(const ModulusFamily& fam, Rational K,
                                                             Rational lambda, Rational eps) {
  BigInt N = uniform_horizon(K, lambda, eps);
  Rational n(N);
  Rational e2 = eps * eps;
  return {N, {fam.min_at(Rational(e2 / (32 * n * n)), N), Rational(e2 / (16 * n))}};
}

struct FluctuationBound {
  BigInt bound;  // ceil(2048 (K+1)^2 / (lambda^2 eps^2))
  Rational eps0;
  Rational lambda0;
  SupermartingaleGrade grade;
};

// Modulus of finite fluctuations for nonnegative finitary supermartingales:
// P(J_{N,eps} >= bound) < lambda under the returned grade.
//
// lambda0 is min{mu^M_e(eps^2/128 e^2) | e <= N}; since every modulus is
// monotone and mu^M_e shrinks as e grows, the minimum sits at e = N, which
// keeps the computation closed-form for astronomically large N.
inline FluctuationBound martingale_fluctuation_bound(const ModulusFamily& fam, Rational K,
                                                     Rational lambda, Rational eps, BigInt N) {
  if (lambda <= 0 || eps <= 0) throw std::invalid_argument("martingale_fluctuation_bound: need lambda, eps > 0");
  if (N < 1) throw std::invalid_argument("martingale_fluctuation_bound: N must be >= 1");
  Rational kp1 = K + 1;
  BigInt bound = rat_ceil(Rational(2048 * kp1 * kp1 / (lambda * lambda * eps * eps)));
  Rational n(N);
  Rational e2 = eps * eps;
  Rational eps0 = Rational(e2 / (64 * n));
  Rational lambda0 = fam.min_at(Rational(e2 / (128 * n * n)), N);
  Rational prod = eps0 * lambda0;
  return {bound, eps0, lambda0,
          {fam.min_at(Rational(prod / (16 * n)), N), Rational(prod / (8 * n))}};
}

// Monotone nonincreasing step function (0,inf) -> N, used for the almost
// sure boundedness witnesses f and h. `base` is the value for lambda at or
// above the largest threshold; entries (threshold, value) with descending
// thresholds raise the value as lambda drops.
class StepFn {
 public:
  static StepFn constant(BigInt c) {
    StepFn s;
    s.base_ = std::move(c);
    return s;
  }

  static StepFn table(BigInt base, std::vector<std::pair<Rational, BigInt>> steps) {
    StepFn s;
    s.base_ = std::move(base);
    std::sort(steps.begin(), steps.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    BigInt prev = s.base_;
    for (auto& [thr, v] : steps) {
      if (v < prev) v = prev;  // keep nonincreasing in lambda
      prev = v;
    }
    s.steps_ = std::move(steps);
    return s;
  }

  BigInt operator()(const Rational& lambda) const {
    if (lambda <= 0) throw std::invalid_argument("StepFn: lambda must be > 0");
    BigInt v = base_;
    for (const auto& [thr, val] : steps_)
      if (lambda < thr) v = val;
    return v;
  }

 private:
  BigInt base_ = 0;
  std::vector<std::pair<Rational, BigInt>> steps_;
};

// Quantitative witnesses of a Robbins-Siegmund process:
// P(sum eta_i >= f(lambda)) < lambda, P(prod (1+chi_i) >= h(lambda)) < lambda,
// K > E[X_0], and moduli of absolute continuity for the X_n.
struct RSParams {
  StepFn f;
  StepFn h;
  Rational K;
  ModulusFamily moduli;
};

struct RSTriple {
  BigInt Z;
  Rational e;
  Rational p;
  // intermediates, recorded for the report and for trace replay
  Rational eps0;
  Rational lambda0;
  BigInt alpha;
  Rational b;
};

// The explicit (Z, e, p) of the quantitative Robbins-Siegmund theorem:
// if X is a p-e-N-RS process w.r.t. (eta, chi) then P(J_{N,eps} >= Z) < lambda.
inline RSTriple rs_triple(const RSParams& params, Rational lambda, Rational eps, BigInt N) {
  if (lambda <= 0 || eps <= 0) throw std::invalid_argument("rs_triple: need lambda, eps > 0");
  if (N < 1) throw std::invalid_argument("rs_triple: N must be >= 1");
  const BigInt hl = params.h(lambda / 10);
  if (hl < 1) throw std::invalid_argument("rs_triple: h must be >= 1");
  const BigInt alpha = params.f(lambda / 4);
  const BigInt fl = params.f(lambda / 10);

  Rational base = Rational(params.K) + Rational(alpha) + 1;
  BigInt Z = 4 * rat_ceil(Rational(Rational(131072) * base * base * Rational(hl * hl) /
                                   (lambda * lambda * eps * eps)));

  Rational b = Rational(2 * fl);
  b = std::max(b, Rational(2 * alpha + 1));
  b = std::max(b, Rational(16 * (params.K + Rational(alpha)) / lambda));

  Rational n(N);
  Rational hl2(hl * hl);
  Rational e2 = eps * eps;
  Rational eps0 = Rational(e2 / (256 * n * hl2));
  // min over e <= N collapses to e = N by monotonicity, as in
  // martingale_fluctuation_bound.
  Rational lambda0 = params.moduli.min_at(Rational(e2 / (512 * n * n * hl2)), N);

  Rational e = Rational(eps0 * lambda0 / (8 * n));
  e = std::min(e, Rational(lambda * (b / 2 + Rational(alpha)) / 8));
  e = std::min(e, Rational(eps / (2 * n)));

  Rational p = std::min(params.moduli.min_at(Rational(eps0 * lambda0 / (16 * n)), N),
                        params.moduli.min_at(Rational(eps / (8 * n * n)), N));
  if (p > 1) p = 1;

  return {std::move(Z), std::move(e), std::move(p), std::move(eps0), std::move(lambda0),
          alpha, std::move(b)};
}

}  // namespace finmart
