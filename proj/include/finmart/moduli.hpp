#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

#include "finmart/bounds.hpp"
#include "finmart/rational.hpp"

namespace finmart {

// gamma(k)+1 points of the covered set always contain a pair at distance
// <= 1/(k+1). Always >= 1.
struct TotalBoundednessModulus {
  std::function<BigInt(const BigInt&)> gamma;

  BigInt operator()(const BigInt& k) const {
    BigInt v = gamma(k);
    if (v < 1) throw std::logic_error("TotalBoundednessModulus: gamma must be >= 1");
    return v;
  }
};

// Certified rational over-approximation of sqrt(d): never below the true
// value, so the ceiling in the Euclidean gamma never under-counts.
inline Rational sqrt_upper(const BigInt& d, unsigned decimal_digits = 8) {
  BigInt exact = boost::multiprecision::sqrt(d);
  if (exact * exact == d) return Rational(exact);
  BigInt scale = 1;
  for (unsigned i = 0; i < decimal_digits; ++i) scale *= 10;
  BigInt s = boost::multiprecision::sqrt(BigInt(d * scale * scale));  // floor sqrt
  return Rational(s + 1) / Rational(scale);
}

// gamma(k) = ceil(2 (k+1) sqrt(d) b)^d for a bounded subset of R^d with
// bound b.
inline TotalBoundednessModulus gamma_euclidean_ball(unsigned dim, Rational bound) {
  if (dim < 1) throw std::invalid_argument("gamma_euclidean_ball: dim must be >= 1");
  if (bound <= 0) throw std::invalid_argument("gamma_euclidean_ball: bound must be > 0");
  Rational root = sqrt_upper(BigInt(dim));
  return {[dim, bound, root](const BigInt& k) {
    BigInt base = rat_ceil(2 * Rational(k + 1) * root * bound);
    return boost::multiprecision::pow(base, dim);
  }};
}

// Pigeonhole instance: any m+1 samples from an m-point set repeat a point.
inline TotalBoundednessModulus gamma_finite(BigInt set_size) {
  if (set_size < 1) throw std::invalid_argument("gamma_finite: set size must be >= 1");
  return {[set_size](const BigInt&) { return set_size; }};
}

// theta(N, b) with sum_{n=N}^{theta(N,b)} lambda_n (1 - lambda_n) >= b.
struct DivergenceRate {
  std::function<BigInt(const BigInt&, const Rational&)> theta;
  Rational per_step;  // lambda_bar (1 - lambda_bar) for the constant schedule
};

inline DivergenceRate theta_constant(Rational step) {
  if (!(step > 0 && step < 1)) throw std::invalid_argument("theta_constant: step must be in (0,1)");
  Rational rate = step * (1 - step);
  return {[rate](const BigInt& N, const Rational& b) {
            if (b <= 0) throw std::invalid_argument("DivergenceRate: b must be > 0");
            return N + rat_ceil(b / rate) - 1;
          },
          rate};
}

// G together with its continuity witnesses: iota is a modulus of uniform
// continuity on [0, b], nu a modulus of inverse continuity at 0.
struct GPack {
  std::string name;
  std::function<double(double)> G;
  std::function<BigInt(const Rational&, const BigInt&)> iota;  // iota_b(k)
  std::function<BigInt(const BigInt&)> nu;
};

inline GPack gpack_identity() {
  return {"identity",
          [](double a) { return a; },
          [](const Rational&, const BigInt& k) { return k; },
          [](const BigInt& k) { return k; }};
}

inline GPack gpack_square() {
  return {"square",
          [](double a) { return a * a; },
          [](const Rational& b, const BigInt& k) { return rat_ceil(2 * b * Rational(k + 1)); },
          [](const BigInt& k) { return (k + 1) * (k + 1); }};
}

// Stochastic liminf-modulus: P(forall n in [N; phi(lambda,k,N)]: x_n not in
// AF_k) < lambda, with phi(lambda,k,N) >= N. The lambda slot accepts a
// ScaledProb because the strengthened variant feeds in factors 2^-(k+N+2)
// whose exponents can be far outside machine range; implementations must
// refuse (via the bit budget) rather than approximate.
class LiminfModulus {
 public:
  using Core = std::function<BigInt(const ScaledProb&, const BigInt& k, const BigInt& N,
                                    const BigInt& max_bits)>;

  LiminfModulus() = default;
  LiminfModulus(Core core, bool monotone_in_N, bool trivial, std::string desc)
      : core_(std::move(core)), monotone_(monotone_in_N), trivial_(trivial),
        desc_(std::move(desc)) {}

  BigInt phi(const ScaledProb& lambda, const BigInt& k, const BigInt& N,
             const BigInt& max_bits) const {
    BigInt v = core_(lambda, k, N, max_bits);
    if (v < N) throw std::logic_error("LiminfModulus: phi must satisfy phi >= N");
    return v;
  }

  BigInt phi(const Rational& lambda, const BigInt& k, const BigInt& N) const {
    return phi(ScaledProb::from(lambda), k, N, BigInt(1) << 24);
  }

  bool monotone_in_N() const { return monotone_; }
  // A liminf modulus of a process that already sits inside every AF_k:
  // phi(lambda, k, N) = N. Window functions built on it collapse.
  bool trivial() const { return trivial_; }
  const std::string& description() const { return desc_; }

  static LiminfModulus trivial_modulus() {
    return LiminfModulus(
        [](const ScaledProb&, const BigInt&, const BigInt& N, const BigInt&) { return N; }, true,
        true, "phi(lambda,k,N) = N");
  }

  // phi(lambda, k, N) = theta(N, c2p1 (k+1) / lambda) for a constant-step
  // divergence rate with per-step weight `rate`.
 private:
  Core core_;
  bool monotone_ = false;
  bool trivial_ = false;
  std::string desc_;

 public:
  static LiminfModulus km_theta(Rational c2p1, Rational rate) {
    if (c2p1 <= 0 || rate <= 0) throw std::invalid_argument("km_theta: bad parameters");
    return LiminfModulus(
        [c2p1, rate](const ScaledProb& lam, const BigInt& k, const BigInt& N,
                     const BigInt& max_bits) {
          Rational inv = lam.reciprocal(max_bits, "km liminf modulus at 1/lambda");
          Rational b = c2p1 * Rational(k + 1) * inv;
          BigInt steps = rat_ceil(b / rate);
          if (steps < 1) steps = 1;
          return N + steps - 1;
        },
        true, false, "theta(N, (c^2+1)(k+1)/lambda)");
  }
};

// Psi(lambda, k, N) := phi(lambda 2^-(k+N+2), k, N); the union-bound
// strengthening that controls all (k, N) simultaneously.
inline LiminfModulus strengthen_liminf(const LiminfModulus& phi) {
  bool mono = phi.monotone_in_N();
  bool triv = phi.trivial();
  std::string desc = "strengthened(" + phi.description() + ")";
  return LiminfModulus(
      [phi](const ScaledProb& lam, const BigInt& k, const BigInt& N, const BigInt& max_bits) {
        return phi.phi(lam.shifted(k + N + 2), k, N, max_bits);
      },
      mono, triv, desc);
}

// Modulus of uniform almost sure boundedness for (d(x_n, o)); b0 bounds
// E[G(d(x_0,o)+c)] strictly from above.
struct BoundednessModulus {
  std::function<Rational(const Rational&)> b;
  Rational b0;

  Rational eval(const Rational& lambda) const {
    if (lambda <= 0) throw std::invalid_argument("BoundednessModulus: lambda must be > 0");
    return b(lambda);
  }
};

// zeta(lambda, r, n): membership index such that z in AF_zeta makes the
// Fejer step inequality hold at error 1/(r+1) with failure probability
// < lambda, for all m <= n.
struct FejerModulus {
  std::function<BigInt(const Rational&, const BigInt&, const BigInt&)> zeta;

  BigInt operator()(const Rational& lambda, const BigInt& r, const BigInt& n) const {
    BigInt v = zeta(lambda, r, n);
    if (v < 0) throw std::logic_error("FejerModulus: zeta must be nonnegative");
    return v;
  }
};

// Fluctuation rate for monotone processes: J_{n,eps} < ceil(2 f(lambda)/eps)
// with probability >= 1 - lambda.
inline BigInt monotone_fluctuation_rate(const StepFn& f, const Rational& eps,
                                        const Rational& lambda) {
  if (eps <= 0) throw std::invalid_argument("monotone_fluctuation_rate: eps must be > 0");
  return rat_ceil(2 * Rational(f(lambda)) / eps);
}

// Moduli of uniform closedness for the common-fixed-point target:
// z in AF_{12k+11} within distance 1/(12(k+1)) of z' forces z' in AF_k.
inline std::pair<BigInt, BigInt> km_closedness(const BigInt& k) {
  BigInt v = 12 * k + 11;
  return {v, v};
}

}  // namespace finmart
