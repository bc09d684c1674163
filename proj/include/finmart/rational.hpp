#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace finmart {

// Exact arithmetic used by every bound calculator. No floating point is
// allowed to enter these computations; doubles appear only at the Monte
// Carlo boundary.
using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline BigInt rat_num(const Rational& q) { return boost::multiprecision::numerator(q); }
inline BigInt rat_den(const Rational& q) { return boost::multiprecision::denominator(q); }

inline BigInt rat_floor(const Rational& q) {
  BigInt n = rat_num(q), d = rat_den(q);  // d > 0 after normalization
  BigInt t = n / d;
  if (n < 0 && t * d != n) --t;
  return t;
}

inline BigInt rat_ceil(const Rational& q) {
  BigInt n = rat_num(q), d = rat_den(q);
  BigInt t = n / d;
  if (n > 0 && t * d != n) ++t;
  return t;
}

inline BigInt pow2_int(std::uint64_t e) {
  BigInt one = 1;
  return one << static_cast<unsigned>(e);
}

// Signals that an exact evaluation was abandoned rather than approximated.
// `intermediate` names the quantity that blew past the budget.
struct BudgetExceededError : std::runtime_error {
  std::string intermediate;
  explicit BudgetExceededError(std::string what_intermediate)
      : std::runtime_error("evaluation budget exceeded at: " + what_intermediate),
        intermediate(std::move(what_intermediate)) {}
};

// Probability of the form mant * 2^(-shift). The shift can be astronomically
// large inside the metastability recursion (it carries the 2^-(k+N+2) factor
// of the strengthened liminf modulus), so it is kept symbolic until a
// consumer actually needs the value.
struct ScaledProb {
  Rational mant;  // > 0
  BigInt shift;   // >= 0

  static ScaledProb from(Rational r) {
    if (r <= 0) throw std::invalid_argument("ScaledProb: probability must be > 0");
    return {std::move(r), 0};
  }

  ScaledProb div(const Rational& r) const {
    if (r <= 0) throw std::invalid_argument("ScaledProb::div: divisor must be > 0");
    return {mant / r, shift};
  }

  ScaledProb shifted(const BigInt& extra) const {
    if (extra < 0) throw std::invalid_argument("ScaledProb::shifted: negative shift");
    return {mant, shift + extra};
  }

  // 1/value, as an exact rational. Materializes 2^shift; refuses when the
  // result would not fit the bit budget.
  Rational reciprocal(const BigInt& max_bits, const std::string& what) const {
    if (shift > max_bits)
      throw BudgetExceededError(what + " (needs 2^" + shift.str() + ")");
    BigInt p = pow2_int(shift.convert_to<std::uint64_t>());
    return Rational(p) / mant;
  }

  Rational materialize(const BigInt& max_bits, const std::string& what) const {
    if (shift > max_bits)
      throw BudgetExceededError(what + " (needs 2^-" + shift.str() + ")");
    BigInt p = pow2_int(shift.convert_to<std::uint64_t>());
    return mant / Rational(p);
  }
};

// Accepts "p/q" or a plain integer. Exact; no decimal parsing.
inline Rational parse_rational(std::string_view text) {
  auto parse_int = [](std::string_view s) -> BigInt {
    if (s.empty()) throw std::invalid_argument("parse_rational: empty component");
    std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
    if (i == s.size()) throw std::invalid_argument("parse_rational: lone sign");
    for (; i < s.size(); ++i)
      if (s[i] < '0' || s[i] > '9')
        throw std::invalid_argument("parse_rational: bad digit in '" + std::string(s) + "'");
    return BigInt(std::string(s));
  };
  auto slash = text.find('/');
  if (slash == std::string_view::npos) return Rational(parse_int(text));
  BigInt p = parse_int(text.substr(0, slash));
  BigInt q = parse_int(text.substr(slash + 1));
  if (q == 0) throw std::invalid_argument("parse_rational: zero denominator");
  return Rational(p) / Rational(q);
}

inline std::string format_rational(const Rational& q) {
  if (rat_den(q) == 1) return rat_num(q).str();
  return rat_num(q).str() + "/" + rat_den(q).str();
}

inline double to_double(const Rational& q) { return q.convert_to<double>(); }

}  // namespace finmart
