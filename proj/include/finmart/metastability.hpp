#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "finmart/bounds.hpp"
#include "finmart/ensemble.hpp"
#include "finmart/moduli.hpp"
#include "finmart/rational.hpp"

namespace finmart {

// Exact evaluation budget. Intermediates of the metastability recursion can
// be towers of exponentials; when a quantity cannot be materialized within
// the budget the evaluator reports a structured marker instead of a wrong or
// rounded number.
struct EvalBudget {
  std::uint64_t max_steps = 200000;
  BigInt max_bits = BigInt(1) << 20;
  std::uint64_t steps_used = 0;

  void charge(std::uint64_t n, const char* what) {
    steps_used += n;
    if (steps_used > max_steps) throw BudgetExceededError(what);
  }

  void require_bits(const BigInt& bits, const std::string& what) const {
    if (bits > max_bits) throw BudgetExceededError(what + " (~2^" + bits.str() + ")");
  }

  static EvalBudget from_env() {
    EvalBudget b;
    if (const char* e = std::getenv("FINMART_BUDGET")) {
      char* end = nullptr;
      unsigned long long v = std::strtoull(e, &end, 10);
      if (end && *end == '\0' && v > 0) b.max_steps = v;
    }
    return b;
  }
};

// Counterexample function g: N -> N with g~(n) = n + g(n). Constant and
// affine forms have closed-form iterates; callbacks iterate under budget.
struct CounterexampleFunction {
  enum class Kind { Constant, Affine, Callback };
  Kind kind = Kind::Constant;
  BigInt c;        // Constant
  BigInt a, b;     // Affine: g(n) = a n + b
  std::function<BigInt(const BigInt&)> fn;

  static CounterexampleFunction constant(BigInt v) {
    if (v < 0) throw std::invalid_argument("CounterexampleFunction: g must be nonnegative");
    CounterexampleFunction g;
    g.kind = Kind::Constant;
    g.c = std::move(v);
    return g;
  }

  static CounterexampleFunction affine(BigInt a, BigInt b) {
    if (a < 0 || b < 0) throw std::invalid_argument("CounterexampleFunction: affine needs a, b >= 0");
    CounterexampleFunction g;
    g.kind = Kind::Affine;
    g.a = std::move(a);
    g.b = std::move(b);
    return g;
  }

  static CounterexampleFunction callback(std::function<BigInt(const BigInt&)> f) {
    CounterexampleFunction g;
    g.kind = Kind::Callback;
    g.fn = std::move(f);
    return g;
  }

  BigInt eval(const BigInt& n) const {
    switch (kind) {
      case Kind::Constant: return c;
      case Kind::Affine: return a * n + b;
      case Kind::Callback: {
        BigInt v = fn(n);
        if (v < 0) throw std::logic_error("CounterexampleFunction: callback returned negative");
        return v;
      }
    }
    throw std::logic_error("CounterexampleFunction: bad kind");
  }

  BigInt tilde(const BigInt& n) const { return n + eval(n); }

  std::string describe() const {
    switch (kind) {
      case Kind::Constant: return "const " + c.str();
      case Kind::Affine: return "affine " + a.str() + " " + b.str();
      case Kind::Callback: return "callback";
    }
    return "?";
  }
};

// g~ iterated m times from 0. Exact or refused; never approximated.
inline BigInt iterate_tilde(const CounterexampleFunction& g, const BigInt& m, EvalBudget& budget) {
  if (m < 0) throw std::invalid_argument("iterate_tilde: negative iterate count");
  switch (g.kind) {
    case CounterexampleFunction::Kind::Constant:
      return m * g.c;  // g~(n) = n + c
    case CounterexampleFunction::Kind::Affine: {
      if (g.a == 0) return m * g.b;
      // g~(n) = (1+a) n + b, so g~^m(0) = b ((1+a)^m - 1)/a. The result has
      // about m log2(1+a) bits; refuse rather than build an unusable number.
      BigInt bits_estimate = m * static_cast<BigInt>(boost::multiprecision::msb(g.a + 1) + 1);
      budget.require_bits(bits_estimate, "iterate of affine counterexample function");
      BigInt base = g.a + 1;
      BigInt power = boost::multiprecision::pow(base, m.convert_to<unsigned>());
      return g.b * (power - 1) / g.a;
    }
    case CounterexampleFunction::Kind::Callback: {
      if (m > BigInt(budget.max_steps))
        throw BudgetExceededError("iterate count " + m.str() + " of opaque counterexample function");
      BigInt n = 0;
      std::uint64_t cnt = m.convert_to<std::uint64_t>();
      for (std::uint64_t i = 0; i < cnt; ++i) {
        budget.charge(1, "iterating opaque counterexample function");
        n = g.tilde(n);
      }
      return n;
    }
  }
  throw std::logic_error("iterate_tilde: bad kind");
}

// Full quantitative input of the main metastability theorem.
struct ModuliBundle {
  GPack gpack;
  TotalBoundednessModulus gamma;
  Rational d_bound;      // bound of X0 relative to o
  FejerModulus zeta;
  LiminfModulus phi;     // plain liminf modulus; strengthening applied internally
  BoundednessModulus b;  // b_lambda together with b0
  RSParams rs;           // f, h, K = b0, moduli mu_n
};

namespace detail {

// Phi'(mu, l, m) = Phi(mu 2^-(l+m+2), l, m).
inline BigInt phi_prime(const ModuliBundle& bundle, const Rational& mu, const BigInt& l,
                        const BigInt& m, EvalBudget& budget) {
  budget.charge(1, "liminf modulus evaluation");
  ScaledProb lam = ScaledProb::from(mu).shifted(l + m + 2);
  return bundle.phi.phi(lam, l, m, budget.max_bits);
}

// max{Phi'(mu, l, m) | m <= M}; closed form at m = M when Phi' is monotone.
inline BigInt phi_prime_max(const ModuliBundle& bundle, const Rational& mu, const BigInt& l,
                            const BigInt& M, EvalBudget& budget) {
  if (bundle.phi.monotone_in_N()) return phi_prime(bundle, mu, l, M, budget);
  if (M > BigInt(budget.max_steps))
    throw BudgetExceededError("scan over m <= " + M.str() + " of a non-monotone liminf modulus");
  BigInt best = 0;
  for (BigInt m = 0; m <= M; ++m) {
    budget.charge(1, "liminf modulus scan");
    best = std::max(best, phi_prime(bundle, mu, l, m, budget));
  }
  return best;
}

// The window function h^mu_l(m) = max{m' + g(m') | m' in [m; Phi'(mu,l,m)]} - m
// packaged as a counterexample function of m (its tilde is
// m |-> max{m' + g(m')}). For a trivial Phi the window collapses to g itself.
struct WindowedG {
  const ModuliBundle* bundle;
  Rational mu;
  BigInt l;
  CounterexampleFunction g;

  BigInt tilde(const BigInt& m, EvalBudget& budget) const {
    BigInt right = phi_prime(*bundle, mu, l, m, budget);
    switch (g.kind) {
      case CounterexampleFunction::Kind::Constant:
      case CounterexampleFunction::Kind::Affine:
        // m' + g(m') is nondecreasing, so the max sits at the right endpoint.
        return g.tilde(right);
      case CounterexampleFunction::Kind::Callback: {
        BigInt span = right - m;
        if (span > BigInt(budget.max_steps))
          throw BudgetExceededError("window scan of length " + span.str());
        BigInt best = 0;
        for (BigInt mp = m; mp <= right; ++mp) {
          budget.charge(1, "window scan");
          best = std::max(best, g.tilde(mp));
        }
        return best;
      }
    }
    throw std::logic_error("WindowedG: bad kind");
  }

  // h iterated `count` times from 0 (the Psi recursion).
  BigInt iterate(const BigInt& count, EvalBudget& budget) const {
    if (bundle->phi.trivial()) {
      // Phi'(mu, l, m) = m, so tilde reduces to g~ and closed forms apply.
      return iterate_tilde(g, count, budget);
    }
    if (count > BigInt(budget.max_steps))
      throw BudgetExceededError("Psi iterate count " + count.str() +
                                " of window function h^mu_l");
    BigInt n = 0;
    std::uint64_t cnt = count.convert_to<std::uint64_t>();
    for (std::uint64_t i = 0; i < cnt; ++i) {
      budget.charge(1, "iterating window function");
      n = tilde(n, budget);
    }
    return n;
  }
};

// Z_{f,h,K}(lambda, eps) alone (the fluctuation count of the RS triple; it
// carries no N dependence).
inline BigInt rs_fluctuation_count(const RSParams& rs, const Rational& lambda,
                                   const Rational& eps) {
  const BigInt hl = rs.h(lambda / 10);
  const BigInt alpha = rs.f(lambda / 4);
  Rational base = rs.K + Rational(alpha) + 1;
  return 4 * rat_ceil(Rational(131072) * base * base * Rational(hl * hl) /
                      (lambda * lambda * eps * eps));
}

// The least r with 1/(r+1) < e, i.e. the index form of a positive error.
inline BigInt error_index(const Rational& e) {
  if (e <= 0) throw std::invalid_argument("error_index: error must be > 0");
  return rat_floor(1 / e);
}

struct PsiArgs {
  Rational lambda_net;  // lambda / (2 gamma(iota_{b(lambda/2)+d}(3k+2)))
  BigInt k1;            // 3k+2
};

inline PsiArgs psi_args(const ModuliBundle& bundle, const Rational& lambda, const BigInt& k) {
  BigInt k1 = 3 * k + 2;
  Rational ball = bundle.b.eval(lambda / 2) + bundle.d_bound;
  BigInt net = bundle.gamma(bundle.gpack.iota(ball, k1));
  return {lambda / (2 * Rational(net)), k1};
}

}  // namespace detail

// psi_0 = Z_{f,h,b0}(lambda, k), chi_0 = zeta(p_..., e_..., N): the RS
// theorem instantiated for the Fejer process G(d(x_n, z)).
struct PsiChi {
  BigInt chi;
  BigInt psi;
};

inline PsiChi psi0_chi0(const ModuliBundle& bundle, const Rational& lambda, const BigInt& k,
                        const BigInt& N) {
  Rational eps = Rational(1) / Rational(k + 1);
  RSTriple t = rs_triple(bundle.rs, lambda, eps, N);
  BigInt r = detail::error_index(t.e);
  return {bundle.zeta(t.p, r, N), t.Z};
}

// The uniformization over a totally bounded target: both moduli move to the
// net parameters (lambda / 2 gamma(...), 3k+2).
struct PsiChiNet {
  BigInt chi;
  BigInt psi;
  BigInt net_size;
};

inline PsiChiNet chi1_psi1(const ModuliBundle& bundle, const Rational& lambda, const BigInt& k,
                           const BigInt& N) {
  detail::PsiArgs a = detail::psi_args(bundle, lambda, k);
  Rational ball = bundle.b.eval(lambda / 2) + bundle.d_bound;
  BigInt net = bundle.gamma(bundle.gpack.iota(ball, a.k1));
  PsiChi pc = psi0_chi0(bundle, a.lambda_net, a.k1, N);
  return {pc.chi, pc.psi, net};
}

// Set-fluctuation count for an anchor set of size p: p * psi.
inline BigInt set_fluctuation_multiplier(const BigInt& psi, const BigInt& p) {
  if (p < 0) throw std::invalid_argument("set_fluctuation_multiplier: negative set size");
  return p * psi;
}

// Psi(lambda, k, g, q) = g~ iterated q * Z_{f,h,b0}(lambda_net, 3k+2) times
// from 0.
inline BigInt psi_meta(const ModuliBundle& bundle, const Rational& lambda, const BigInt& k,
                       const CounterexampleFunction& g, const BigInt& q, EvalBudget& budget) {
  detail::PsiArgs a = detail::psi_args(bundle, lambda, k);
  Rational eps = Rational(1) / Rational(a.k1 + 1);
  BigInt count = q * detail::rs_fluctuation_count(bundle.rs, a.lambda_net, eps);
  return iterate_tilde(g, count, budget);
}

struct DeltaBranch {
  BigInt k_index;   // k^lambda_i
  BigInt psi;       // Psi(lambda_hat, k_i, h_i, p_net)
  BigInt ztilde;    // feeds k^lambda_{i+1}; not evaluated for the last index
  bool ztilde_set = false;
  BigInt delta_i;
};

struct DeltaTrace {
  bool exceeded = false;
  std::string blocking;  // first intractable intermediate, symbolically
  BigInt value;          // the rate Delta(lambda, k, g); valid when !exceeded
  Rational lambda_hat;
  BigInt p_net;
  BigInt outer_range;    // Gamma = gamma(iota_{2 b_{lambda/3}}(2 nu(2k+1)+1))
  std::vector<DeltaBranch> branches;
  std::uint64_t steps_used = 0;
};

namespace detail {

inline BigInt psi_windowed(const ModuliBundle& bundle, const Rational& lambda, const BigInt& k,
                           const WindowedG& hw, const BigInt& q, EvalBudget& budget) {
  PsiArgs a = psi_args(bundle, lambda, k);
  Rational eps = Rational(1) / Rational(a.k1 + 1);
  BigInt count = q * rs_fluctuation_count(bundle.rs, a.lambda_net, eps);
  return hw.iterate(count, budget);
}

// Z~(lambda, k, g, q) = zeta(p_rs, e_rs, N) at N = Psi(lambda, k, g, q).
// A collapsed window can make Psi = 0; the RS horizon is then clamped to 1
// (a zero-length premise is vacuous and the theorem's own derivation never
// reaches it).
inline BigInt ztilde(const ModuliBundle& bundle, const Rational& lambda, const BigInt& k,
                     const BigInt& psi_value) {
  PsiArgs a = psi_args(bundle, lambda, k);
  Rational eps = Rational(1) / Rational(a.k1 + 1);
  BigInt N = psi_value < 1 ? BigInt(1) : psi_value;
  RSTriple t = rs_triple(bundle.rs, a.lambda_net, eps, N);
  BigInt r = error_index(t.e);
  return bundle.zeta(t.p, r, psi_value);
}

}  // namespace detail

// The rate of metastability Delta(lambda, k, g), evaluated exactly under a
// budget with every intermediate recorded. On budget exhaustion the trace
// names the blocking intermediate and keeps all branches computed so far.
inline DeltaTrace delta(const ModuliBundle& bundle, const Rational& lambda, const BigInt& k,
                        const CounterexampleFunction& g, EvalBudget budget = EvalBudget::from_env()) {
  if (lambda <= 0) throw std::invalid_argument("delta: lambda must be > 0");
  if (k < 0) throw std::invalid_argument("delta: k must be a natural number");
  DeltaTrace trace;
  try {
    const BigInt nu1 = bundle.gpack.nu(2 * k + 1);
    const BigInt idx_outer = 2 * nu1 + 1;
    const BigInt idx_net = 6 * nu1 + 5;
    const Rational b3 = bundle.b.eval(lambda / 3);
    const BigInt outer = bundle.gamma(bundle.gpack.iota(2 * b3, idx_outer));
    const Rational lambda_hat = lambda / (3 * Rational(outer + 1));
    const Rational net_ball = std::max(Rational(2 * b3), Rational(b3 + bundle.d_bound));
    const BigInt p_net = bundle.gamma(bundle.gpack.iota(net_ball, idx_net));

    trace.lambda_hat = lambda_hat;
    trace.p_net = p_net;
    trace.outer_range = outer;

    if (outer > BigInt(budget.max_steps))
      throw BudgetExceededError("outer branch range Gamma = " + outer.str());

    const Rational mu = lambda / 3;
    BigInt k_cur = std::max(idx_net, k);  // k^lambda_0
    BigInt running = 0;                   // max{Z~_i, k_i | i so far}
    BigInt best = 0;
    const std::uint64_t branch_count = outer.convert_to<std::uint64_t>() + 1;
    for (std::uint64_t i = 0; i < branch_count; ++i) {
      budget.charge(1, "Delta branch");
      DeltaBranch br;
      br.k_index = k_cur;
      detail::WindowedG hw{&bundle, mu, k_cur, g};
      br.psi = detail::psi_windowed(bundle, lambda_hat, k_cur, hw, p_net, budget);
      br.delta_i = detail::phi_prime_max(bundle, mu, k_cur, br.psi, budget);
      best = std::max(best, br.delta_i);
      if (i + 1 < branch_count) {
        br.ztilde = detail::ztilde(bundle, lambda_hat, k_cur, br.psi);
        br.ztilde_set = true;
        running = std::max(running, std::max(br.ztilde, k_cur));
        trace.branches.push_back(br);
        k_cur = running;  // k^lambda_{i+1} = max{Z~_j, k_j | j <= i}
      } else {
        trace.branches.push_back(br);
      }
    }
    trace.value = best;
  } catch (const BudgetExceededError& e) {
    trace.exceeded = true;
    trace.blocking = e.intermediate;
  }
  trace.steps_used = budget.steps_used;
  return trace;
}

// Empirical check of the metastability conclusion at a feasible n*:
// the frequency of paths where EVERY n <= n* has a 1/(k+1)-unstable window
// [n; n+g(n)], judged against lambda. DistFn(p, i, j) -> d(x_i, x_j) on path p.
template <class DistFn>
EmpiricalVerdict empirical_metastability(std::size_t paths, std::size_t horizon, DistFn dist,
                                         std::size_t n_star, std::size_t k,
                                         const CounterexampleFunction& g, double lambda,
                                         bool use_ci = false) {
  if (paths == 0) throw std::invalid_argument("empirical_metastability: no paths");
  std::vector<std::size_t> window_end(n_star + 1);
  for (std::size_t n = 0; n <= n_star; ++n) {
    BigInt e = g.tilde(BigInt(n));
    if (e > BigInt(horizon))
      throw std::invalid_argument("empirical_metastability: horizon too short for window [" +
                                  std::to_string(n) + "; " + e.str() + "]");
    window_end[n] = e.convert_to<std::size_t>();
  }
  const double thresh = 1.0 / (static_cast<double>(k) + 1.0);
  std::size_t hits = 0;
  for (std::size_t p = 0; p < paths; ++p) {
    bool all_unstable = true;
    for (std::size_t n = 0; n <= n_star && all_unstable; ++n) {
      bool unstable = false;
      for (std::size_t i = n; i <= window_end[n] && !unstable; ++i)
        for (std::size_t j = i + 1; j <= window_end[n] && !unstable; ++j)
          if (dist(p, i, j) > thresh) unstable = true;
      all_unstable = unstable;
    }
    if (all_unstable) ++hits;
  }
  return make_verdict(hits, paths, lambda, use_ci);
}

}  // namespace finmart
