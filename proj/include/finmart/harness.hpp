#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "finmart/bounds.hpp"
#include "finmart/config.hpp"
#include "finmart/counters.hpp"
#include "finmart/hadamard.hpp"
#include "finmart/metastability.hpp"
#include "finmart/moduli.hpp"
#include "finmart/processes.hpp"
#include "finmart/report.hpp"

namespace finmart {

struct RunOutcome {
  Json report;
  int exit_code = 0;  // 0 = all verdicts pass, 1 = a verdict failed, 2 = config/budget error
};

// ---------------------------------------------------------------------------
// Process fixtures: generator + exact integrability witnesses
// ---------------------------------------------------------------------------

struct ProcessFixture {
  GeneratorPtr gen;
  ModulusFamily moduli;
  Rational mean0;               // exact E[X_0]
  std::vector<double> eta;      // per-step schedules (zero when absent)
  std::vector<double> chi;
  std::string summary;
};

namespace harness_detail {

struct Schedule {
  Rational scale;  // value_n = scale * ratio^n
  Rational ratio;

  static Schedule zero() { return {Rational(0), Rational(1)}; }

  static Schedule parse(const std::string& text) {
    std::istringstream in(text);
    std::string kind;
    in >> kind;
    if (kind == "zero") return zero();
    if (kind == "const") {
      std::string v;
      in >> v;
      return {parse_rational(v), Rational(1)};
    }
    if (kind == "geom") {
      std::string a, r;
      in >> a >> r;
      Rational ratio = parse_rational(r);
      if (!(ratio > 0 && ratio < 1)) throw ConfigError("geom schedule needs ratio in (0,1)");
      return {parse_rational(a), ratio};
    }
    throw ConfigError("unknown schedule '" + text + "' (zero | const c | geom a r)");
  }

  Rational at(std::size_t n) const {
    Rational v = scale;
    for (std::size_t i = 0; i < n; ++i) v *= ratio;
    return v;
  }

  std::vector<double> sampled(std::size_t len) const {
    std::vector<double> out(len);
    double v = to_double(scale), r = to_double(ratio);
    for (std::size_t n = 0; n < len; ++n) {
      out[n] = v;
      v *= r;
    }
    return out;
  }
};

// Exact per-step moduli of absolute continuity from closed-form second
// moments (Cauchy-Schwarz: mu_n(eps) = eps^2 / E[X_n^2]).
inline ModulusFamily second_moment_family(std::vector<Rational> m2) {
  std::vector<AbsContModulus> prefix;
  prefix.reserve(m2.size());
  for (auto& s : m2)
    prefix.push_back(s > 0 ? AbsContModulus::quadratic_over(s) : AbsContModulus::identity());
  AbsContModulus tail = prefix.empty() ? AbsContModulus::identity() : prefix.back();
  return ModulusFamily(std::move(prefix), tail);
}

}  // namespace harness_detail

inline ProcessFixture make_process(const Config& cfg, std::size_t horizon) {
  using harness_detail::Schedule;
  std::string kind = cfg.require("process", "kind");
  ProcessFixture fx;
  fx.eta.assign(horizon, 0.0);
  fx.chi.assign(horizon, 0.0);

  if (kind == "multiplicative") {
    Rational theta = cfg.rational("process", "theta");
    Rational x0 = cfg.rational_or("process", "x0", Rational(1));
    if (theta <= 0 || x0 < 0) throw ConfigError("multiplicative: need theta > 0, x0 >= 0");
    fx.gen = multiplicative(to_double(theta), to_double(x0));
    // E[X_n^2] = x0^2 (4 theta^2 / 3)^n, exactly
    Rational u2 = Rational(4 * theta * theta / 3);
    std::vector<Rational> m2(horizon + 1);
    Rational cur = x0 * x0;
    for (std::size_t n = 0; n <= horizon; ++n) {
      m2[n] = cur < 1 ? Rational(1) : cur;  // a valid (weaker) modulus keeps eps^2 scale stable
      cur *= u2;
    }
    fx.moduli = harness_detail::second_moment_family(std::move(m2));
    fx.mean0 = x0;
    fx.summary = "multiplicative(theta=" + format_rational(theta) + ")";
    return fx;
  }
  if (kind == "polya") {
    double r0 = to_double(cfg.rational_or("process", "r0", Rational(1)));
    double b0 = to_double(cfg.rational_or("process", "b0", Rational(1)));
    fx.gen = polya_urn(r0, b0);
    fx.moduli = ModulusFamily::uniform(AbsContModulus::identity());  // X_n in [0, 1]
    fx.mean0 = Rational(cfg.rational_or("process", "r0", Rational(1)) /
                        (cfg.rational_or("process", "r0", Rational(1)) +
                         cfg.rational_or("process", "b0", Rational(1))));
    fx.summary = "polya_urn";
    return fx;
  }
  if (kind == "rs_canonical") {
    Schedule chi = Schedule::parse(cfg.get_or("process", "chi", "zero"));
    Schedule eta = Schedule::parse(cfg.get_or("process", "eta", "zero"));
    Rational x0 = cfg.rational_or("process", "x0", Rational(1));
    fx.chi = chi.sampled(horizon);
    fx.eta = eta.sampled(horizon);
    // the generator must emit bitwise the same schedule the verifier sees
    auto chis = fx.chi;
    auto etas = fx.eta;
    auto chi_fn = [chis](std::size_t n) { return n < chis.size() ? chis[n] : 0.0; };
    auto eta_fn = [etas](std::size_t n) { return n < etas.size() ? etas[n] : 0.0; };
    fx.gen = rs_canonical(chi_fn, eta_fn, to_double(x0));
    // exact moment recursion: with B in {0,2} fair,
    // E[X_{n+1}]   = (1+chi_n) E[X_n] + eta_n
    // E[X_{n+1}^2] = 2 ((1+chi_n)^2 E[X_n^2] + 2 (1+chi_n) eta_n E[X_n] + eta_n^2)
    std::vector<Rational> m2(horizon + 1);
    Rational m1 = x0, s2 = x0 * x0;
    for (std::size_t n = 0; n <= horizon; ++n) {
      m2[n] = s2 < 1 ? Rational(1) : s2;
      Rational c = 1 + chi.at(n), e = eta.at(n);
      s2 = Rational(2) * (c * c * s2 + 2 * c * e * m1 + e * e);
      m1 = c * m1 + e;
    }
    fx.moduli = harness_detail::second_moment_family(std::move(m2));
    fx.mean0 = x0;
    fx.summary = "rs_canonical";
    return fx;
  }
  if (kind == "bounded_walk") {
    Rational x0 = cfg.rational_or("process", "x0", Rational(0));
    Rational step = cfg.rational_or("process", "step", Rational(1));
    Rational lo = cfg.rational_or("process", "lo", Rational(0));
    Rational hi = cfg.rational_or("process", "hi", Rational(10));
    fx.gen = bounded_walk(to_double(x0), to_double(step), to_double(lo), to_double(hi));
    fx.moduli = ModulusFamily::uniform(
        AbsContModulus::linear_over(hi > 1 ? hi : Rational(1)));
    fx.mean0 = x0;
    fx.summary = "bounded_walk";
    return fx;
  }
  if (kind == "constant") {
    Rational c = cfg.rational_or("process", "value", Rational(1));
    fx.gen = constant_process(to_double(c));
    fx.moduli = ModulusFamily::uniform(
        AbsContModulus::linear_over(c > 1 ? c : Rational(1)));
    fx.mean0 = c;
    fx.summary = "constant";
    return fx;
  }
  throw ConfigError("unknown process kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Shared helpers for the verification drivers
// ---------------------------------------------------------------------------

namespace harness_detail {

struct EnsembleSpec {
  std::size_t paths;
  std::size_t horizon;
  std::uint64_t seed;
};

inline EnsembleSpec ensemble_spec(const Config& cfg) {
  EnsembleSpec s;
  s.paths = cfg.integer_or("ensemble", "paths", 10000);
  s.horizon = cfg.integer_or("ensemble", "horizon", 100);
  s.seed = cfg.integer_or("ensemble", "seed", 1);
  if (s.paths < 1 || s.horizon < 1) throw ConfigError("[ensemble] needs paths >= 1, horizon >= 1");
  return s;
}

inline Json grade_json(const SupermartingaleGrade& g) {
  return Json{{"lambda_star", format_rational(g.lambda_star)},
              {"eps_star", format_rational(g.eps_star)}};
}

// Summary of per-step premise verdicts: the premise holds empirically when
// every step passes (point-estimate mode; the thresholds are typically far
// below Monte Carlo resolution, so only exact zero counts can pass).
inline Json premise_json(const std::vector<EmpiricalVerdict>& vs, bool& ok) {
  double worst = 0.0;
  ok = true;
  for (const auto& v : vs) {
    worst = std::max(worst, v.estimate);
    ok = ok && v.pass;
  }
  return Json{{"steps", vs.size()}, {"worst_violation_frequency", worst}, {"holds", ok}};
}

struct JStats {
  std::vector<std::size_t> counts;
  std::size_t max = 0;
  std::size_t p999 = 0;
  std::size_t at_least_bound = 0;
};

inline JStats fluctuation_stats(const PathEnsemble& ens, double eps, const BigInt& bound) {
  JStats st;
  st.counts.reserve(ens.paths());
  for (std::size_t p = 0; p < ens.paths(); ++p) {
    std::size_t j = count_fluctuations(ens.path(p), eps, ens.values.cols).count;
    st.counts.push_back(j);
    st.max = std::max(st.max, j);
    if (BigInt(j) >= bound) ++st.at_least_bound;
  }
  std::vector<std::size_t> sorted = st.counts;
  std::sort(sorted.begin(), sorted.end());
  std::size_t idx = static_cast<std::size_t>(std::ceil(0.999 * double(sorted.size())));
  if (idx > 0) --idx;
  st.p999 = sorted[idx];
  return st;
}

}  // namespace harness_detail

// ---------------------------------------------------------------------------
// verify <theorem-id>
// ---------------------------------------------------------------------------

inline RunOutcome run_verify(const std::string& theorem_id, const Config& cfg) {
  using namespace harness_detail;
  auto spec = ensemble_spec(cfg);
  Json report = report_skeleton(cfg, "verify");
  report["theorem"] = theorem_id;
  bool pass = true;

  auto needs_process = [&]() {
    ProcessFixture fx = make_process(cfg, spec.horizon);
    auto sim = simulate(*fx.gen, spec.paths, spec.horizon, RandomSource(spec.seed));
    return std::pair<ProcessFixture, SimResult>(std::move(fx), std::move(sim));
  };

  if (theorem_id == "doob-decomp") {
    auto [fx, sim] = needs_process();
    double lambda = to_double(cfg.rational("params", "lambda"));
    double eps = to_double(cfg.rational("params", "epsilon"));
    auto premise =
        verify_finitary_supermartingale(sim.ensemble, sim.cond_mean_trace, lambda, eps, spec.horizon);
    bool premise_ok;
    report["premise"] = premise_json(premise, premise_ok);

    auto d = doob_decompose(sim.ensemble, sim.cond_mean_trace);
    double worst_rel = 0.0;
    for (std::size_t i = 0; i < sim.ensemble.values.data.size(); ++i) {
      double x = sim.ensemble.values.data[i];
      double yz = d.martingale_part.values.data[i] + d.predictable_part.values.data[i];
      worst_rel = std::max(worst_rel, std::abs(yz - x) / std::max(1.0, std::abs(x)));
    }
    bool identity_ok = worst_rel <= 1e-12;

    // the decomposition's conclusion: Z is lambda-eps-N-nonincreasing
    bool z_ok = true;
    double worst_freq = 0.0;
    for (std::size_t n = 0; n < spec.horizon; ++n) {
      std::size_t hits = 0;
      for (std::size_t p = 0; p < spec.paths; ++p)
        if (d.predictable_part.values.at(p, n + 1) > d.predictable_part.values.at(p, n) + eps)
          ++hits;
      auto v = make_verdict(hits, spec.paths, lambda);
      worst_freq = std::max(worst_freq, v.estimate);
      z_ok = z_ok && v.pass;
    }
    report["identity_max_rel_error"] = worst_rel;
    report["z_nonincreasing"] = Json{{"worst_frequency", worst_freq}, {"holds", z_ok}};
    pass = premise_ok && identity_ok && z_ok;
  } else if (theorem_id == "descent") {
    auto [fx, sim] = needs_process();
    Rational eps = cfg.rational("params", "epsilon");
    auto grade = descent_premise(fx.moduli, BigInt(spec.horizon), eps);
    report["grade"] = grade_json(grade);
    auto premise = verify_finitary_supermartingale(sim.ensemble, sim.cond_mean_trace,
                                                   to_double(grade.lambda_star),
                                                   to_double(grade.eps_star), spec.horizon);
    bool premise_ok;
    report["premise"] = premise_json(premise, premise_ok);

    std::vector<double> mean(spec.horizon + 1, 0.0), se(spec.horizon + 1, 0.0);
    for (std::size_t n = 0; n <= spec.horizon; ++n) {
      double s = 0, ss = 0;
      for (std::size_t p = 0; p < spec.paths; ++p) {
        double v = sim.ensemble.values.at(p, n);
        s += v;
        ss += v * v;
      }
      mean[n] = s / double(spec.paths);
      double var = ss / double(spec.paths) - mean[n] * mean[n];
      se[n] = std::sqrt(std::max(0.0, var) / double(spec.paths));
    }
    bool descent_ok = true;
    double epsd = to_double(eps);
    for (std::size_t n = 0; n <= spec.horizon && descent_ok; ++n)
      for (std::size_t m = n; m <= spec.horizon; ++m)
        if (mean[m] > mean[n] + epsd + 3.0 * (se[n] + se[m])) {
          descent_ok = false;
          break;
        }
    report["descent_holds"] = descent_ok;
    pass = premise_ok && descent_ok;
  } else if (theorem_id == "dcrs-ineq") {
    auto [fx, sim] = needs_process();
    Rational alpha = cfg.rational("params", "alpha");
    Rational beta = cfg.rational("params", "beta");
    Rational eps = cfg.rational("params", "epsilon");
    if (!(alpha < beta)) throw ConfigError("dcrs-ineq: need alpha < beta");
    Rational delta = beta - alpha;
    Rational K = cfg.rational_or("params", "K", fx.mean0);
    auto grade = downcrossing_premise(fx.moduli, BigInt(spec.horizon), eps, delta);
    report["grade"] = grade_json(grade);
    auto premise = verify_finitary_supermartingale(sim.ensemble, sim.cond_mean_trace,
                                                   to_double(grade.lambda_star),
                                                   to_double(grade.eps_star), spec.horizon);
    bool premise_ok;
    report["premise"] = premise_json(premise, premise_ok);

    double a = to_double(alpha), b = to_double(beta);
    double sum = 0, sumsq = 0;
    double tail = 0;
    for (std::size_t p = 0; p < spec.paths; ++p) {
      auto row = sim.ensemble.path(p);
      double dcount = double(count_downcrossings(row, a, b, spec.horizon).count);
      sum += dcount;
      sumsq += dcount * dcount;
      tail += std::max(0.0, row[spec.horizon] - b);
    }
    double mean_d = sum / double(spec.paths);
    double se_d = std::sqrt(std::max(0.0, sumsq / double(spec.paths) - mean_d * mean_d) /
                            double(spec.paths));
    tail /= double(spec.paths);
    double bound =
        to_double(downcrossing_bound(K, alpha, beta, Rational(0), eps)) + tail / to_double(delta);
    bool dominated = mean_d + 3.0 * se_d <= bound;
    report["empirical_mean_downcrossings"] = mean_d;
    report["mc_stderr"] = se_d;
    report["tail_mean"] = tail;
    report["bound"] = bound;
    report["dominated"] = dominated;
    pass = premise_ok && dominated;
  } else if (theorem_id == "ville") {
    auto [fx, sim] = needs_process();
    Rational alpha = cfg.rational("params", "alpha");
    Rational eps = cfg.rational("params", "epsilon");
    auto grade = ville_premise(fx.moduli, BigInt(spec.horizon), eps);
    report["grade"] = grade_json(grade);
    auto premise = verify_finitary_supermartingale(sim.ensemble, sim.cond_mean_trace,
                                                   to_double(grade.lambda_star),
                                                   to_double(grade.eps_star), spec.horizon);
    bool premise_ok;
    report["premise"] = premise_json(premise, premise_ok);

    double bound = to_double(ville_bound(fx.mean0, alpha, eps));
    double a = to_double(alpha);
    std::size_t hits = 0;
    for (std::size_t p = 0; p < spec.paths; ++p) {
      auto row = sim.ensemble.path(p);
      for (double v : row)
        if (v >= a) {
          ++hits;
          break;
        }
    }
    auto verdict = make_verdict(hits, spec.paths, bound, /*use_ci=*/true);
    report["verdicts"].push_back(verdict_json(verdict));
    pass = premise_ok && verdict.pass;
  } else if (theorem_id == "stopped") {
    auto [fx, sim] = needs_process();
    double lambda = to_double(cfg.rational("params", "lambda"));
    double eps = to_double(cfg.rational("params", "epsilon"));
    double threshold = to_double(cfg.rational_or("params", "stop_below", Rational(1, 4)));
    StoppingRule rule{[threshold](std::span<const double> prefix) {
                        return prefix.back() < threshold;
                      },
                      spec.horizon};
    auto base = verify_finitary_supermartingale(sim.ensemble, sim.cond_mean_trace, lambda, eps,
                                                spec.horizon);
    auto stopped = stop_process(sim.ensemble, rule);
    auto strace = stopped_cond_trace(sim.ensemble, sim.cond_mean_trace, rule);
    auto lifted = verify_finitary_supermartingale(stopped, strace, lambda, eps, spec.horizon);
    bool base_ok, lifted_ok;
    report["premise"] = premise_json(base, base_ok);
    report["stopped"] = premise_json(lifted, lifted_ok);
    pass = base_ok && lifted_ok;
  } else if (theorem_id == "integral") {
    auto [fx, sim] = needs_process();
    double lambda = to_double(cfg.rational("params", "lambda"));
    Rational eps = cfg.rational("params", "epsilon");
    Rational K_C = cfg.rational_or("params", "K_C", Rational(2));
    double kc = to_double(K_C);
    double threshold = to_double(cfg.rational_or("params", "gate", Rational(1, 2)));
    Matrix cv(spec.paths, spec.horizon + 1, 0.0);
    for (std::size_t p = 0; p < spec.paths; ++p)
      for (std::size_t n = 1; n <= spec.horizon; ++n)
        cv.at(p, n) = sim.ensemble.values.at(p, n - 1) > threshold ? kc : kc / 4.0;
    PredictableProcess c{std::move(cv), kc};
    auto integ = stochastic_integral(c, sim.ensemble);
    auto itrace = integral_cond_trace(c, sim.ensemble, sim.cond_mean_trace, integ);
    auto base = verify_finitary_supermartingale(sim.ensemble, sim.cond_mean_trace, lambda,
                                                to_double(eps) / kc, spec.horizon);
    auto lifted = verify_finitary_supermartingale(integ, itrace, lambda, to_double(eps),
                                                  spec.horizon);
    bool base_ok, lifted_ok;
    report["premise"] = premise_json(base, base_ok);
    report["transformed"] = premise_json(lifted, lifted_ok);
    pass = base_ok && lifted_ok;
  } else if (theorem_id == "mart-fluct" || theorem_id == "rs-fluct") {
    auto [fx, sim] = needs_process();
    Rational lambda = cfg.rational("params", "lambda");
    Rational eps = cfg.rational("params", "epsilon");
    Rational K = cfg.rational_or("params", "K", Rational(fx.mean0 + 1));

    BigInt bound;
    bool premise_ok;
    if (theorem_id == "mart-fluct") {
      auto fb = martingale_fluctuation_bound(fx.moduli, K, lambda, eps, BigInt(spec.horizon));
      bound = fb.bound;
      report["grade"] = grade_json(fb.grade);
      auto premise = verify_finitary_supermartingale(sim.ensemble, sim.cond_mean_trace,
                                                     to_double(fb.grade.lambda_star),
                                                     to_double(fb.grade.eps_star), spec.horizon);
      report["premise"] = premise_json(premise, premise_ok);
    } else {
      RSParams params{StepFn::constant(BigInt(cfg.integer_or("params", "f", 1))),
                      StepFn::constant(BigInt(cfg.integer_or("params", "h", 2))), K, fx.moduli};
      RSTriple trip = rs_triple(params, lambda, eps, BigInt(spec.horizon));
      bound = trip.Z;
      report["triple"] = Json{{"Z", trip.Z.str()},
                              {"e", format_rational(trip.e)},
                              {"p", format_rational(trip.p)},
                              {"eps0", format_rational(trip.eps0)},
                              {"lambda0", format_rational(trip.lambda0)},
                              {"alpha", trip.alpha.str()},
                              {"b", format_rational(trip.b)}};
      auto premise = verify_rs_process(sim.ensemble, sim.cond_mean_trace, fx.eta, fx.chi,
                                       to_double(trip.p), to_double(trip.e), spec.horizon);
      report["premise"] = premise_json(premise, premise_ok);
    }
    auto st = fluctuation_stats(sim.ensemble, to_double(eps), bound);
    auto verdict = make_verdict(st.at_least_bound, spec.paths, to_double(lambda));
    report["bound"] = bound.str();
    report["max_J"] = st.max;
    report["p999_J"] = st.p999;
    report["verdicts"].push_back(verdict_json(verdict));
    bool percentile_ok = BigInt(st.p999) <= bound;
    report["p999_below_bound"] = percentile_ok;
    pass = premise_ok && verdict.pass && percentile_ok;
  } else if (theorem_id == "mart-metastable") {
    auto [fx, sim] = needs_process();
    Rational lambda = cfg.rational("params", "lambda");
    Rational eps = cfg.rational("params", "epsilon");
    Rational K = cfg.rational_or("params", "K", Rational(fx.mean0 + 1));
    auto prem = uniform_convergence_premise(fx.moduli, K, lambda, eps);
    report["N_K"] = prem.horizon.str();
    report["grade"] = grade_json(prem.grade);
    std::size_t used = spec.horizon;
    if (prem.horizon < BigInt(used)) used = prem.horizon.convert_to<std::size_t>();
    auto premise = verify_finitary_supermartingale(sim.ensemble, sim.cond_mean_trace,
                                                   to_double(prem.grade.lambda_star),
                                                   to_double(prem.grade.eps_star), used);
    bool premise_ok;
    report["premise"] = premise_json(premise, premise_ok);
    // consecutive windows [i; i+1]: the theorem guarantees SOME window is
    // stable with probability >= 1 - lambda
    double e = to_double(eps);
    double best = 1.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i + 1 <= used; ++i) {
      std::size_t hits = 0;
      for (std::size_t p = 0; p < spec.paths; ++p)
        if (std::abs(sim.ensemble.values.at(p, i + 1) - sim.ensemble.values.at(p, i)) >= e) ++hits;
      double est = double(hits) / double(spec.paths);
      if (est < best) {
        best = est;
        best_i = i;
      }
    }
    report["best_window"] = best_i;
    report["best_window_estimate"] = best;
    bool ok = best < to_double(lambda);
    report["window_found"] = ok;
    pass = premise_ok && ok;
  } else {
    throw ConfigError("unknown theorem id '" + theorem_id + "'");
  }

  report["pass"] = pass;
  return {report, pass ? 0 : 1};
}

// ---------------------------------------------------------------------------
// bound <name> [params...]
// ---------------------------------------------------------------------------

inline RunOutcome run_bound(const std::vector<std::string>& args) {
  if (args.empty()) throw ConfigError("bound: missing calculator name");
  const std::string& name = args[0];
  auto arg = [&](std::size_t i) -> Rational {
    if (i >= args.size()) throw ConfigError("bound " + name + ": missing argument " + std::to_string(i));
    return parse_rational(args[i]);
  };
  Json report{{"schema_version", kReportSchemaVersion},
              {"artifact_version", kArtifactVersion},
              {"kind", "bound"},
              {"name", name}};
  Json jargs = Json::array();
  for (std::size_t i = 1; i < args.size(); ++i) jargs.push_back(args[i]);
  report["args"] = jargs;

  if (name == "N_K") {
    report["value"] = uniform_horizon(arg(1), arg(2), arg(3)).str();
  } else if (name == "mart-fluct") {
    Rational kp1 = arg(1) + 1;
    Rational l = arg(2), e = arg(3);
    report["value"] = rat_ceil(Rational(2048 * kp1 * kp1 / (l * l * e * e))).str();
  } else if (name == "rs-Z") {
    RSParams params{StepFn::constant(rat_num(arg(1))), StepFn::constant(rat_num(arg(2))), arg(3),
                    ModulusFamily::uniform(AbsContModulus::identity())};
    report["value"] = rs_triple(params, arg(4), arg(5), 1).Z.str();
  } else if (name == "zeta") {
    Rational c = arg(1);
    BigInt r = rat_num(arg(2));
    report["value"] = rat_ceil(Rational(64 * c * c * Rational((r + 1) * (r + 1)))).str();
  } else if (name == "km-phi") {
    auto phi = LiminfModulus::km_theta(Rational(arg(1) * arg(1) + 1),
                                       Rational(arg(2) * (1 - arg(2))));
    report["value"] = phi.phi(arg(3), rat_num(arg(4)), rat_num(arg(5))).str();
  } else if (name == "km-closedness") {
    auto [a1, a2] = km_closedness(rat_num(arg(1)));
    report["value"] = Json::array({a1.str(), a2.str()});
  } else if (name == "gamma-ball") {
    auto g = gamma_euclidean_ball(static_cast<unsigned>(rat_num(arg(1)).convert_to<unsigned>()),
                                  arg(2));
    report["value"] = g(rat_num(arg(3))).str();
  } else if (name == "theta") {
    auto th = theta_constant(arg(1));
    report["value"] = th.theta(rat_num(arg(2)), arg(3)).str();
  } else {
    throw ConfigError("unknown bound calculator '" + name + "'");
  }
  return {report, 0};
}

// ---------------------------------------------------------------------------
// delta --config
// ---------------------------------------------------------------------------

namespace harness_detail {

inline CounterexampleFunction parse_g(const std::string& text) {
  std::istringstream in(text);
  std::string kind;
  in >> kind;
  if (kind == "const") {
    std::string c;
    in >> c;
    return CounterexampleFunction::constant(BigInt(c));
  }
  if (kind == "affine") {
    std::string a, b;
    in >> a >> b;
    return CounterexampleFunction::affine(BigInt(a), BigInt(b));
  }
  throw ConfigError("unknown counterexample function '" + text + "' (const c | affine a b)");
}

inline ModuliBundle bundle_from_config(const Config& cfg) {
  Rational c = cfg.rational_or("bundle", "c", Rational(1));
  Rational step = cfg.rational_or("bundle", "step", Rational(1, 2));
  KmModuli m = km_moduli(c, theta_constant(step));
  std::string gamma_kind = cfg.get_or("bundle", "gamma", "singleton");
  TotalBoundednessModulus gamma = gamma_finite(1);
  if (gamma_kind == "singleton") {
    gamma = gamma_finite(1);
  } else if (gamma_kind == "finite") {
    gamma = gamma_finite(BigInt(cfg.integer_or("bundle", "gamma_size", 1)));
  } else if (gamma_kind == "euclidean") {
    gamma = gamma_euclidean_ball(static_cast<unsigned>(cfg.integer_or("bundle", "dim", 2)), c);
  } else {
    throw ConfigError("unknown gamma kind '" + gamma_kind + "'");
  }
  ModuliBundle b = km_bundle(m, std::move(gamma), c);
  std::string phi_kind = cfg.get_or("bundle", "phi", "km-theta");
  if (phi_kind == "trivial") b.phi = LiminfModulus::trivial_modulus();
  else if (phi_kind != "km-theta") throw ConfigError("unknown phi kind '" + phi_kind + "'");
  return b;
}

inline Json delta_trace_json(const DeltaTrace& tr) {
  Json j{{"exceeded", tr.exceeded},
         {"lambda_hat", format_rational(tr.lambda_hat)},
         {"p_net", tr.p_net.str()},
         {"outer_range", tr.outer_range.str()},
         {"steps_used", tr.steps_used}};
  if (tr.exceeded) j["blocking"] = tr.blocking;
  else j["value"] = tr.value.str();
  Json branches = Json::array();
  for (const auto& br : tr.branches) {
    Json bj{{"k_index", br.k_index.str()}, {"psi", br.psi.str()}, {"delta_i", br.delta_i.str()}};
    if (br.ztilde_set) bj["ztilde"] = br.ztilde.str();
    branches.push_back(bj);
  }
  j["branches"] = branches;
  return j;
}

}  // namespace harness_detail

inline RunOutcome run_delta(const Config& cfg) {
  using namespace harness_detail;
  ModuliBundle bundle = bundle_from_config(cfg);
  Rational lambda = cfg.rational_or("params", "lambda", Rational(1, 2));
  BigInt k(cfg.integer_or("params", "k", 0));
  CounterexampleFunction g = parse_g(cfg.get_or("params", "g", "const 0"));
  EvalBudget budget = EvalBudget::from_env();
  if (auto b = cfg.get("params", "budget")) budget.max_steps = cfg.integer("params", "budget");

  DeltaTrace tr = delta(bundle, lambda, k, g, budget);
  Json report = report_skeleton(cfg, "delta");
  report["trace"] = delta_trace_json(tr);
  report["pass"] = !tr.exceeded;
  return {report, tr.exceeded ? 2 : 0};
}

// ---------------------------------------------------------------------------
// km --config  (end-to-end scheme driver)
// ---------------------------------------------------------------------------

inline RunOutcome run_km(const Config& cfg) {
  using namespace harness_detail;
  auto spec = ensemble_spec(cfg);
  unsigned dim = static_cast<unsigned>(cfg.integer_or("km", "dim", 2));
  Rational c = cfg.rational_or("km", "c", Rational(3, 2));
  Rational step = cfg.rational_or("km", "step", Rational(1, 2));
  double radius = to_double(c) + 1.0;

  std::vector<double> x0(dim, 1.0);
  if (auto raw = cfg.get("km", "x0")) {
    std::istringstream in(*raw);
    for (auto& v : x0) {
      std::string tok;
      if (!(in >> tok)) throw ConfigError("[km] x0 needs one value per coordinate");
      v = to_double(parse_rational(tok));
    }
  }

  auto space = euclidean_ball_space(dim, radius, std::vector<double>(dim, 0.0));
  auto fam = projection_family(dim);
  double stepd = to_double(step);
  KMConfig kmcfg{space.point(x0), [stepd](std::size_t) { return stepd; }, fam,
                 space.point(std::vector<double>(dim, 0.0)), c};
  auto moduli = km_moduli(c, theta_constant(step));

  // the liminf check may need to look past the configured horizon; one
  // simulation covers both (substreams make the prefix identical)
  Rational lim_lambda = cfg.rational_or("liminf", "lambda", Rational(1, 2));
  BigInt lim_k(cfg.integer_or("liminf", "k", 3));
  BigInt lim_N(cfg.integer_or("liminf", "N", 10));
  BigInt lim_end = moduli.phi.phi(lim_lambda, lim_k, lim_N);
  std::size_t sim_horizon = spec.horizon;
  if (lim_end > BigInt(sim_horizon)) {
    if (lim_end > BigInt(1000000)) throw ConfigError("km: liminf window too long to simulate");
    sim_horizon = lim_end.convert_to<std::size_t>();
  }

  auto run = run_skm(space, kmcfg, spec.paths, sim_horizon, RandomSource(spec.seed),
                     {space.point(std::vector<double>(dim, 0.0))});

  Json report = report_skeleton(cfg, "km");
  bool pass = true;

  // pathwise boundedness d(x_n, p) <= c (exact, per Lemma-level guarantee)
  double cb = to_double(c);
  bool bounded = true;
  for (const auto& path : run.paths)
    for (const auto& pt : path)
      if (space.distance(pt, kmcfg.fixed_point) > cb) bounded = false;
  report["pathwise_bounded"] = bounded;
  pass = pass && bounded;

  // Fejer step at the origin for the configured r values
  Json fejer = Json::array();
  for (std::uint64_t r : {0ull, 3ull, 7ull}) {
    auto chk = verify_fejer_step(run, 0, fam, moduli, BigInt(r), spec.horizon, 0.05);
    bool all_ok = chk.applicable;
    double worst = 0.0;
    for (const auto& v : chk.per_m) {
      worst = std::max(worst, v.estimate);
      all_ok = all_ok && v.pass;
    }
    fejer.push_back(Json{{"r", r},
                         {"applicable", chk.applicable},
                         {"required_af", chk.required_af.str()},
                         {"worst_frequency", worst},
                         {"pass", all_ok}});
    pass = pass && all_ok;
  }
  report["fejer_checks"] = fejer;

  // liminf-modulus verdict at the configured (lambda, k, N)
  {
    Json lim{{"lambda", format_rational(lim_lambda)}, {"k", lim_k.str()}, {"N", lim_N.str()},
             {"phi", lim_end.str()}};
    std::size_t endi = lim_end.convert_to<std::size_t>();
    std::size_t start = lim_N.convert_to<std::size_t>();
    std::size_t misses = 0;
    for (const auto& path : run.paths) {
      bool visited = false;
      for (std::size_t n = start; n <= endi && !visited; ++n)
        visited = af_membership(fam, path[n], lim_k) == AfVerdict::In;
      if (!visited) ++misses;
    }
    auto verdict = make_verdict(misses, run.paths.size(), to_double(lim_lambda));
    lim["verdict"] = verdict_json(verdict);
    pass = pass && verdict.pass;
    report["liminf"] = lim;
  }

  // terminal distance quantile (the end-to-end convergence check)
  {
    std::vector<double> finals;
    finals.reserve(run.paths.size());
    for (const auto& path : run.paths)
      finals.push_back(space.distance(path[spec.horizon], kmcfg.fixed_point));
    std::sort(finals.begin(), finals.end());
    double threshold = to_double(cfg.rational_or("km", "final_dist_threshold", Rational(1, 1000)));
    double quantile = to_double(cfg.rational_or("km", "final_dist_quantile", Rational(99, 100)));
    std::size_t need = static_cast<std::size_t>(std::ceil(quantile * double(finals.size())));
    std::size_t within = 0;
    for (double d : finals)
      if (d <= threshold) ++within;
    bool conv = within >= need;
    report["final_distance"] = Json{{"threshold", threshold},
                                    {"quantile", quantile},
                                    {"fraction_within", double(within) / double(finals.size())},
                                    {"pass", conv}};
    pass = pass && conv;
  }

  // trajectory decay table
  if (auto csv = cfg.get("output", "csv")) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t n = 0; n <= spec.horizon; ++n) {
      double sum = 0, worst = 0;
      for (const auto& path : run.paths) {
        double d = space.distance(path[n], kmcfg.fixed_point);
        sum += d;
        worst = std::max(worst, d);
      }
      rows.push_back({std::to_string(n), csv_double(sum / double(run.paths.size())),
                      csv_double(worst)});
    }
    write_csv(*csv, {"n", "mean_distance", "max_distance"}, rows);
    report["csv"] = *csv;
  }

  report["pass"] = pass;
  return {report, pass ? 0 : 1};
}

// ---------------------------------------------------------------------------
// simulate --config  (trajectory emission)
// ---------------------------------------------------------------------------

inline RunOutcome run_simulate(const Config& cfg) {
  using namespace harness_detail;
  auto spec = ensemble_spec(cfg);
  ProcessFixture fx = make_process(cfg, spec.horizon);
  auto sim = simulate(*fx.gen, spec.paths, spec.horizon, RandomSource(spec.seed));

  Json report = report_skeleton(cfg, "simulate");
  report["process"] = fx.summary;
  Json stats = Json::array();
  std::vector<std::vector<std::string>> rows;
  for (std::size_t n = 0; n <= spec.horizon; ++n) {
    double sum = 0, lo = sim.ensemble.values.at(0, n), hi = lo;
    for (std::size_t p = 0; p < spec.paths; ++p) {
      double v = sim.ensemble.values.at(p, n);
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    double mean = sum / double(spec.paths);
    rows.push_back({std::to_string(n), csv_double(mean), csv_double(lo), csv_double(hi)});
    if (n % std::max<std::size_t>(1, spec.horizon / 10) == 0)
      stats.push_back(Json{{"n", n}, {"mean", mean}, {"min", lo}, {"max", hi}});
  }
  report["summary"] = stats;
  if (auto csv = cfg.get("output", "csv")) {
    write_csv(*csv, {"n", "mean", "min", "max"}, rows);
    report["csv"] = *csv;
  }
  report["pass"] = true;
  return {report, 0};
}

}  // namespace finmart
