#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "finmart/ensemble.hpp"
#include "finmart/metastability.hpp"
#include "finmart/moduli.hpp"
#include "finmart/rational.hpp"
#include "finmart/rng.hpp"

namespace finmart {

// Space-tagged opaque point. Euclidean points carry coordinates; star-tree
// points a branch index and an offset from the center. Mixing points across
// spaces is a contract error.
struct Point {
  int space = -1;
  int branch = -1;              // -1 for Euclidean
  std::vector<double> x;        // coords, or {offset} for tree points
};

class SpaceInstance {
 public:
  enum class Kind { Euclidean, StarTree };

  static SpaceInstance euclidean_ball(unsigned dim, double radius, std::vector<double> center) {
    if (dim < 1 || center.size() != dim)
      throw std::invalid_argument("euclidean_ball: bad dimension/center");
    if (!(radius > 0)) throw std::invalid_argument("euclidean_ball: radius must be > 0");
    SpaceInstance s;
    s.kind_ = Kind::Euclidean;
    s.dim_ = dim;
    s.radius_ = radius;
    s.center_ = std::move(center);
    s.id_ = next_id();
    return s;
  }

  static SpaceInstance star_tree(std::vector<double> branch_lengths) {
    if (branch_lengths.empty()) throw std::invalid_argument("star_tree: no branches");
    for (double l : branch_lengths)
      if (!(l > 0)) throw std::invalid_argument("star_tree: branch lengths must be > 0");
    SpaceInstance s;
    s.kind_ = Kind::StarTree;
    s.branch_lengths_ = std::move(branch_lengths);
    s.radius_ = 0;
    for (double l : s.branch_lengths_) s.radius_ = std::max(s.radius_, l);
    s.id_ = next_id();
    return s;
  }

  Kind kind() const { return kind_; }
  int id() const { return id_; }
  unsigned dim() const { return dim_; }
  // Bound of the registered compact subset relative to the base point.
  double bound() const { return radius_; }

  Point base() const {
    if (kind_ == Kind::Euclidean) return point(center_);
    return tree_point(0, 0.0);
  }

  Point point(std::vector<double> coords) const {
    if (kind_ != Kind::Euclidean) throw std::invalid_argument("point: not a Euclidean space");
    if (coords.size() != dim_) throw std::invalid_argument("point: wrong dimension");
    Point p;
    p.space = id_;
    p.x = std::move(coords);
    return p;
  }

  Point tree_point(int branch, double offset) const {
    if (kind_ != Kind::StarTree) throw std::invalid_argument("tree_point: not a tree space");
    if (branch < 0 || static_cast<std::size_t>(branch) >= branch_lengths_.size())
      throw std::invalid_argument("tree_point: bad branch");
    if (offset < 0 || offset > branch_lengths_[branch])
      throw std::invalid_argument("tree_point: offset outside branch");
    Point p;
    p.space = id_;
    p.branch = branch;
    p.x = {offset};
    return p;
  }

  void check(const Point& p) const {
    if (p.space != id_) throw std::invalid_argument("point belongs to a different space");
  }

  double distance(const Point& a, const Point& b) const {
    check(a);
    check(b);
    if (kind_ == Kind::Euclidean) {
      double s = 0;
      for (unsigned i = 0; i < dim_; ++i) {
        double d = a.x[i] - b.x[i];
        s += d * d;
      }
      return std::sqrt(s);
    }
    // R-tree distances: along the branch, or through the center.
    if (a.branch == b.branch) return std::abs(a.x[0] - b.x[0]);
    return a.x[0] + b.x[0];
  }

  // (1-t) a (+) t b: the point z on the geodesic with d(a, z) = t d(a, b).
  Point geodesic(const Point& a, const Point& b, double t) const {
    check(a);
    check(b);
    if (t < 0 || t > 1) throw std::invalid_argument("geodesic: t outside [0,1]");
    if (kind_ == Kind::Euclidean) {
      std::vector<double> c(dim_);
      for (unsigned i = 0; i < dim_; ++i) c[i] = (1.0 - t) * a.x[i] + t * b.x[i];
      Point p;
      p.space = id_;
      p.x = std::move(c);
      return p;
    }
    if (a.branch == b.branch) {
      Point p;
      p.space = id_;
      p.branch = a.branch;
      p.x = {(1.0 - t) * a.x[0] + t * b.x[0]};
      return p;
    }
    double total = a.x[0] + b.x[0];
    double from_a = t * total;
    Point p;
    p.space = id_;
    if (from_a <= a.x[0]) {
      p.branch = a.branch;
      p.x = {a.x[0] - from_a};
    } else {
      p.branch = b.branch;
      p.x = {from_a - a.x[0]};
    }
    return p;
  }

 private:
  static int next_id() {
    static int counter = 0;
    return counter++;
  }

  Kind kind_ = Kind::Euclidean;
  int id_ = -1;
  unsigned dim_ = 0;
  double radius_ = 0;
  std::vector<double> center_;
  std::vector<double> branch_lengths_;
};

inline SpaceInstance euclidean_ball_space(unsigned dim, double radius,
                                          std::vector<double> center) {
  return SpaceInstance::euclidean_ball(dim, radius, std::move(center));
}

inline SpaceInstance star_tree_space(std::size_t branch_count, std::vector<double> lengths) {
  if (lengths.size() == 1) lengths.assign(branch_count, lengths[0]);
  if (lengths.size() != branch_count) throw std::invalid_argument("star_tree_space: lengths/count mismatch");
  return SpaceInstance::star_tree(std::move(lengths));
}

// Berg-Nikolaev quasi-inner product <xy, uv>.
inline double quasi_inner(const SpaceInstance& s, const Point& x, const Point& y, const Point& u,
                          const Point& v) {
  auto d2 = [&s](const Point& a, const Point& b) {
    double d = s.distance(a, b);
    return d * d;
  };
  return 0.5 * (d2(x, v) + d2(y, u) - d2(x, u) - d2(y, v));
}

// Residual (RHS - LHS) of the geodesic CN inequality; >= -tol certifies the
// instance at this quadruple.
inline double check_cn(const SpaceInstance& s, const Point& x, const Point& y, const Point& z,
                       double t) {
  auto d2 = [&s](const Point& a, const Point& b) {
    double d = s.distance(a, b);
    return d * d;
  };
  Point m = s.geodesic(x, y, t);
  double rhs = (1.0 - t) * d2(x, z) + t * d2(y, z) - t * (1.0 - t) * d2(x, y);
  return rhs - d2(m, z);
}

// Residual of the metric Cauchy-Schwartz inequality: d(x,y) d(u,v) - <xy,uv>.
inline double check_cs(const SpaceInstance& s, const Point& x, const Point& y, const Point& u,
                       const Point& v) {
  return s.distance(x, y) * s.distance(u, v) - quasi_inner(s, x, y, u, v);
}

// Residual of the quadratic identity d^2(x,z) = d^2(x,y) + d^2(y,z) + 2<xy,yz>.
inline double check_quadratic_identity(const SpaceInstance& s, const Point& x, const Point& y,
                                       const Point& z) {
  auto d2 = [&s](const Point& a, const Point& b) {
    double d = s.distance(a, b);
    return d * d;
  };
  return d2(x, z) - (d2(x, y) + d2(y, z) + 2.0 * quasi_inner(s, x, y, y, z));
}

// Residual of convexity of the metric: (1-t) d(x,z) + t d(y,z) - d((1-t)x (+) ty, z).
inline double check_convexity(const SpaceInstance& s, const Point& x, const Point& y,
                              const Point& z, double t) {
  Point m = s.geodesic(x, y, t);
  return (1.0 - t) * s.distance(x, z) + t * s.distance(y, z) - s.distance(m, z);
}

// A finite measurable family of nonexpansive maps with sampling weights.
// exact_mean_sq is the closed form z |-> E[d^2(T_v z, z)] when available.
struct NonexpansiveFamily {
  std::size_t count = 0;
  std::vector<double> weights;  // sums to 1
  std::function<Point(std::size_t, const Point&)> apply;
  std::function<double(const Point&)> exact_mean_sq;  // may be empty

  std::size_t sample(RandomStream& rng) const {
    double u = rng.uniform();
    double acc = 0;
    for (std::size_t v = 0; v + 1 < count; ++v) {
      acc += weights[v];
      if (u < acc) return v;
    }
    return count - 1;
  }
};

// V = {1..dim} uniform, T_i = orthogonal projection onto the i-th axis line
// through the origin. Common fixed point: the origin.
inline NonexpansiveFamily projection_family(unsigned dim) {
  if (dim < 1) throw std::invalid_argument("projection_family: dim must be >= 1");
  NonexpansiveFamily f;
  f.count = dim;
  f.weights.assign(dim, 1.0 / static_cast<double>(dim));
  f.apply = [dim](std::size_t v, const Point& z) {
    if (z.x.size() != dim) throw std::invalid_argument("projection_family: wrong dimension");
    Point out = z;
    for (unsigned i = 0; i < dim; ++i)
      if (i != v) out.x[i] = 0.0;
    return out;
  };
  f.exact_mean_sq = [dim](const Point& z) {
    double norm2 = 0;
    for (double c : z.x) norm2 += c * c;
    double acc = 0;
    for (unsigned i = 0; i < dim; ++i) acc += norm2 - z.x[i] * z.x[i];
    return acc / static_cast<double>(dim);
  };
  return f;
}

enum class AfVerdict { In, Out, Undecided };

// AF_k membership: E[d^2(T_v z, z)] <= 1/(k+1), decided exactly for finite
// families with a closed-form mean.
inline AfVerdict af_membership(const NonexpansiveFamily& family, const Point& z, const BigInt& k) {
  if (!family.exact_mean_sq) return AfVerdict::Undecided;
  double mean = family.exact_mean_sq(z);
  double thresh = 1.0 / (to_double(Rational(k)) + 1.0);
  return mean <= thresh ? AfVerdict::In : AfVerdict::Out;
}

// Monte Carlo membership with a Wilson-style mean CI; three-valued.
inline AfVerdict af_membership_mc(const SpaceInstance& s, const NonexpansiveFamily& family,
                                  const Point& z, const BigInt& k, std::size_t samples,
                                  RandomStream& rng) {
  if (samples < 2) throw std::invalid_argument("af_membership_mc: need samples >= 2");
  double sum = 0, sumsq = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    std::size_t v = family.sample(rng);
    double d = s.distance(family.apply(v, z), z);
    sum += d * d;
    sumsq += d * d * d * d;
  }
  double n = static_cast<double>(samples);
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  if (var < 0) var = 0;
  double half = 3.0 * std::sqrt(var / n);
  double thresh = 1.0 / (to_double(Rational(k)) + 1.0);
  if (mean + half <= thresh) return AfVerdict::In;
  if (mean - half > thresh) return AfVerdict::Out;
  return AfVerdict::Undecided;
}

// Abstract solution target: membership in the approximating sets plus the
// uniform closedness pair.
struct SolutionTarget {
  std::function<AfVerdict(const Point&, const BigInt&)> membership;
  std::pair<BigInt, BigInt> closedness(const BigInt& k) const { return km_closedness(k); }
};

inline SolutionTarget make_km_target(const NonexpansiveFamily& family) {
  return {[family](const Point& z, const BigInt& k) { return af_membership(family, z, k); }};
}

// Configuration of the stochastic Krasnoselskii-Mann scheme
// x_{n+1} = (1 - lambda_n) x_n (+) lambda_n T_{v_n} x_n.
struct KMConfig {
  Point x0;
  std::function<double(std::size_t)> steps;  // lambda_n in (0, 1]
  NonexpansiveFamily family;
  Point fixed_point;  // p with d(T_v p, p) = 0 for all v
  Rational c;         // c >= 1 with d(x0, p) <= c
};

struct KMRun {
  std::vector<std::vector<Point>> paths;  // [M][N+1]
  std::vector<Point> anchors;
  std::vector<Matrix> dist_sq;      // per anchor: d^2(x_n, z), [M x N+1]
  std::vector<Matrix> fejer_trace;  // per anchor: E[d^2(x_{m+1}, z) | F_m], [M x N]
};

// Simulates the scheme and, for each requested anchor, records the exact
// conditional mean sum_v p_v d^2((1-lambda_m) x_m (+) lambda_m T_v x_m, z).
inline KMRun run_skm(const SpaceInstance& space, const KMConfig& cfg, std::size_t M, std::size_t N,
                     const RandomSource& src, std::vector<Point> anchors) {
  if (M < 1 || N < 1) throw std::invalid_argument("run_skm: need M >= 1, N >= 1");
  if (cfg.family.count == 0 || !cfg.family.apply)
    throw std::invalid_argument("run_skm: family must be finite with weights for exact traces");
  space.check(cfg.x0);
  space.check(cfg.fixed_point);
  for (std::size_t v = 0; v < cfg.family.count; ++v) {
    double d = space.distance(cfg.family.apply(v, cfg.fixed_point), cfg.fixed_point);
    if (d > 1e-9) throw std::invalid_argument("run_skm: fixed_point is not fixed by T_" + std::to_string(v));
  }
  if (space.distance(cfg.x0, cfg.fixed_point) > to_double(cfg.c) + 1e-12)
    throw std::invalid_argument("run_skm: d(x0, p) exceeds c");

  KMRun run;
  run.anchors = anchors;
  run.paths.assign(M, {});
  run.dist_sq.assign(anchors.size(), Matrix(M, N + 1));
  run.fejer_trace.assign(anchors.size(), Matrix(M, N));
  for (const Point& z : anchors) space.check(z);

  for (std::size_t p = 0; p < M; ++p) {
    RandomStream rng = src.substream(p);
    std::vector<Point>& path = run.paths[p];
    path.reserve(N + 1);
    path.push_back(cfg.x0);
    for (std::size_t n = 0; n < N; ++n) {
      const Point& x = path.back();
      double lam = cfg.steps(n);
      if (!(lam > 0 && lam <= 1)) throw std::invalid_argument("run_skm: step outside (0,1]");
      for (std::size_t a = 0; a < anchors.size(); ++a) {
        double d = space.distance(x, anchors[a]);
        run.dist_sq[a].at(p, n) = d * d;
        double mean = 0;
        for (std::size_t v = 0; v < cfg.family.count; ++v) {
          Point cand = space.geodesic(x, cfg.family.apply(v, x), lam);
          double dc = space.distance(cand, anchors[a]);
          mean += cfg.family.weights[v] * dc * dc;
        }
        run.fejer_trace[a].at(p, n) = mean;
      }
      std::size_t v = cfg.family.sample(rng);
      path.push_back(space.geodesic(x, cfg.family.apply(v, x), lam));
    }
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      double d = space.distance(path.back(), anchors[a]);
      run.dist_sq[a].at(p, N) = d * d;
    }
  }
  return run;
}

// The explicit quantitative moduli of the KM application, in terms of c and
// the step-size divergence rate.
struct KmModuli {
  FejerModulus zeta;       // 64 c^2 (r+1)^2
  LiminfModulus phi;       // theta(N, (c^2+1)(k+1)/lambda)
  BoundednessModulus b;    // b_lambda = c, b0 = 4c^2 + 1
  RSParams rs;             // f = 1, h = 2, K = b0, mu(eps) = eps/(4c^2)
  GPack gpack;             // square
  DivergenceRate theta;
  Rational c;

  // Lemma-level liminf witness Psi(mu, N) = theta(N, (c^2+1)/mu).
  BigInt psi_simple(const Rational& mu, const BigInt& N) const {
    if (mu <= 0) throw std::invalid_argument("psi_simple: mu must be > 0");
    return theta.theta(N, (c * c + 1) / mu);
  }
};

inline KmModuli km_moduli(Rational c, DivergenceRate theta) {
  if (c < 1) throw std::invalid_argument("km_moduli: c must be >= 1");
  KmModuli m;
  m.c = c;
  m.theta = theta;
  Rational c2 = c * c;
  m.zeta = {[c2](const Rational&, const BigInt& r, const BigInt&) {
    return rat_ceil(64 * c2 * Rational((r + 1) * (r + 1)));
  }};
  m.phi = LiminfModulus::km_theta(c2 + 1, theta.per_step);
  m.b = {[c](const Rational&) { return c; }, 4 * c2 + 1};
  m.rs = {StepFn::constant(1), StepFn::constant(2), 4 * c2 + 1,
          ModulusFamily::uniform(AbsContModulus::linear_over(4 * c2))};
  m.gpack = gpack_square();
  return m;
}

inline ModuliBundle km_bundle(const KmModuli& m, TotalBoundednessModulus gamma, Rational d_bound) {
  return {m.gpack, std::move(gamma), std::move(d_bound), m.zeta, m.phi, m.b, m.rs};
}

struct FejerCheck {
  bool applicable = false;     // z was certified inside AF_{zeta(.,r,.)}
  BigInt required_af;          // the gating index
  std::vector<EmpiricalVerdict> per_m;
};

// Lemma-level check of the uniform Fejer step at anchor index `a` of a run:
// frequency of E[d^2(x_{m+1},z)|F_m] > d^2(x_m,z) + 1/(r+1), for m <= upto.
// Gated on exact AF membership at the modulus index.
inline FejerCheck verify_fejer_step(const KMRun& run, std::size_t a, const NonexpansiveFamily& fam,
                                    const KmModuli& moduli, const BigInt& r, std::size_t upto,
                                    double lambda) {
  FejerCheck out;
  out.required_af = moduli.zeta(Rational(1), r, BigInt(upto));
  AfVerdict v = af_membership(fam, run.anchors.at(a), out.required_af);
  out.applicable = (v == AfVerdict::In);
  if (!out.applicable) return out;
  const Matrix& dist_sq = run.dist_sq.at(a);
  const Matrix& trace = run.fejer_trace.at(a);
  if (upto > trace.cols) throw std::invalid_argument("verify_fejer_step: n beyond trace length");
  const double err = 1.0 / (to_double(Rational(r)) + 1.0);
  for (std::size_t m = 0; m < upto; ++m) {
    std::size_t hits = 0;
    for (std::size_t p = 0; p < trace.rows; ++p)
      if (trace.at(p, m) > dist_sq.at(p, m) + err) ++hits;
    out.per_m.push_back(make_verdict(hits, trace.rows, lambda));
  }
  return out;
}

inline EmpiricalVerdict empirical_metastability_points(const SpaceInstance& space,
                                                       const std::vector<std::vector<Point>>& paths,
                                                       std::size_t n_star, std::size_t k,
                                                       const CounterexampleFunction& g,
                                                       double lambda, bool use_ci = false) {
  if (paths.empty()) throw std::invalid_argument("empirical_metastability: no paths");
  std::size_t horizon = paths.front().size() - 1;
  auto dist = [&](std::size_t p, std::size_t i, std::size_t j) {
    return space.distance(paths[p][i], paths[p][j]);
  };
  return empirical_metastability(paths.size(), horizon, dist, n_star, k, g, lambda, use_ci);
}

}  // namespace finmart
