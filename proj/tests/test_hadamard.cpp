#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "finmart/hadamard.hpp"

using namespace finmart;

namespace {

const Rational kHalf(1, 2);

Point rand_point(const SpaceInstance& s, RandomStream& rng) {
  if (s.kind() == SpaceInstance::Kind::Euclidean) {
    std::vector<double> c(s.dim());
    double norm2 = 0;
    for (auto& v : c) {
      v = rng.uniform(-1.0, 1.0);
      norm2 += v * v;
    }
    double norm = std::sqrt(norm2);
    if (norm > 1.0)
      for (auto& v : c) v /= norm;
    return s.point(c);
  }
  return s.tree_point(static_cast<int>(rng.pick(3)), rng.uniform(0.0, 1.0));
}

}  // namespace

TEST_CASE("space distances and geodesics") {
  SECTION("Euclidean") {
    auto s = euclidean_ball_space(2, 1.0, {0.0, 0.0});
    CHECK(s.distance(s.point({0, 0}), s.point({0.3, 0.4})) == 0.5);
    Point m = s.geodesic(s.point({0, 0}), s.point({1, 0}), 0.25);
    CHECK(m.x[0] == 0.25);
    CHECK(m.x[1] == 0.0);
  }
  SECTION("star tree") {
    auto t = star_tree_space(3, {1.0, 1.0, 1.0});
    CHECK(t.distance(t.tree_point(0, 0.5), t.tree_point(1, 0.5)) == 1.0);
    CHECK(t.distance(t.tree_point(2, 0.25), t.tree_point(2, 0.75)) == 0.5);
    // geodesic through the center
    Point g = t.geodesic(t.tree_point(0, 0.5), t.tree_point(1, 0.5), 0.75);
    CHECK(g.branch == 1);
    CHECK_THAT(g.x[0], Catch::Matchers::WithinAbs(0.25, 1e-15));
    // geodesic endpoint identities d(x, g) = t d(x, y)
    RandomSource src(1);
    for (std::size_t trial = 0; trial < 200; ++trial) {
      RandomStream rng = src.substream(trial);
      Point a = rand_point(t, rng), b = rand_point(t, rng);
      double u = rng.uniform();
      Point m = t.geodesic(a, b, u);
      REQUIRE_THAT(t.distance(a, m), Catch::Matchers::WithinAbs(u * t.distance(a, b), 1e-12));
      REQUIRE_THAT(t.distance(b, m),
                   Catch::Matchers::WithinAbs((1.0 - u) * t.distance(a, b), 1e-12));
    }
  }
  SECTION("cross-space points are rejected") {
    auto a = euclidean_ball_space(2, 1.0, {0.0, 0.0});
    auto b = euclidean_ball_space(2, 1.0, {0.0, 0.0});
    CHECK_THROWS_AS(a.distance(a.point({0, 0}), b.point({0, 0})), std::invalid_argument);
  }
}

TEST_CASE("quasi-inner product") {
  auto s = euclidean_ball_space(2, 2.0, {0.0, 0.0});
  RandomSource src(2);

  SECTION("Euclidean dot-product instance") {
    CHECK(quasi_inner(s, s.point({0, 0}), s.point({1, 0}), s.point({0, 0}), s.point({1, 0})) ==
          1.0);
  }
  SECTION("<xy,xy> = d^2(x,y) and antisymmetry on random pairs") {
    for (std::size_t trial = 0; trial < 300; ++trial) {
      RandomStream rng = src.substream(trial);
      Point x = rand_point(s, rng), y = rand_point(s, rng);
      Point u = rand_point(s, rng), v = rand_point(s, rng);
      double d = s.distance(x, y);
      REQUIRE_THAT(quasi_inner(s, x, y, x, y), Catch::Matchers::WithinAbs(d * d, 1e-12));
      REQUIRE_THAT(quasi_inner(s, y, x, u, v),
                   Catch::Matchers::WithinAbs(-quasi_inner(s, x, y, u, v), 1e-12));
    }
  }
}

TEST_CASE("CAT(0) inequality checkers on hand examples") {
  auto s = euclidean_ball_space(2, 4.0, {0.0, 0.0});
  SECTION("CN at the Euclidean midpoint example") {
    double r = check_cn(s, s.point({0, 0}), s.point({2, 0}), s.point({1, 1}), 0.5);
    CHECK_THAT(r, Catch::Matchers::WithinAbs(0.0, 1e-12));
  }
  SECTION("degenerate triangle: z on the geodesic") {
    Point x = s.point({0, 0}), y = s.point({2, 0});
    Point z = s.geodesic(x, y, 0.3);
    CHECK(check_cn(s, x, y, z, 0.7) >= -1e-12);
  }
  SECTION("CS vanishes for x = y and for parallel segments") {
    Point x = s.point({0.2, 0.7});
    CHECK_THAT(check_cs(s, x, x, s.point({1, 0}), s.point({0, 1})),
               Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(check_cs(s, s.point({0, 0}), s.point({1, 0}), s.point({0, 1}), s.point({1, 1})),
               Catch::Matchers::WithinAbs(0.0, 1e-12));
  }
  SECTION("quadratic identity: collinear and x = z") {
    CHECK_THAT(check_quadratic_identity(s, s.point({0, 0}), s.point({1, 0}), s.point({3, 0})),
               Catch::Matchers::WithinAbs(0.0, 1e-12));
    Point x = s.point({0.4, 0.1});
    CHECK_THAT(check_quadratic_identity(s, x, s.point({1, 1}), x),
               Catch::Matchers::WithinAbs(0.0, 1e-12));
  }
  SECTION("convexity at the endpoints") {
    Point x = s.point({0, 0}), y = s.point({1, 1}), z = s.point({2, 0});
    CHECK_THAT(check_convexity(s, x, y, z, 0.0), Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(check_convexity(s, x, y, z, 1.0), Catch::Matchers::WithinAbs(0.0, 1e-12));
  }
  SECTION("star-tree quadruple through the center") {
    auto t = star_tree_space(3, {1.0, 1.0, 1.0});
    double r = check_cn(t, t.tree_point(0, 0.8), t.tree_point(1, 0.6), t.tree_point(2, 0.5), 0.5);
    CHECK(r >= -1e-12);
  }
}

TEST_CASE("CAT(0) certification: random quadruple sweeps") {
  RandomSource src(3);
  std::vector<SpaceInstance> spaces;
  spaces.push_back(euclidean_ball_space(1, 1.0, {0.0}));
  spaces.push_back(euclidean_ball_space(2, 1.0, {0.0, 0.0}));
  spaces.push_back(euclidean_ball_space(3, 1.0, {0.0, 0.0, 0.0}));
  spaces.push_back(star_tree_space(3, {1.0, 1.0, 1.0}));
  for (const auto& s : spaces) {
    for (std::size_t trial = 0; trial < 1000; ++trial) {
      RandomStream rng = src.substream(trial);
      Point x = rand_point(s, rng), y = rand_point(s, rng);
      Point z = rand_point(s, rng), w = rand_point(s, rng);
      double t = rng.uniform();
      REQUIRE(check_cn(s, x, y, z, t) >= -1e-9);
      REQUIRE(check_cs(s, x, y, z, w) >= -1e-9);
      REQUIRE(std::abs(check_quadratic_identity(s, x, y, z)) <= 1e-9);
      REQUIRE(check_convexity(s, x, y, z, t) >= -1e-9);
    }
  }
}

TEST_CASE("projection family") {
  auto fam = projection_family(2);
  auto s = euclidean_ball_space(2, 2.0, {0.0, 0.0});

  CHECK(fam.exact_mean_sq(s.point({0, 0})) == 0.0);
  CHECK(fam.exact_mean_sq(s.point({1, 0})) == 0.5);

  SECTION("nonexpansiveness on random pairs") {
    RandomSource src(4);
    for (std::size_t trial = 0; trial < 1000; ++trial) {
      RandomStream rng = src.substream(trial);
      Point a = rand_point(s, rng), b = rand_point(s, rng);
      for (std::size_t v = 0; v < fam.count; ++v)
        REQUIRE(s.distance(fam.apply(v, a), fam.apply(v, b)) <= s.distance(a, b) + 1e-9);
    }
  }
  SECTION("af membership at the worked points") {
    CHECK(af_membership(fam, s.point({0, 0}), BigInt(10)) == AfVerdict::In);
    CHECK(af_membership(fam, s.point({1, 0}), BigInt(1)) == AfVerdict::In);   // 1/2 <= 1/2
    CHECK(af_membership(fam, s.point({1, 0}), BigInt(2)) == AfVerdict::Out);  // 1/2 > 1/3
    // monotone: in AF_{k+1} implies in AF_k
    RandomSource src(5);
    for (std::size_t trial = 0; trial < 200; ++trial) {
      RandomStream rng = src.substream(trial);
      Point z = rand_point(s, rng);
      for (long k = 0; k < 6; ++k)
        if (af_membership(fam, z, BigInt(k + 1)) == AfVerdict::In)
          REQUIRE(af_membership(fam, z, BigInt(k)) == AfVerdict::In);
    }
  }
}

TEST_CASE("one KM step by hand") {
  auto s = euclidean_ball_space(2, 4.0, {0.0, 0.0});
  auto fam = projection_family(2);
  Point x = s.point({1, 1});
  Point step = s.geodesic(x, fam.apply(0, x), 0.5);  // v = first axis
  CHECK(step.x[0] == 1.0);
  CHECK(step.x[1] == 0.5);
}

TEST_CASE("stochastic KM scheme: boundedness, traces, and the coordinate law") {
  auto s = euclidean_ball_space(2, 4.0, {0.0, 0.0});
  auto fam = projection_family(2);
  KMConfig cfg{s.point({1, 1}), [](std::size_t) { return 0.5; }, fam, s.point({0, 0}),
               Rational(3, 2)};
  auto run = run_skm(s, cfg, 300, 25, RandomSource(6), {s.point({0, 0}), s.point({1, 0})});

  SECTION("pathwise boundedness d(x_n, p) <= c, exactly") {
    double c = to_double(cfg.c);
    for (const auto& path : run.paths)
      for (const auto& pt : path) REQUIRE(s.distance(pt, cfg.fixed_point) <= c);
  }

  SECTION("trace entries equal the enumerated one-step means") {
    for (std::size_t p = 0; p < 20; ++p)
      for (std::size_t n = 0; n < 25; ++n) {
        const Point& x = run.paths[p][n];
        for (std::size_t a = 0; a < run.anchors.size(); ++a) {
          double mean = 0;
          for (std::size_t v = 0; v < fam.count; ++v) {
            Point cand = s.geodesic(x, fam.apply(v, x), 0.5);
            double d = s.distance(cand, run.anchors[a]);
            mean += fam.weights[v] * d * d;
          }
          REQUIRE(run.fejer_trace[a].at(p, n) == mean);
        }
      }
  }

  SECTION("per-path coordinate law: powers of two only") {
    // a coordinate halves exactly at each step in which the other axis is
    // drawn, so every coordinate is 2^-m for some m <= n
    for (std::size_t p = 0; p < 50; ++p)
      for (std::size_t n = 0; n <= 25; ++n)
        for (double coord : run.paths[p][n].x) {
          double m = -std::log2(coord);
          REQUIRE(coord > 0);
          REQUIRE_THAT(m, Catch::Matchers::WithinAbs(std::round(m), 1e-12));
          REQUIRE(std::round(m) <= double(n));
        }
  }

  SECTION("sampler rejects a non-fixed point") {
    KMConfig bad = cfg;
    bad.fixed_point = s.point({0.5, 0});
    CHECK_THROWS_AS(run_skm(s, bad, 2, 2, RandomSource(1), {}), std::invalid_argument);
  }
}

TEST_CASE("KM moduli values") {
  auto m = km_moduli(Rational(1), theta_constant(kHalf));
  CHECK(m.zeta(Rational(1), BigInt(7), BigInt(0)) == 4096);
  CHECK(m.phi.phi(Rational(1), BigInt(0), BigInt(0)) == 7);
  CHECK(m.b.b0 == 5);
  CHECK(m.rs.K == 5);
  CHECK(m.rs.f(kHalf) == 1);
  CHECK(m.rs.h(kHalf) == 2);
  // mu(eps) = eps/4 at c = 1
  CHECK(m.rs.moduli.min_at(Rational(1), 100) == Rational(1, 4));
  CHECK(m.psi_simple(Rational(1, 2), BigInt(0)) == m.theta.theta(BigInt(0), Rational(4)));
  CHECK_THROWS_AS(km_moduli(Rational(1, 2), theta_constant(kHalf)), std::invalid_argument);
}

TEST_CASE("Fejer step verification") {
  auto s = euclidean_ball_space(2, 4.0, {0.0, 0.0});
  auto fam = projection_family(2);
  auto m = km_moduli(Rational(3, 2), theta_constant(kHalf));
  KMConfig cfg{s.point({1, 1}), [](std::size_t) { return 0.5; }, fam, s.point({0, 0}),
               Rational(3, 2)};
  auto run = run_skm(s, cfg, 500, 20, RandomSource(7), {s.point({0, 0}), s.point({1, 0})});

  SECTION("origin is a solution: applicable with zero violations for every r") {
    for (long r : {0L, 3L, 7L}) {
      auto chk = verify_fejer_step(run, 0, fam, m, BigInt(r), 20, 0.05);
      REQUIRE(chk.applicable);
      for (const auto& v : chk.per_m) {
        REQUIRE(v.estimate == 0.0);
        REQUIRE(v.pass);
      }
    }
  }
  SECTION("(1,0) fails the membership gate at every r") {
    for (long r : {0L, 1L, 5L}) {
      auto chk = verify_fejer_step(run, 1, fam, m, BigInt(r), 20, 0.05);
      REQUIRE_FALSE(chk.applicable);
      REQUIRE(chk.required_af >= 64);
    }
  }
}

TEST_CASE("KM liminf moduli hold empirically") {
  auto s = euclidean_ball_space(2, 4.0, {0.0, 0.0});
  auto fam = projection_family(2);
  Rational c(3, 2);
  auto m = km_moduli(c, theta_constant(kHalf));
  KMConfig cfg{s.point({1, 1}), [](std::size_t) { return 0.5; }, fam, s.point({0, 0}), c};

  SECTION("simple liminf witness: some n in [N; Psi(mu, N)] with small mean displacement") {
    Rational mu(1, 4);
    BigInt N(5);
    BigInt end = m.psi_simple(mu, N);
    std::size_t horizon = end.convert_to<std::size_t>() + 1;
    auto run = run_skm(s, cfg, 400, horizon, RandomSource(8), {});
    bool found = false;
    for (std::size_t n = 5; n <= end.convert_to<std::size_t>() && !found; ++n) {
      double mean = 0;
      for (const auto& path : run.paths) mean += fam.exact_mean_sq(path[n]);
      mean /= double(run.paths.size());
      if (mean < to_double(mu)) found = true;
    }
    CHECK(found);
  }

  SECTION("liminf modulus: P(no visit to AF_k within [N; Phi]) < lambda") {
    double lambda = 0.5;
    BigInt k(3), N(10);
    BigInt end = m.phi.phi(kHalf, k, N);
    CHECK(end == 113);  // theta(10, (13/4)*4*2) at constant-1/2 steps
    auto run = run_skm(s, cfg, 1000, end.convert_to<std::size_t>() + 1, RandomSource(9), {});
    std::size_t misses = 0;
    for (const auto& path : run.paths) {
      bool visited = false;
      for (std::size_t n = 10; n <= end.convert_to<std::size_t>() && !visited; ++n)
        visited = af_membership(fam, path[n], k) == AfVerdict::In;
      if (!visited) ++misses;
    }
    double est = double(misses) / double(run.paths.size());
    CHECK(est < lambda);
  }

  SECTION("strengthened modulus: the union-bound event stays below lambda") {
    double lambda = 1.0;
    auto psi = strengthen_liminf(m.phi);
    BigInt kmax(1), nmax(2);
    BigInt horizon_b = 0;
    for (BigInt k = 0; k <= kmax; ++k)
      for (BigInt N = 0; N <= nmax; ++N)
        horizon_b = std::max(horizon_b, psi.phi(Rational(1), k, N));
    std::size_t horizon = horizon_b.convert_to<std::size_t>() + 1;
    auto run = run_skm(s, cfg, 400, horizon, RandomSource(10), {});

    // each individual event is already rare at the shrunken lambda...
    for (BigInt k = 0; k <= kmax; ++k)
      for (BigInt N = 0; N <= nmax; ++N) {
        BigInt end = psi.phi(Rational(1), k, N);
        std::size_t misses = 0;
        for (const auto& path : run.paths) {
          bool visited = false;
          for (BigInt n = N; n <= end && !visited; ++n)
            visited = af_membership(fam, path[n.convert_to<std::size_t>()], k) == AfVerdict::In;
          if (!visited) ++misses;
        }
        double shrunk =
            1.0 / std::pow(2.0, (k + N + 2).convert_to<double>());
        REQUIRE(double(misses) / double(run.paths.size()) < shrunk);
      }

    // ...and so is their union at the full lambda
    std::size_t union_hits = 0;
    for (const auto& path : run.paths) {
      bool bad = false;
      for (BigInt k = 0; k <= kmax && !bad; ++k)
        for (BigInt N = 0; N <= nmax && !bad; ++N) {
          BigInt end = psi.phi(Rational(1), k, N);
          bool visited = false;
          for (BigInt n = N; n <= end && !visited; ++n)
            visited = af_membership(fam, path[n.convert_to<std::size_t>()], k) == AfVerdict::In;
          bad = !visited;
        }
      if (bad) ++union_hits;
    }
    CHECK(double(union_hits) / double(run.paths.size()) < lambda);
  }
}

TEST_CASE("metastability of the KM ensemble") {
  auto s = euclidean_ball_space(2, 4.0, {0.0, 0.0});
  auto fam = projection_family(2);
  KMConfig cfg{s.point({1, 1}), [](std::size_t) { return 0.5; }, fam, s.point({0, 0}),
               Rational(3, 2)};
  auto run = run_skm(s, cfg, 2000, 56, RandomSource(11), {});
  auto v = empirical_metastability_points(s, run.paths, 50, 3, CounterexampleFunction::constant(5),
                                          0.01);
  CHECK(v.estimate < 0.01);  // geometric decay stabilizes late windows
}
