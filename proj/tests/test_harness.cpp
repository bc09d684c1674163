#include <catch2/catch_amalgamated.hpp>

#include "finmart/harness.hpp"

using namespace finmart;

namespace {

Config cfg_of(const std::string& text) { return Config::parse(text); }

}  // namespace

TEST_CASE("config parsing") {
  auto cfg = cfg_of(R"(
# experiment
[ensemble]
paths = 100
horizon = 20
seed = 7

[params]
lambda = 1/2
epsilon = 1/10
)");
  CHECK(cfg.integer("ensemble", "paths") == 100);
  CHECK(cfg.rational("params", "lambda") == Rational(1, 2));
  CHECK(cfg.get("params", "missing") == std::nullopt);
  CHECK(cfg.rational_or("params", "missing", Rational(3)) == Rational(3));
  CHECK_THROWS_AS(cfg.require("params", "missing"), ConfigError);
  CHECK_THROWS_AS(cfg_of("[x]\nnokey"), ConfigError);
  CHECK_THROWS_AS(cfg_of("[x]\nk = 1/0").rational("x", "k"), ConfigError);
}

TEST_CASE("bound calculators reproduce the frozen values") {
  CHECK(run_bound({"N_K", "1", "1", "1"}).report["value"] == "2048");
  CHECK(run_bound({"mart-fluct", "1", "1/2", "1/2"}).report["value"] == "131072");
  CHECK(run_bound({"rs-Z", "1", "2", "1", "1/2", "1/2"}).report["value"] == "301989888");
  CHECK(run_bound({"zeta", "1", "7"}).report["value"] == "4096");
  CHECK(run_bound({"km-phi", "1", "1/2", "1", "0", "0"}).report["value"] == "7");
  auto kc = run_bound({"km-closedness", "0"}).report["value"];
  CHECK(kc[0] == "11");
  CHECK(kc[1] == "11");
  CHECK(run_bound({"gamma-ball", "2", "1", "0"}).report["value"] == "9");
  CHECK(run_bound({"theta", "1/2", "0", "2"}).report["value"] == "7");
  CHECK_THROWS_AS(run_bound({"nonsense"}), ConfigError);
}

TEST_CASE("verify driver: downcrossing inequality on the multiplicative process") {
  auto cfg = cfg_of(R"(
[ensemble]
paths = 2000
horizon = 50
seed = 11
[process]
kind = multiplicative
theta = 9/10
x0 = 1
[params]
alpha = 1/4
beta = 3/4
epsilon = 1/10
K = 1
)");
  auto out = run_verify("dcrs-ineq", cfg);
  CHECK(out.exit_code == 0);
  CHECK(out.report["pass"] == true);
  CHECK(out.report["premise"]["holds"] == true);
  CHECK(out.report["dominated"] == true);
}

TEST_CASE("verify driver: Ville on the polya urn") {
  auto cfg = cfg_of(R"(
[ensemble]
paths = 2000
horizon = 50
seed = 12
[process]
kind = polya
[params]
alpha = 2
epsilon = 1/10
)");
  auto out = run_verify("ville", cfg);
  CHECK(out.exit_code == 0);
  // the urn fraction never exceeds 1, so the exceedance estimate is zero
  CHECK(out.report["verdicts"][0]["estimate"] == 0.0);
}

TEST_CASE("verify driver: fluctuation theorems") {
  auto cfg = cfg_of(R"(
[ensemble]
paths = 1000
horizon = 50
seed = 13
[process]
kind = rs_canonical
chi = geom 1 1/2
eta = geom 1 1/2
x0 = 1
[params]
lambda = 1/2
epsilon = 1/2
K = 2
f = 2
h = 5
)");
  auto out = run_verify("rs-fluct", cfg);
  CHECK(out.exit_code == 0);
  CHECK(out.report["premise"]["holds"] == true);
  CHECK(out.report["verdicts"][0]["estimate"] == 0.0);

  auto cfg2 = cfg_of(R"(
[ensemble]
paths = 1000
horizon = 50
seed = 14
[process]
kind = multiplicative
theta = 9/10
x0 = 1
[params]
lambda = 1/2
epsilon = 1/2
K = 1
)");
  auto out2 = run_verify("mart-fluct", cfg2);
  CHECK(out2.exit_code == 0);
  CHECK(out2.report["bound"] == "131072");
}

TEST_CASE("verify driver: decomposition, stopping, integral, metastable window") {
  std::string base = R"(
[ensemble]
paths = 1000
horizon = 40
seed = 15
[process]
kind = multiplicative
theta = 9/10
x0 = 1
[params]
lambda = 1/20
epsilon = 1/100
K = 1
)";
  for (const char* id : {"doob-decomp", "stopped", "integral"}) {
    CAPTURE(id);
    auto out = run_verify(id, cfg_of(base));
    CHECK(out.exit_code == 0);
  }
  auto cfg = cfg_of(R"(
[ensemble]
paths = 1000
horizon = 100
seed = 16
[process]
kind = multiplicative
theta = 9/10
x0 = 1
[params]
lambda = 1/2
epsilon = 1/2
K = 1
)");
  auto out = run_verify("mart-metastable", cfg);
  CHECK(out.exit_code == 0);
  CHECK(out.report["N_K"] == "32768");

  CHECK_THROWS_AS(run_verify("no-such-theorem", cfg), ConfigError);
}

TEST_CASE("verify driver: descent") {
  auto cfg = cfg_of(R"(
[ensemble]
paths = 2000
horizon = 30
seed = 17
[process]
kind = polya
[params]
epsilon = 1/4
)");
  auto out = run_verify("descent", cfg);
  CHECK(out.exit_code == 0);
  CHECK(out.report["descent_holds"] == true);
}

TEST_CASE("delta driver") {
  SECTION("computable singleton bundle") {
    auto cfg = cfg_of(R"(
[bundle]
gamma = singleton
phi = trivial
c = 1
step = 1/2
[params]
lambda = 1/2
k = 0
g = const 1
)");
    auto out = run_delta(cfg);
    CHECK(out.exit_code == 0);
    CHECK(out.report["trace"]["exceeded"] == false);
    CHECK(out.report["trace"]["branches"].size() == 2);
  }
  SECTION("theta modulus exceeds the budget with a structured marker") {
    auto cfg = cfg_of(R"(
[bundle]
gamma = singleton
phi = km-theta
c = 1
step = 1/2
[params]
lambda = 1/2
k = 0
g = const 1
)");
    auto out = run_delta(cfg);
    CHECK(out.exit_code == 2);
    CHECK(out.report["trace"]["exceeded"] == true);
    CHECK(out.report["trace"].contains("blocking"));
  }
}

TEST_CASE("km driver end to end at reduced scale") {
  auto cfg = cfg_of(R"(
[ensemble]
paths = 500
horizon = 60
seed = 18
[km]
dim = 2
x0 = 1 1
c = 3/2
step = 1/2
[liminf]
lambda = 1/2
k = 3
N = 10
)");
  auto out = run_km(cfg);
  CHECK(out.exit_code == 0);
  CHECK(out.report["pathwise_bounded"] == true);
  CHECK(out.report["final_distance"]["pass"] == true);
  for (const auto& f : out.report["fejer_checks"]) {
    CHECK(f["applicable"] == true);
    CHECK(f["pass"] == true);
  }
  CHECK(out.report["liminf"]["verdict"]["pass"] == true);
}

TEST_CASE("reports are byte-reproducible for a fixed seed") {
  auto make = [] {
    return cfg_of(R"(
[ensemble]
paths = 500
horizon = 30
seed = 19
[process]
kind = multiplicative
theta = 9/10
x0 = 1
[params]
alpha = 1/4
beta = 3/4
epsilon = 1/10
K = 1
)");
  };
  auto a = run_verify("dcrs-ineq", make());
  auto b = run_verify("dcrs-ineq", make());
  REQUIRE(a.report.dump() == b.report.dump());
}
