// Command-line entry point: simulation and verification lab for finitary
// martingale bounds. See README for the experiment config format.

#include <CLI11.hpp>

#include <chrono>
#include <iostream>
#include <string>
#include <vector>

#include "finmart/harness.hpp"

namespace {

int finish(finmart::RunOutcome outcome, const finmart::Config& cfg,
           const std::chrono::steady_clock::time_point& t0) {
  using namespace finmart;
  auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
  outcome.report["timing_ms"] = elapsed;
  if (auto path = cfg.get("output", "report")) {
    write_report(*path, outcome.report);
    std::cout << (outcome.exit_code == 0 ? "PASS" : outcome.exit_code == 1 ? "FAIL" : "ERROR")
              << " report written to " << *path << "\n";
  } else {
    std::cout << outcome.report.dump(2) << "\n";
  }
  return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace finmart;
  CLI::App app{"finmart: finitary martingale bound laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string theorem_id;
  std::vector<std::string> bound_args;

  auto* sim = app.add_subcommand("simulate", "simulate a canonical process and emit trajectories");
  sim->add_option("--config", config_path, "experiment config file")->required();

  auto* verify = app.add_subcommand(
      "verify",
      "verify a theorem empirically (doob-decomp, descent, dcrs-ineq, ville, stopped, integral, "
      "mart-fluct, rs-fluct, mart-metastable)");
  verify->add_option("theorem", theorem_id, "theorem id")->required();
  verify->add_option("--config", config_path, "experiment config file")->required();

  auto* bound = app.add_subcommand(
      "bound", "evaluate an exact bound (N_K, mart-fluct, rs-Z, zeta, km-phi, km-closedness, "
               "gamma-ball, theta)");
  bound->add_option("args", bound_args, "calculator name and arguments")->required();

  auto* delta_cmd = app.add_subcommand("delta", "evaluate the metastability rate Delta");
  delta_cmd->add_option("--config", config_path, "experiment config file")->required();

  auto* km = app.add_subcommand("km", "run the stochastic Krasnoselskii-Mann scheme");
  km->add_option("--config", config_path, "experiment config file")->required();

  CLI11_PARSE(app, argc, argv);
  auto t0 = std::chrono::steady_clock::now();

  try {
    if (bound->parsed()) {
      RunOutcome outcome = run_bound(bound_args);
      std::cout << outcome.report.dump(2) << "\n";
      return outcome.exit_code;
    }
    Config cfg = Config::load(config_path);
    if (sim->parsed()) return finish(run_simulate(cfg), cfg, t0);
    if (verify->parsed()) return finish(run_verify(theorem_id, cfg), cfg, t0);
    if (delta_cmd->parsed()) return finish(run_delta(cfg), cfg, t0);
    if (km->parsed()) return finish(run_km(cfg), cfg, t0);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const BudgetExceededError& e) {
    std::cerr << "budget error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
