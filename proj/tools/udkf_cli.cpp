// Command-line experiment runner: worked-example verification, likelihood
// scan, Monte-Carlo study, trajectory simulation and filter runs.
//
// Exit codes: 0 success, 1 check/runtime failure, 2 usage or validation
// error.

#include "udkf/experiments.hpp"

#include "CLI11.hpp"

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace ex = udkf::experiments;

namespace {

// Options shared by the experiment subcommands. Values given on the command
// line override the config file, which overrides built-in defaults.
struct CommonOptions {
  std::string config_path;
  ex::Config overrides;
  CLI::Option* config = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* replications = nullptr;
  CLI::Option* deltas = nullptr;
  CLI::Option* engine = nullptr;
  CLI::Option* out_dir = nullptr;
  CLI::Option* full_scale = nullptr;
  CLI::Option* n_steps = nullptr;
  CLI::Option* theta_true = nullptr;
  CLI::Option* theta_init = nullptr;
  CLI::Option* threads = nullptr;

  void attach(CLI::App& cmd) {
    config = cmd.add_option("--config", config_path,
                            "JSON config file (CLI flags override it)");
    seed = cmd.add_option("--seed", overrides.seed, "root RNG seed");
    replications = cmd.add_option("--replications", overrides.replications,
                                  "Monte-Carlo replications per delta");
    deltas = cmd.add_option("--delta", overrides.deltas,
                            "conditioning parameter values (repeatable)");
    engine = cmd.add_option("--engine", overrides.engine,
                            "filter engine: ud, conv or both");
    out_dir = cmd.add_option("--out", overrides.out_dir, "output directory");
    full_scale = cmd.add_flag("--full-scale", overrides.full_scale,
                              "run the full-size study (250 replications)");
    n_steps = cmd.add_option("--n-steps", overrides.n_steps,
                             "trajectory length per replication");
    theta_true = cmd.add_option("--theta-true", overrides.theta_true,
                                "true parameter for simulation");
    theta_init = cmd.add_option("--theta-init", overrides.theta_init,
                                "optimizer starting point");
    threads = cmd.add_option("--threads", overrides.threads,
                             "worker threads (0 = hardware)");
  }

  ex::Config resolve() const {
    ex::Config cfg;
    if (config->count()) cfg = ex::loadConfigFile(config_path);
    if (seed->count()) cfg.seed = overrides.seed;
    if (replications->count()) cfg.replications = overrides.replications;
    if (deltas->count()) cfg.deltas = overrides.deltas;
    if (engine->count()) cfg.engine = overrides.engine;
    if (out_dir->count()) cfg.out_dir = overrides.out_dir;
    if (full_scale->count()) cfg.full_scale = overrides.full_scale;
    if (n_steps->count()) cfg.n_steps = overrides.n_steps;
    if (theta_true->count()) cfg.theta_true = overrides.theta_true;
    if (theta_init->count()) cfg.theta_init = overrides.theta_init;
    if (threads->count()) cfg.threads = overrides.threads;
    if (cfg.full_scale && !replications->count()) cfg.replications = 250;
    ex::selectedEngines(cfg.engine);  // validate
    return cfg;
  }
};

int runVerifyLemma() {
  const ex::VerifyLemmaReport report = ex::verifyLemma();
  std::cout << report.text;
  return report.pass ? 0 : 1;
}

int runScanCommand(const ex::Config& cfg) {
  const ex::ScanReport report = ex::runScan(cfg);
  ex::writeScanReport(report, cfg);
  for (const ex::ScanEngineResult& er : report.engines) {
    std::cout << "engine " << ex::engineName(er.engine) << ": ";
    if (er.result.argmin_index >= 0)
      std::cout << "argmin gamma1 = "
                << ex::formatDouble(
                       report.grid[static_cast<std::size_t>(er.result.argmin_index)]);
    else
      std::cout << "argmin gamma1 = none";
    if (er.result.crossing_index >= 0) {
      const auto lo = static_cast<std::size_t>(er.result.crossing_index);
      std::cout << ", gradient crossing in ["
                << ex::formatDouble(report.grid[lo]) << ", "
                << ex::formatDouble(report.grid[lo + 1]) << "]";
    } else {
      std::cout << ", no gradient crossing";
    }
    std::cout << ", sign changes = " << er.result.sign_changes << "\n";
  }
  std::cout << "wrote scan artifacts to " << cfg.out_dir << "\n";
  return 0;
}

int runMonteCarloCommand(const ex::Config& cfg) {
  const ex::MonteCarloReport report =
      ex::runMonteCarlo(cfg, [](const std::string& message) {
        std::cerr << message << "\n";
      });
  ex::writeMonteCarloReport(report, cfg);
  std::cout << "delta,engine,mean,rmse,mape,failures\n";
  for (const ex::MonteCarloCell& cell : report.cells)
    std::cout << ex::formatDouble(cell.delta) << "," << ex::engineName(cell.engine)
              << "," << ex::formatDouble(cell.stats.mean) << ","
              << ex::formatDouble(cell.stats.rmse) << ","
              << ex::formatDouble(cell.stats.mape) << "," << cell.failures << "\n";
  std::cout << "wrote monte-carlo artifacts to " << cfg.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UD-factorized Kalman filtering, state sensitivities and "
               "likelihood-gradient experiments"};
  app.require_subcommand(1);

  CLI::App* verify = app.add_subcommand(
      "verify-lemma", "check the factorization-derivative rule on the "
                      "built-in worked example");

  CLI::App* scan_cmd = app.add_subcommand(
      "scan", "negative log-likelihood scan over gamma1 on the INS model");
  CommonOptions scan_opts;
  scan_opts.attach(*scan_cmd);
  double grid_lo = 0, grid_hi = 0, grid_step = 0, gamma_true = 0;
  std::int64_t scan_steps = 0;
  CLI::Option* grid_lo_opt = scan_cmd->add_option("--grid-lo", grid_lo, "grid start");
  CLI::Option* grid_hi_opt = scan_cmd->add_option("--grid-hi", grid_hi, "grid end");
  CLI::Option* grid_step_opt =
      scan_cmd->add_option("--grid-step", grid_step, "grid step");
  CLI::Option* gamma_true_opt = scan_cmd->add_option(
      "--gamma-true", gamma_true, "true gamma1 used to simulate the record");
  CLI::Option* scan_steps_opt = scan_cmd->add_option(
      "--scan-steps", scan_steps, "record length for the scan");

  CLI::App* mc_cmd = app.add_subcommand(
      "monte-carlo", "parameter-estimation study over the ill-conditioned family");
  CommonOptions mc_opts;
  mc_opts.attach(*mc_cmd);

  CLI::App* sim_cmd =
      app.add_subcommand("simulate", "simulate a trajectory and write CSV + sidecar");
  std::string sim_model = "illcond";
  double sim_delta = 1e-2;
  std::vector<double> sim_theta;
  std::int64_t sim_steps = 1000;
  std::uint64_t sim_seed = 20250815ULL;
  std::string sim_out;
  sim_cmd->add_option("--model", sim_model, "model name: ins, illcond or constant");
  sim_cmd->add_option("--delta", sim_delta, "illcond conditioning parameter");
  sim_cmd->add_option("--theta", sim_theta, "parameter vector for simulation")
      ->required();
  sim_cmd->add_option("--n-steps", sim_steps, "trajectory length");
  sim_cmd->add_option("--seed", sim_seed, "RNG seed");
  sim_cmd->add_option("--out", sim_out, "output CSV path")->required();

  CLI::App* fr_cmd = app.add_subcommand(
      "filter-run", "filter a trajectory file; emit estimates, sensitivities "
                    "and per-step log-likelihood terms");
  std::string fr_data, fr_out;
  std::vector<double> fr_theta;
  fr_cmd->add_option("--data", fr_data, "trajectory CSV (sidecar required)")
      ->required();
  CLI::Option* fr_theta_opt = fr_cmd->add_option(
      "--theta", fr_theta, "parameter vector (default: sidecar theta_true)");
  fr_cmd->add_option("--out", fr_out, "output CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (verify->parsed()) return runVerifyLemma();

    if (scan_cmd->parsed()) {
      ex::Config cfg = scan_opts.resolve();
      if (grid_lo_opt->count()) cfg.scan.grid_lo = grid_lo;
      if (grid_hi_opt->count()) cfg.scan.grid_hi = grid_hi;
      if (grid_step_opt->count()) cfg.scan.grid_step = grid_step;
      if (gamma_true_opt->count()) cfg.scan.gamma_true = gamma_true;
      if (scan_steps_opt->count()) cfg.scan.n_steps = scan_steps;
      return runScanCommand(cfg);
    }

    if (mc_cmd->parsed()) return runMonteCarloCommand(mc_opts.resolve());

    if (sim_cmd->parsed()) {
      ex::ModelSpec spec;
      spec.name = sim_model;
      spec.delta = sim_delta;
      const udkf::ParametricModel<double> model = spec.build();
      const udkf::DenseVector<double> theta = Eigen::Map<udkf::DenseVector<double>>(
          sim_theta.data(), static_cast<udkf::Index>(sim_theta.size()));
      const udkf::Trajectory<double> traj =
          udkf::simulate(model, theta, sim_steps, sim_seed);
      ex::writeTrajectory(traj, spec, sim_out);
      std::cout << "wrote " << traj.measurements.size() << " steps to " << sim_out
                << "\n";
      return 0;
    }

    if (fr_cmd->parsed()) {
      ex::ModelSpec spec;
      udkf::Trajectory<double> traj = ex::readTrajectory(fr_data, spec);
      udkf::DenseVector<double> theta = traj.theta_true;
      if (fr_theta_opt->count())
        theta = Eigen::Map<udkf::DenseVector<double>>(
            fr_theta.data(), static_cast<udkf::Index>(fr_theta.size()));
      const udkf::ParametricModel<double> model = spec.build();

      double loglik = 0;
      if (fr_out.empty()) {
        loglik = ex::runFilterToCsv(model, theta, traj.measurements, std::cout);
      } else {
        std::ofstream out = ex::openOutput(fr_out);
        loglik = ex::runFilterToCsv(model, theta, traj.measurements, out);
        std::cout << "total loglik = " << ex::formatDouble(loglik) << "\n";
        std::cout << "wrote " << traj.measurements.size() << " rows to " << fr_out
                  << "\n";
      }
      return 0;
    }
  } catch (const ex::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const udkf::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const udkf::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const udkf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
