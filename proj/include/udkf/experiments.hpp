#pragma once

// Experiment runner layer: configuration, seeded Monte-Carlo studies, the
// likelihood scan, the worked-example verification report, trajectory and
// report file I/O. Everything here is double precision and deterministic:
// identical configs produce byte-identical artifacts.

#include "udkf/mle.hpp"
#include "udkf/models.hpp"

#include <cstdint>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace udkf::experiments {

inline constexpr const char* kToolVersion = "1.0.0";

// File and format problems (unreadable paths, malformed CSV/JSON).
class IoError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Configuration

// Which catalog model a trajectory belongs to (serialized into sidecars).
struct ModelSpec {
  std::string name = "illcond";  // "ins" | "illcond" | "constant"
  double delta = 1e-2;           // illcond conditioning knob
  InsConstants ins;

  ParametricModel<double> build() const;
  std::string toJson() const;
  static ModelSpec fromJson(const std::string& text);
};

struct ScanConfig {
  double grid_lo = 1e-5;
  double grid_hi = 4e-4;
  double grid_step = 1e-5;
  double gamma_true = 2e-4;
  Index n_steps = 1000;
};

struct Config {
  std::uint64_t seed = 20250815ULL;
  int replications = 25;
  bool full_scale = false;  // resolved by the CLI into replications = 250
  Index n_steps = 1000;
  std::vector<double> deltas = {1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
  double theta_true = 7.0;
  double theta_init = 1.0;
  std::string engine = "both";  // "ud" | "conv" | "both"
  std::string out_dir = "out";
  int threads = 0;  // 0 = hardware concurrency
  ScanConfig scan;
  InsConstants ins;
};

// JSON round-trip for configs; unknown keys are rejected (validation).
std::string configToJson(const Config& cfg);
Config configFromJson(const std::string& text);
Config loadConfigFile(const std::string& path);

// Engine list resolved from the config's engine selector.
std::vector<Engine> selectedEngines(const std::string& selector);
std::string engineName(Engine engine);

// ---------------------------------------------------------------------------
// Deterministic helpers

// Shortest-round-trip style float formatting ('%.17g', C locale).
std::string formatDouble(double value);

// Opens an output file for writing, creating parent directories as needed;
// throws IoError on failure.
std::ofstream openOutput(const std::string& path);

// Per-replication seed derivation (splitmix64 of root + index), so work-pool
// scheduling can never change results.
std::uint64_t replicationSeed(std::uint64_t root_seed, std::uint64_t index);

// Runs fn(0..count-1) on a small work pool; exceptions rethrow on the caller.
void parallelFor(std::size_t count, int threads,
                 const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Worked-example verification (factorization-derivative rule)

struct VerifyLemmaReport {
  std::string text;         // printable, deterministic byte-for-byte
  double max_deviation = 0;
  double consistency_norm = 0;
  bool pass = false;
};

// Runs the static worked example at theta = 2, compares every intermediate
// quantity against the known reference values (4-decimal tolerance 5e-5)
// and evaluates the derivative consistency norm (tolerance 1e-10).
VerifyLemmaReport verifyLemma();

// ---------------------------------------------------------------------------
// Likelihood scan

struct ScanEngineResult {
  Engine engine;
  ScanResult<double> result;
};

struct ScanReport {
  std::vector<double> grid;
  std::vector<ScanEngineResult> engines;
};

std::vector<double> makeGrid(const ScanConfig& scan);
ScanReport runScan(const Config& cfg);
// Writes scan_<engine>.csv per engine, scan_summary.json, scan.gp.
void writeScanReport(const ScanReport& report, const Config& cfg);

// ---------------------------------------------------------------------------
// Monte-Carlo study

struct ReplicationOutcome {
  int replication = 0;
  std::uint64_t seed = 0;
  double theta_hat = 0;
  bool converged = false;
  int iterations = 0;
  std::string failure;
};

struct Aggregates {
  double mean = 0;
  double rmse = 0;
  double mape = 0;
};

// mean, RMSE = sqrt(mean((th-th*)^2)), MAPE = mean(|th-th*|/th*)*100.
Aggregates aggregate(const std::vector<double>& estimates, double theta_star);

struct MonteCarloCell {
  double delta = 0;
  Engine engine = Engine::kUd;
  std::vector<ReplicationOutcome> rows;
  Aggregates stats;
  int failures = 0;
};

struct MonteCarloReport {
  std::vector<MonteCarloCell> cells;
};

using ProgressFn = std::function<void(const std::string&)>;
MonteCarloReport runMonteCarlo(const Config& cfg, const ProgressFn& progress = {});
// Writes monte_carlo_raw.csv, monte_carlo_summary.csv, monte_carlo_summary.json,
// monte_carlo.gp.
void writeMonteCarloReport(const MonteCarloReport& report, const Config& cfg);

// ---------------------------------------------------------------------------
// Trajectory and filter-run I/O

// CSV columns k,z1..zm plus a JSON sidecar (path + ".json") carrying
// {seed, theta_true, model, n_steps}.
void writeTrajectory(const Trajectory<double>& traj, const ModelSpec& spec,
                     const std::string& csv_path);
Trajectory<double> readTrajectory(const std::string& csv_path, ModelSpec& spec_out);

// Filters a measurement record and writes per-step rows:
// k, xhat_1..xhat_n, dxhat_<i>_1..dxhat_<i>_n per parameter, loglik_term.
// Returns the total log-likelihood.
double runFilterToCsv(const ParametricModel<double>& model,
                      const DenseVector<double>& theta,
                      const std::vector<DenseVector<double>>& measurements,
                      std::ostream& out);

}  // namespace udkf::experiments
