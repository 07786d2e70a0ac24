// Likelihood scan over the gyro drift-rate constant of the INS model, with
// CSV/JSON/gnuplot artifacts.

#include "udkf/experiments.hpp"

#include "json_support.hpp"

#include <cmath>
#include <fstream>
#include <string>

namespace udkf::experiments {

std::vector<double> makeGrid(const ScanConfig& scan) {
  if (!(scan.grid_step > 0) || scan.grid_lo > scan.grid_hi)
    throw IoError("config validation error: malformed scan grid");
  const int count =
      static_cast<int>(std::floor((scan.grid_hi - scan.grid_lo) / scan.grid_step + 0.5)) + 1;
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double value = scan.grid_lo + i * scan.grid_step;
    if (value > scan.grid_hi + scan.grid_step / 2) break;
    grid.push_back(value);
  }
  return grid;
}

ScanReport runScan(const Config& cfg) {
  const ParametricModel<double> model = insModel<double>(cfg.ins);
  DenseVector<double> theta_true(1);
  theta_true << cfg.scan.gamma_true;
  const Trajectory<double> traj =
      simulate(model, theta_true, cfg.scan.n_steps, cfg.seed);

  ScanReport report;
  report.grid = makeGrid(cfg.scan);
  const std::vector<double>& grid = report.grid;
  for (Engine engine : selectedEngines(cfg.engine)) {
    Objective<double> obj{model, traj.measurements, engine};
    report.engines.push_back({engine, scan(obj, grid)});
  }
  return report;
}

namespace {

std::string sanitizeCsvField(std::string text) {
  for (char& c : text)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return text;
}

nlohmann::json engineSummaryJson(const ScanEngineResult& er,
                                 const std::vector<double>& grid) {
  const ScanResult<double>& res = er.result;
  nlohmann::json j;
  j["sign_changes"] = res.sign_changes;
  if (res.argmin_index >= 0) {
    j["argmin_gamma"] = grid[static_cast<std::size_t>(res.argmin_index)];
    j["argmin_neg_loglik"] =
        res.rows[static_cast<std::size_t>(res.argmin_index)].neg_loglik;
  } else {
    j["argmin_gamma"] = nullptr;
    j["argmin_neg_loglik"] = nullptr;
  }
  if (res.crossing_index >= 0) {
    j["crossing_bracket"] = {grid[static_cast<std::size_t>(res.crossing_index)],
                             grid[static_cast<std::size_t>(res.crossing_index) + 1]};
  } else {
    j["crossing_bracket"] = nullptr;
  }
  return j;
}

}  // namespace

void writeScanReport(const ScanReport& report, const Config& cfg) {
  const std::string dir = cfg.out_dir;

  for (const ScanEngineResult& er : report.engines) {
    std::ofstream csv =
        openOutput(dir + "/scan_" + engineName(er.engine) + ".csv");
    csv << "gamma1,neg_loglik,neg_grad,status\n";
    for (const ScanRow<double>& row : er.result.rows) {
      csv << formatDouble(row.theta) << ",";
      if (row.ok)
        csv << formatDouble(row.neg_loglik) << "," << formatDouble(row.neg_gradient)
            << ",ok\n";
      else
        csv << ",," << sanitizeCsvField("error: " + row.error) << "\n";
    }
  }

  nlohmann::json summary;
  summary["version"] = kToolVersion;
  summary["config"] = detail::configJson(cfg);
  summary["grid_points"] = report.grid.size();
  nlohmann::json engines;
  for (const ScanEngineResult& er : report.engines)
    engines[engineName(er.engine)] = engineSummaryJson(er, report.grid);
  summary["engines"] = engines;
  openOutput(dir + "/scan_summary.json") << summary.dump(2) << "\n";

  std::ofstream gp = openOutput(dir + "/scan.gp");
  gp << "# gnuplot script: negative log-likelihood and its gradient over the "
        "scan grid\n"
        "set datafile separator ','\n"
        "set terminal pngcairo size 1000,700\n"
        "set output 'scan.png'\n"
        "set multiplot layout 2,1\n"
        "set xlabel 'gamma1'\n"
        "set ylabel 'negative log-likelihood'\n"
        "plot";
  bool first = true;
  for (const ScanEngineResult& er : report.engines) {
    gp << (first ? " " : ", ") << "'scan_" << engineName(er.engine)
       << ".csv' skip 1 using 1:2 with lines title '" << engineName(er.engine)
       << "'";
    first = false;
  }
  gp << "\nset ylabel 'negative log-likelihood gradient'\nplot";
  first = true;
  for (const ScanEngineResult& er : report.engines) {
    gp << (first ? " " : ", ") << "'scan_" << engineName(er.engine)
       << ".csv' skip 1 using 1:3 with lines title '" << engineName(er.engine)
       << "'";
    first = false;
  }
  gp << ", 0 with lines dashtype 2 title ''\nunset multiplot\n";
}

}  // namespace udkf::experiments
