// Trajectory CSV export/import (with JSON sidecar) and the per-step
// filter-run CSV writer.

#include "udkf/experiments.hpp"

#include "json_support.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace udkf::experiments {

namespace {

std::string sidecarPath(const std::string& csv_path) { return csv_path + ".json"; }

[[noreturn]] void rowError(std::size_t row, std::size_t column,
                           const std::string& why) {
  throw IoError("trajectory file validation error at row " + std::to_string(row) +
                ", column " + std::to_string(column) + ": " + why);
}

double parseNumber(const std::string& field, std::size_t row, std::size_t column) {
  double value = 0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end)
    rowError(row, column, "not a number: '" + field + "'");
  return value;
}

std::vector<std::string> splitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

void writeTrajectory(const Trajectory<double>& traj, const ModelSpec& spec,
                     const std::string& csv_path) {
  std::ofstream csv = openOutput(csv_path);
  const Index m = traj.measurements.empty() ? spec.build().m
                                            : traj.measurements.front().size();
  csv << "k";
  for (Index j = 0; j < m; ++j) csv << ",z" << (j + 1);
  csv << "\n";
  for (std::size_t k = 0; k < traj.measurements.size(); ++k) {
    csv << k;
    for (Index j = 0; j < m; ++j)
      csv << "," << formatDouble(traj.measurements[k](j));
    csv << "\n";
  }

  nlohmann::json sidecar;
  sidecar["format"] = "udkf-trajectory";
  sidecar["version"] = kToolVersion;
  sidecar["model"] = detail::modelSpecJson(spec);
  sidecar["n_steps"] = traj.measurements.size();
  sidecar["seed"] = traj.seed;
  sidecar["theta_true"] = std::vector<double>(
      traj.theta_true.data(), traj.theta_true.data() + traj.theta_true.size());
  openOutput(sidecarPath(csv_path)) << sidecar.dump(2) << "\n";
}

Trajectory<double> readTrajectory(const std::string& csv_path, ModelSpec& spec_out) {
  nlohmann::json sidecar;
  try {
    sidecar = nlohmann::json::parse(detail::readFile(sidecarPath(csv_path)));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("trajectory sidecar parse error: " + std::string(e.what()));
  }
  if (sidecar.value("format", "") != "udkf-trajectory")
    throw IoError("trajectory sidecar validation error: unexpected format field");
  spec_out = detail::modelSpecFromJsonObject(sidecar.at("model"));

  Trajectory<double> traj;
  traj.seed = sidecar.value("seed", std::uint64_t{0});
  const std::vector<double> theta =
      sidecar.value("theta_true", std::vector<double>{});
  traj.theta_true = Eigen::Map<const DenseVector<double>>(
      theta.data(), static_cast<Index>(theta.size()));
  const auto n_steps = sidecar.value("n_steps", std::size_t{0});

  std::istringstream csv(detail::readFile(csv_path));
  std::string line;
  if (!std::getline(csv, line))
    throw IoError("trajectory file validation error at row 0, column 0: "
                  "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = splitCsvLine(line);
  if (header.empty() || header[0] != "k")
    rowError(0, 1, "header must start with 'k'");
  const std::size_t m = header.size() - 1;
  for (std::size_t j = 0; j < m; ++j)
    if (header[j + 1] != "z" + std::to_string(j + 1))
      rowError(0, j + 2, "unexpected header field '" + header[j + 1] + "'");
  if (m == 0) rowError(0, 2, "no measurement columns");

  std::size_t row = 0;
  while (std::getline(csv, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const std::vector<std::string> fields = splitCsvLine(line);
    if (fields.size() != m + 1)
      rowError(row, fields.size(),
               "expected " + std::to_string(m + 1) + " fields, found " +
                   std::to_string(fields.size()));
    const double k = parseNumber(fields[0], row, 1);
    if (k != static_cast<double>(row - 1))
      rowError(row, 1, "nonconsecutive step index");
    DenseVector<double> z(static_cast<Index>(m));
    for (std::size_t j = 0; j < m; ++j)
      z(static_cast<Index>(j)) = parseNumber(fields[j + 1], row, j + 2);
    traj.measurements.push_back(std::move(z));
  }
  if (traj.measurements.size() != n_steps)
    throw IoError("trajectory file validation error: row count " +
                  std::to_string(traj.measurements.size()) +
                  " does not match sidecar n_steps " + std::to_string(n_steps));
  return traj;
}

double runFilterToCsv(const ParametricModel<double>& model,
                      const DenseVector<double>& theta,
                      const std::vector<DenseVector<double>>& measurements,
                      std::ostream& out) {
  const SystemMatrices<double> mats = model.at(theta);
  const SystemDerivatives<double> deriv = model.derivativesAt(theta);
  const Index n = mats.stateDim();

  out << "k";
  for (Index j = 0; j < n; ++j) out << ",xhat" << (j + 1);
  for (int i = 0; i < model.p; ++i)
    for (Index j = 0; j < n; ++j)
      out << ",dxhat" << (j + 1) << "_dtheta" << (i + 1);
  out << ",loglik_term\n";

  StepObserver<double> observer = [&out](Index k, const FilterState<double>& state,
                                         const SensitivityState<double>& sens,
                                         double term) {
    out << k;
    for (Index j = 0; j < state.x.size(); ++j)
      out << "," << formatDouble(state.x(j));
    for (const DenseVector<double>& xp : sens.x_prime)
      for (Index j = 0; j < xp.size(); ++j) out << "," << formatDouble(xp(j));
    out << "," << formatDouble(term) << "\n";
  };

  const FilterRunResult<double> result =
      runExtendedFilter(mats, deriv, measurements, observer);
  return result.loglik;
}

}  // namespace udkf::experiments
