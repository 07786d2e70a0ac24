// Configuration handling, model registry, and deterministic utilities for
// the experiments layer.

#include "udkf/experiments.hpp"

#include "json_support.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

namespace udkf::experiments {

namespace detail {

namespace {

void rejectUnknownKeys(const nlohmann::json& j, const char* where,
                       std::initializer_list<const char*> known) {
  for (const auto& item : j.items()) {
    bool found = false;
    for (const char* key : known)
      if (item.key() == key) {
        found = true;
        break;
      }
    if (!found)
      throw IoError(std::string("config validation error: unknown key '") +
                    item.key() + "' in " + where);
  }
}

nlohmann::json insJson(const InsConstants& c) {
  return {{"tau", c.tau}, {"g", c.g}, {"a", c.a}, {"h1", c.h1}};
}

InsConstants insFromJson(const nlohmann::json& j) {
  rejectUnknownKeys(j, "ins", {"tau", "g", "a", "h1"});
  InsConstants c;
  c.tau = j.value("tau", c.tau);
  c.g = j.value("g", c.g);
  c.a = j.value("a", c.a);
  c.h1 = j.value("h1", c.h1);
  return c;
}

}  // namespace

nlohmann::json configJson(const Config& cfg) {
  nlohmann::json scan = {{"grid_lo", cfg.scan.grid_lo},
                         {"grid_hi", cfg.scan.grid_hi},
                         {"grid_step", cfg.scan.grid_step},
                         {"gamma_true", cfg.scan.gamma_true},
                         {"n_steps", cfg.scan.n_steps}};
  return {{"seed", cfg.seed},
          {"replications", cfg.replications},
          {"full_scale", cfg.full_scale},
          {"n_steps", cfg.n_steps},
          {"deltas", cfg.deltas},
          {"theta_true", cfg.theta_true},
          {"theta_init", cfg.theta_init},
          {"engine", cfg.engine},
          {"out_dir", cfg.out_dir},
          {"threads", cfg.threads},
          {"scan", scan},
          {"ins", insJson(cfg.ins)}};
}

Config configFromJsonObject(const nlohmann::json& j) {
  rejectUnknownKeys(j, "config",
                    {"seed", "replications", "full_scale", "n_steps", "deltas",
                     "theta_true", "theta_init", "engine", "out_dir", "threads",
                     "scan", "ins"});
  Config cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.replications = j.value("replications", cfg.replications);
  cfg.full_scale = j.value("full_scale", cfg.full_scale);
  cfg.n_steps = j.value("n_steps", cfg.n_steps);
  cfg.deltas = j.value("deltas", cfg.deltas);
  cfg.theta_true = j.value("theta_true", cfg.theta_true);
  cfg.theta_init = j.value("theta_init", cfg.theta_init);
  cfg.engine = j.value("engine", cfg.engine);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.threads = j.value("threads", cfg.threads);
  if (j.contains("scan")) {
    const nlohmann::json& s = j.at("scan");
    rejectUnknownKeys(s, "scan",
                      {"grid_lo", "grid_hi", "grid_step", "gamma_true", "n_steps"});
    cfg.scan.grid_lo = s.value("grid_lo", cfg.scan.grid_lo);
    cfg.scan.grid_hi = s.value("grid_hi", cfg.scan.grid_hi);
    cfg.scan.grid_step = s.value("grid_step", cfg.scan.grid_step);
    cfg.scan.gamma_true = s.value("gamma_true", cfg.scan.gamma_true);
    cfg.scan.n_steps = s.value("n_steps", cfg.scan.n_steps);
  }
  if (j.contains("ins")) cfg.ins = insFromJson(j.at("ins"));

  if (cfg.replications < 1)
    throw IoError("config validation error: replications must be >= 1");
  if (cfg.n_steps < 0)
    throw IoError("config validation error: n_steps must be >= 0");
  if (cfg.deltas.empty())
    throw IoError("config validation error: deltas must be nonempty");
  for (double d : cfg.deltas)
    if (!(d > 0)) throw IoError("config validation error: deltas must be positive");
  if (!(cfg.scan.grid_step > 0) || cfg.scan.grid_lo > cfg.scan.grid_hi)
    throw IoError("config validation error: malformed scan grid");
  selectedEngines(cfg.engine);  // validates the selector
  return cfg;
}

nlohmann::json modelSpecJson(const ModelSpec& spec) {
  return {{"name", spec.name}, {"delta", spec.delta}, {"ins", insJson(spec.ins)}};
}

ModelSpec modelSpecFromJsonObject(const nlohmann::json& j) {
  rejectUnknownKeys(j, "model", {"name", "delta", "ins"});
  ModelSpec spec;
  spec.name = j.value("name", spec.name);
  spec.delta = j.value("delta", spec.delta);
  if (j.contains("ins")) spec.ins = insFromJson(j.at("ins"));
  return spec;
}

std::string readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace detail

std::ofstream openOutput(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory: " + p.parent_path().string());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path);
  return out;
}

ParametricModel<double> ModelSpec::build() const {
  if (name == "ins") return insModel<double>(ins);
  if (name == "illcond") return illcondModel<double>(delta);
  if (name == "constant") return constantModel<double>();
  throw IoError("config validation error: unknown model name '" + name + "'");
}

std::string ModelSpec::toJson() const {
  return detail::modelSpecJson(*this).dump(2) + "\n";
}

ModelSpec ModelSpec::fromJson(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("model spec parse error: ") + e.what());
  }
  return detail::modelSpecFromJsonObject(j);
}

std::string configToJson(const Config& cfg) {
  return detail::configJson(cfg).dump(2) + "\n";
}

Config configFromJson(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("config parse error: ") + e.what());
  }
  return detail::configFromJsonObject(j);
}

Config loadConfigFile(const std::string& path) {
  return configFromJson(detail::readFile(path));
}

std::vector<Engine> selectedEngines(const std::string& selector) {
  if (selector == "ud") return {Engine::kUd};
  if (selector == "conv") return {Engine::kConventionalDiff};
  if (selector == "both") return {Engine::kUd, Engine::kConventionalDiff};
  throw IoError("config validation error: engine must be ud, conv or both");
}

std::string engineName(Engine engine) {
  return engine == Engine::kUd ? "ud" : "conv";
}

std::string formatDouble(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

std::uint64_t replicationSeed(std::uint64_t root_seed, std::uint64_t index) {
  // splitmix64 of root + golden-ratio stride; decorrelates consecutive
  // indices while staying order-independent for parallel scheduling.
  std::uint64_t z = root_seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void parallelFor(std::size_t count, int threads,
                 const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  std::size_t workers = threads > 0
                            ? static_cast<std::size_t>(threads)
                            : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);

  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 0; t + 1 < workers; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace udkf::experiments
