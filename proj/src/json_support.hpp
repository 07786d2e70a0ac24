#pragma once

// Internal JSON helpers shared by the experiments translation units.

#include "udkf/experiments.hpp"

#include "json.hpp"

#include <fstream>
#include <string>

namespace udkf::experiments::detail {

nlohmann::json configJson(const Config& cfg);
Config configFromJsonObject(const nlohmann::json& j);
nlohmann::json modelSpecJson(const ModelSpec& spec);
ModelSpec modelSpecFromJsonObject(const nlohmann::json& j);

// Reads a whole file; throws IoError when unreadable.
std::string readFile(const std::string& path);

}  // namespace udkf::experiments::detail
