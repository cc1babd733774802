#pragma once

#include <filesystem>

#include <json.hpp>

#include "poselift/geometry.hpp"

namespace poselift {

/// Parses a calibration document. Every camera field is required and unknown
/// fields are rejected. The parsed rig is validated before it is returned.
Rig rig_from_json(const nlohmann::json& doc, const std::string& source = "calibration");
nlohmann::json rig_to_json(const Rig& rig);

Rig load_rig(const std::filesystem::path& path);
void save_rig(const Rig& rig, const std::filesystem::path& path);

}  // namespace poselift
