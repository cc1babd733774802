#include "poselift/calibration.hpp"

#include <array>
#include <fstream>

#include "poselift/csv.hpp"

namespace poselift {
namespace {

using nlohmann::json;

constexpr std::array<const char*, 9> kCameraFields = {
    "name", "image_size", "fx", "fy", "cx", "cy", "dist", "rotation", "translation"};

double number(const json& j, const char* key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw ParseError(where, 0, std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

template <int N>
Eigen::Matrix<double, N, 1> vector_field(const json& j, const char* key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != N)
    throw ParseError(where, 0, std::string("field '") + key + "' must be an array of " + std::to_string(N));
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) {
    if (!v[i].is_number()) throw ParseError(where, 0, std::string("field '") + key + "' must be numeric");
    out[i] = v[i].get<double>();
  }
  return out;
}

}  // namespace

Rig rig_from_json(const json& doc, const std::string& source) {
  if (!doc.is_object()) throw ParseError(source, 0, "calibration must be a JSON object");
  for (const auto& [key, _] : doc.items())
    if (key != "cameras") throw ParseError(source, 0, "unknown field '" + key + "'");
  if (!doc.contains("cameras") || !doc["cameras"].is_array())
    throw ParseError(source, 0, "missing 'cameras' array");

  Rig rig;
  std::size_t index = 0;
  for (const auto& jc : doc["cameras"]) {
    const std::string where = source + " camera[" + std::to_string(index++) + "]";
    if (!jc.is_object()) throw ParseError(where, 0, "camera entry must be an object");
    for (const auto& [key, _] : jc.items()) {
      if (std::find_if(kCameraFields.begin(), kCameraFields.end(),
                       [&](const char* f) { return key == f; }) == kCameraFields.end())
        throw ParseError(where, 0, "unknown field '" + key + "'");
    }
    for (const char* f : kCameraFields)
      if (!jc.contains(f)) throw ParseError(where, 0, std::string("missing field '") + f + "'");

    Camera cam;
    if (!jc["name"].is_string()) throw ParseError(where, 0, "field 'name' must be a string");
    cam.name = jc["name"].get<std::string>();
    const auto& size = jc["image_size"];
    if (!size.is_array() || size.size() != 2 || !size[0].is_number_integer() || !size[1].is_number_integer())
      throw ParseError(where, 0, "field 'image_size' must be [width, height] integers");
    cam.image_size = {size[0].get<int>(), size[1].get<int>()};
    cam.fx = number(jc, "fx", where);
    cam.fy = number(jc, "fy", where);
    cam.cx = number(jc, "cx", where);
    cam.cy = number(jc, "cy", where);
    cam.dist = vector_field<5>(jc, "dist", where);
    cam.rotation = vector_field<3>(jc, "rotation", where);
    cam.translation = vector_field<3>(jc, "translation", where);
    rig.cameras.push_back(std::move(cam));
  }
  validate(rig);
  return rig;
}

json rig_to_json(const Rig& rig) {
  json cams = json::array();
  for (const auto& c : rig.cameras) {
    cams.push_back({{"name", c.name},
                    {"image_size", {c.image_size.width, c.image_size.height}},
                    {"fx", c.fx},
                    {"fy", c.fy},
                    {"cx", c.cx},
                    {"cy", c.cy},
                    {"dist", {c.dist[0], c.dist[1], c.dist[2], c.dist[3], c.dist[4]}},
                    {"rotation", {c.rotation[0], c.rotation[1], c.rotation[2]}},
                    {"translation", {c.translation[0], c.translation[1], c.translation[2]}}});
  }
  return {{"cameras", cams}};
}

Rig load_rig(const std::filesystem::path& path) {
  return rig_from_json(read_json(path), path.string());
}

void save_rig(const Rig& rig, const std::filesystem::path& path) {
  write_json(rig_to_json(rig), path);
}

}  // namespace poselift
