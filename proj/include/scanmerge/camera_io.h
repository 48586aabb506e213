#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "scanmerge/geometry.h"

namespace scanmerge {

using Json = nlohmann::json;

// Camera file layout:
//   {"cameras": [{"fx":..,"fy":..,"cx":..,"cy":..,"w":..,"h":..,
//                 "R":[9 values, row-major], "t":[3 values],
//                 "label":"captured-ground"}, ...]}
// Poses are world-to-camera.
Json CameraToJson(const CameraView& cam);
CameraView CameraFromJson(const Json& j);
std::vector<CameraView> ReadCamerasJson(const std::string& path);
void WriteCamerasJson(const std::string& path, const std::vector<CameraView>& cams);

Json RotationToJson(const Rotation3& r);
Rotation3 RotationFromJson(const Json& j);
Json Sim3ToJson(const Sim3Transform& t);
Sim3Transform Sim3FromJson(const Json& j);
Json PointToJson(const Point3& p);
Point3 PointFromJson(const Json& j);

// Comments (// and /* */) are skipped when allow_comments is set.
Json ReadJsonFile(const std::string& path, bool allow_comments = false);
// Pretty-printed with a trailing newline.
void WriteJsonFile(const std::string& path, const Json& j);

}  // namespace scanmerge
