#include "scanmerge/camera_io.h"

#include <fstream>

#include "scanmerge/errors.h"

namespace scanmerge {

Json RotationToJson(const Rotation3& r) {
  Json arr = Json::array();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) arr.push_back(r.matrix()(i, k));
  }
  return arr;
}

Rotation3 RotationFromJson(const Json& j) {
  if (!j.is_array() || j.size() != 9) {
    throw InvalidArgument("rotation must be 9 row-major values");
  }
  Matrix3 m;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) m(i, k) = j[3 * i + k].get<double>();
  }
  return Rotation3::FromMatrix(m);
}

Json PointToJson(const Point3& p) { return Json::array({p.x(), p.y(), p.z()}); }

Point3 PointFromJson(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw InvalidArgument("point must be 3 values");
  return Point3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Json Sim3ToJson(const Sim3Transform& t) {
  return Json{{"scale", t.scale()},
              {"R", RotationToJson(t.rotation())},
              {"t", PointToJson(t.translation())}};
}

Sim3Transform Sim3FromJson(const Json& j) {
  return Sim3Transform(j.at("scale").get<double>(), RotationFromJson(j.at("R")),
                       PointFromJson(j.at("t")));
}

Json CameraToJson(const CameraView& cam) {
  const auto& k = cam.intrinsics;
  return Json{{"fx", k.fx},
              {"fy", k.fy},
              {"cx", k.cx},
              {"cy", k.cy},
              {"w", k.width},
              {"h", k.height},
              {"R", RotationToJson(cam.pose.rotation)},
              {"t", PointToJson(cam.pose.translation)},
              {"label", std::string(CameraLabelName(cam.label))}};
}

CameraView CameraFromJson(const Json& j) {
  CameraView cam;
  cam.intrinsics = CameraIntrinsics::Create(
      j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
      j.at("cy").get<double>(), j.at("w").get<int>(), j.at("h").get<int>());
  cam.pose.rotation = RotationFromJson(j.at("R"));
  cam.pose.translation = PointFromJson(j.at("t"));
  cam.label = ParseCameraLabel(j.value("label", std::string("captured-ground")));
  return cam;
}

std::vector<CameraView> ReadCamerasJson(const std::string& path) {
  const Json j = ReadJsonFile(path);
  std::vector<CameraView> cams;
  for (const Json& c : j.at("cameras")) cams.push_back(CameraFromJson(c));
  return cams;
}

void WriteCamerasJson(const std::string& path, const std::vector<CameraView>& cams) {
  Json arr = Json::array();
  for (const auto& c : cams) arr.push_back(CameraToJson(c));
  WriteJsonFile(path, Json{{"cameras", arr}});
}

Json ReadJsonFile(const std::string& path, bool allow_comments) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return Json::parse(in, nullptr, true, allow_comments);
  } catch (const Json::parse_error& e) {
    throw IoError("malformed JSON in '" + path + "': " + e.what());
  }
}

void WriteJsonFile(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

}  // namespace scanmerge
