#include "scanmerge/table_io.h"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "scanmerge/camera_io.h"
#include "scanmerge/errors.h"

namespace scanmerge {

namespace {

std::string Num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream OpenOut(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

struct Table {
  std::vector<std::vector<std::string>> rows;
  std::string path;
};

Table ReadTable(const std::string& path, const std::string& header,
                const std::string& optional_column = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const bool extended = !optional_column.empty() && line == header + "," + optional_column;
  if (line != header && !extended) {
    throw IoError(path + ": unexpected header '" + line + "'");
  }
  size_t cols = 1;
  for (char c : header) cols += c == ',' ? 1 : 0;
  if (extended) ++cols;
  Table t;
  t.path = path;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != cols) {
      throw IoError(path + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(cols) + " fields");
    }
    t.rows.push_back(std::move(fields));
  }
  return t;
}

double ToDouble(const std::string& s, const std::string& path) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw IoError(path + ": bad number '" + s + "'");
  return v;
}

int ToInt(const std::string& s, const std::string& path) {
  size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw IoError(path + ": bad integer '" + s + "'");
  return v;
}

const char* kTracksHeader = "camera,point,u,v,feature_scale";
const char* kCorrHeader = "scan,src_x,src_y,src_z,dst_x,dst_y,dst_z,channel,weight,track";
const char* kRefHeader = "scan,track,region,sfm_x,sfm_y,sfm_z,laser_x,laser_y,laser_z";

}  // namespace

void WriteTracksCsv(const std::string& path, const std::vector<Observation2D>& obs) {
  auto out = OpenOut(path);
  out << kTracksHeader << '\n';
  for (const auto& o : obs) {
    out << o.camera << ',' << o.point << ',' << Num(o.pixel.x()) << ','
        << Num(o.pixel.y()) << ',' << Num(o.feature_scale) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<Observation2D> ReadTracksCsv(const std::string& path) {
  const Table t = ReadTable(path, kTracksHeader);
  std::vector<Observation2D> obs;
  obs.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    Observation2D o;
    o.camera = ToInt(r[0], path);
    o.point = ToInt(r[1], path);
    o.pixel = Vector2(ToDouble(r[2], path), ToDouble(r[3], path));
    o.feature_scale = ToDouble(r[4], path);
    obs.push_back(o);
  }
  return obs;
}

void WriteCorrespondencesCsv(const std::string& path,
                             const std::vector<Correspondence3D>& pairs,
                             const std::vector<bool>* inlier) {
  if (inlier && inlier->size() != pairs.size()) {
    throw InvalidArgument("inlier flags do not match the correspondences");
  }
  auto out = OpenOut(path);
  out << kCorrHeader << (inlier ? ",inlier" : "") << '\n';
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& c = pairs[i];
    out << c.scan << ',' << Num(c.source.x()) << ',' << Num(c.source.y()) << ','
        << Num(c.source.z()) << ',' << Num(c.target.x()) << ',' << Num(c.target.y())
        << ',' << Num(c.target.z()) << ',' << ChannelName(c.channel) << ','
        << Num(c.weight) << ',' << c.track;
    if (inlier) out << ',' << ((*inlier)[i] ? 1 : 0);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<Correspondence3D> ReadCorrespondencesCsv(const std::string& path,
                                                     std::vector<bool>* inlier) {
  const Table t = ReadTable(path, kCorrHeader, "inlier");
  std::vector<Correspondence3D> pairs;
  if (inlier) inlier->clear();
  for (const auto& r : t.rows) {
    Correspondence3D c;
    c.scan = ToInt(r[0], path);
    c.source = Point3(ToDouble(r[1], path), ToDouble(r[2], path), ToDouble(r[3], path));
    c.target = Point3(ToDouble(r[4], path), ToDouble(r[5], path), ToDouble(r[6], path));
    try {
      c.channel = ParseChannel(r[7]);
    } catch (const InvalidArgument& e) {
      throw IoError(path + ": " + e.what());
    }
    c.weight = ToDouble(r[8], path);
    c.track = ToInt(r[9], path);
    pairs.push_back(c);
    if (inlier) inlier->push_back(r.size() > 10 ? ToInt(r[10], path) != 0 : true);
  }
  return pairs;
}

void WriteReferencesCsv(const std::string& path, const std::vector<ReferencePair>& refs) {
  auto out = OpenOut(path);
  out << kRefHeader << '\n';
  for (const auto& p : refs) {
    out << p.scan << ',' << p.track << ','
        << (p.region == Region::kIndoor ? "indoor" : "outdoor") << ','
        << Num(p.sfm_point.x()) << ',' << Num(p.sfm_point.y()) << ','
        << Num(p.sfm_point.z()) << ',' << Num(p.laser_point.x()) << ','
        << Num(p.laser_point.y()) << ',' << Num(p.laser_point.z()) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<ReferencePair> ReadReferencesCsv(const std::string& path) {
  const Table t = ReadTable(path, kRefHeader);
  std::vector<ReferencePair> refs;
  for (const auto& r : t.rows) {
    ReferencePair p;
    p.scan = ToInt(r[0], path);
    p.track = ToInt(r[1], path);
    if (r[2] == "indoor") {
      p.region = Region::kIndoor;
    } else if (r[2] == "outdoor") {
      p.region = Region::kOutdoor;
    } else {
      throw IoError(path + ": unknown region '" + r[2] + "'");
    }
    p.sfm_point = Point3(ToDouble(r[3], path), ToDouble(r[4], path), ToDouble(r[5], path));
    p.laser_point = Point3(ToDouble(r[6], path), ToDouble(r[7], path), ToDouble(r[8], path));
    refs.push_back(p);
  }
  return refs;
}

void WriteStationsJson(const std::string& path, const std::vector<PotentialLocation>& s) {
  Json arr = Json::array();
  for (const auto& l : s) arr.push_back({{"index", l.index}, {"position", PointToJson(l.position)}});
  WriteJsonFile(path, Json{{"stations", arr}});
}

std::vector<PotentialLocation> ReadStationsJson(const std::string& path) {
  const Json j = ReadJsonFile(path);
  std::vector<PotentialLocation> out;
  try {
    for (const Json& e : j.at("stations")) {
      out.push_back({e.at("index").get<int>(), PointFromJson(e.at("position"))});
    }
  } catch (const Json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  return out;
}

}  // namespace scanmerge
