#include "scanmerge/ply_io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

#include "scanmerge/errors.h"

namespace scanmerge {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary PLY support assumes a little-endian host");

enum class ScalarType { kInt8, kUint8, kInt16, kUint16, kInt32, kUint32, kFloat32, kFloat64 };

ScalarType ParseType(const std::string& name) {
  static const std::map<std::string, ScalarType> kTypes = {
      {"char", ScalarType::kInt8},     {"int8", ScalarType::kInt8},
      {"uchar", ScalarType::kUint8},   {"uint8", ScalarType::kUint8},
      {"short", ScalarType::kInt16},   {"int16", ScalarType::kInt16},
      {"ushort", ScalarType::kUint16}, {"uint16", ScalarType::kUint16},
      {"int", ScalarType::kInt32},     {"int32", ScalarType::kInt32},
      {"uint", ScalarType::kUint32},   {"uint32", ScalarType::kUint32},
      {"float", ScalarType::kFloat32}, {"float32", ScalarType::kFloat32},
      {"double", ScalarType::kFloat64}, {"float64", ScalarType::kFloat64}};
  const auto it = kTypes.find(name);
  if (it == kTypes.end()) throw IoError("unsupported PLY type '" + name + "'");
  return it->second;
}

size_t TypeSize(ScalarType t) {
  switch (t) {
    case ScalarType::kInt8:
    case ScalarType::kUint8:
      return 1;
    case ScalarType::kInt16:
    case ScalarType::kUint16:
      return 2;
    case ScalarType::kInt32:
    case ScalarType::kUint32:
    case ScalarType::kFloat32:
      return 4;
    case ScalarType::kFloat64:
      return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  ScalarType type = ScalarType::kFloat32;
  bool is_list = false;
  ScalarType count_type = ScalarType::kUint8;
};

struct Element {
  std::string name;
  size_t count = 0;
  std::vector<Property> properties;
  // Scalar properties by name, one value per element instance.
  std::map<std::string, std::vector<double>> scalars;
  // List properties by name.
  std::map<std::string, std::vector<std::vector<double>>> lists;
};

template <typename T>
double ReadAs(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return static_cast<double>(v);
}

double ReadBinary(std::istream& in, ScalarType t) {
  switch (t) {
    case ScalarType::kInt8:
      return ReadAs<std::int8_t>(in);
    case ScalarType::kUint8:
      return ReadAs<std::uint8_t>(in);
    case ScalarType::kInt16:
      return ReadAs<std::int16_t>(in);
    case ScalarType::kUint16:
      return ReadAs<std::uint16_t>(in);
    case ScalarType::kInt32:
      return ReadAs<std::int32_t>(in);
    case ScalarType::kUint32:
      return ReadAs<std::uint32_t>(in);
    case ScalarType::kFloat32:
      return ReadAs<float>(in);
    case ScalarType::kFloat64:
      return ReadAs<double>(in);
  }
  return 0.0;
}

double ReadAscii(std::istream& in) {
  double v;
  if (!(in >> v)) throw IoError("truncated ASCII PLY body");
  return v;
}

std::vector<Element> ReadPly(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open PLY file '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) throw IoError("'" + path + "' is not a PLY file");
  bool ascii = false;
  std::vector<Element> elements;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") {
        ascii = true;
      } else if (fmt != "binary_little_endian") {
        throw IoError("unsupported PLY format '" + fmt + "'");
      }
    } else if (tok == "element") {
      Element e;
      ls >> e.name >> e.count;
      elements.push_back(std::move(e));
    } else if (tok == "property") {
      if (elements.empty()) throw IoError("PLY property before element");
      Property p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type >> p.name;
        p.is_list = true;
        p.count_type = ParseType(count_type);
        p.type = ParseType(item_type);
      } else {
        p.type = ParseType(type);
        ls >> p.name;
      }
      elements.back().properties.push_back(p);
    } else if (tok == "end_header") {
      break;
    }
  }
  for (Element& e : elements) {
    for (const Property& p : e.properties) {
      if (p.is_list) {
        e.lists[p.name].reserve(e.count);
      } else {
        e.scalars[p.name].reserve(e.count);
      }
    }
    for (size_t i = 0; i < e.count; ++i) {
      for (const Property& p : e.properties) {
        if (p.is_list) {
          const size_t n = static_cast<size_t>(ascii ? ReadAscii(in)
                                                     : ReadBinary(in, p.count_type));
          std::vector<double> items(n);
          for (size_t k = 0; k < n; ++k) {
            items[k] = ascii ? ReadAscii(in) : ReadBinary(in, p.type);
          }
          e.lists[p.name].push_back(std::move(items));
        } else {
          e.scalars[p.name].push_back(ascii ? ReadAscii(in) : ReadBinary(in, p.type));
        }
      }
      if (!in) throw IoError("truncated PLY body in '" + path + "'");
    }
  }
  return elements;
}

const Element* FindElement(const std::vector<Element>& elements,
                           const std::string& name) {
  for (const Element& e : elements) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::vector<Point3> ReadVertices(const Element& v) {
  for (const char* axis : {"x", "y", "z"}) {
    if (!v.scalars.count(axis)) throw IoError("PLY vertex lacks coordinate");
  }
  const auto& xs = v.scalars.at("x");
  const auto& ys = v.scalars.at("y");
  const auto& zs = v.scalars.at("z");
  std::vector<Point3> pts(v.count);
  for (size_t i = 0; i < v.count; ++i) pts[i] = Point3(xs[i], ys[i], zs[i]);
  return pts;
}

class PlyWriter {
 public:
  PlyWriter(const std::string& path, PlyFormat format)
      : out_(path, std::ios::binary), ascii_(format == PlyFormat::kAscii) {
    if (!out_) throw IoError("cannot write PLY file '" + path + "'");
    out_ << "ply\nformat " << (ascii_ ? "ascii" : "binary_little_endian")
         << " 1.0\n";
    if (ascii_) out_ << std::setprecision(17);
  }

  std::ostream& header() { return out_; }

  template <typename T>
  void Put(T value, bool last = false) {
    if (ascii_) {
      if constexpr (sizeof(T) == 1) {
        out_ << static_cast<int>(value);
      } else {
        out_ << value;
      }
      out_ << (last ? '\n' : ' ');
    } else {
      out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
    }
  }

  void Finish() {
    out_.flush();
    if (!out_) throw IoError("failed writing PLY file");
  }

 private:
  std::ofstream out_;
  bool ascii_;
};

}  // namespace

TriMesh ReadPlyMesh(const std::string& path) {
  const auto elements = ReadPly(path);
  const Element* v = FindElement(elements, "vertex");
  const Element* f = FindElement(elements, "face");
  if (!v || !f) throw IoError("PLY mesh needs vertex and face elements");
  const auto it = f->lists.count("vertex_indices") ? f->lists.find("vertex_indices")
                                                   : f->lists.find("vertex_index");
  if (it == f->lists.end()) throw IoError("PLY face lacks vertex_indices");
  std::vector<Facet> facets;
  facets.reserve(f->count);
  for (const auto& idx : it->second) {
    if (idx.size() != 3) throw IoError("PLY mesh faces must be triangles");
    facets.push_back({static_cast<int>(idx[0]), static_cast<int>(idx[1]),
                      static_cast<int>(idx[2])});
  }
  return TriMesh(ReadVertices(*v), std::move(facets));
}

void WritePlyMesh(const std::string& path, const TriMesh& mesh, PlyFormat format) {
  PlyWriter w(path, format);
  w.header() << "element vertex " << mesh.vertices().size() << "\n"
             << "property double x\nproperty double y\nproperty double z\n"
             << "element face " << mesh.NumFacets() << "\n"
             << "property list uchar int vertex_indices\nend_header\n";
  for (const Point3& p : mesh.vertices()) {
    w.Put(p.x());
    w.Put(p.y());
    w.Put(p.z(), true);
  }
  for (const Facet& f : mesh.facets()) {
    w.Put(std::uint8_t{3});
    w.Put(std::int32_t{f[0]});
    w.Put(std::int32_t{f[1]});
    w.Put(std::int32_t{f[2]}, true);
  }
  w.Finish();
}

ColoredPointCloud ReadPlyCloud(const std::string& path) {
  const auto elements = ReadPly(path);
  const Element* v = FindElement(elements, "vertex");
  if (!v) throw IoError("PLY cloud needs a vertex element");
  ColoredPointCloud cloud;
  cloud.points = ReadVertices(*v);
  cloud.colors.assign(v->count, Rgb{128, 128, 128});
  if (v->scalars.count("red") && v->scalars.count("green") && v->scalars.count("blue")) {
    const auto& r = v->scalars.at("red");
    const auto& g = v->scalars.at("green");
    const auto& b = v->scalars.at("blue");
    for (size_t i = 0; i < v->count; ++i) {
      cloud.colors[i] = {static_cast<std::uint8_t>(r[i]), static_cast<std::uint8_t>(g[i]),
                         static_cast<std::uint8_t>(b[i])};
    }
  }
  if (v->scalars.count("distance")) cloud.origin_distance = v->scalars.at("distance");
  cloud.Validate();
  return cloud;
}

void WritePlyCloud(const std::string& path, const ColoredPointCloud& cloud,
                   PlyFormat format) {
  cloud.Validate();
  PlyWriter w(path, format);
  const bool dist = cloud.origin_distance.has_value();
  w.header() << "element vertex " << cloud.size() << "\n"
             << "property double x\nproperty double y\nproperty double z\n"
             << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (dist) w.header() << "property double distance\n";
  w.header() << "end_header\n";
  for (size_t i = 0; i < cloud.size(); ++i) {
    w.Put(cloud.points[i].x());
    w.Put(cloud.points[i].y());
    w.Put(cloud.points[i].z());
    w.Put(cloud.colors[i][0]);
    w.Put(cloud.colors[i][1]);
    w.Put(cloud.colors[i][2], !dist);
    if (dist) w.Put((*cloud.origin_distance)[i], true);
  }
  w.Finish();
}

}  // namespace scanmerge
