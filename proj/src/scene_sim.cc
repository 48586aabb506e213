#include "scanmerge/scene_sim.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <string>

#include <Eigen/Dense>

#include "scanmerge/errors.h"
#include "scanmerge/spatial_index.h"

namespace scanmerge {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kMinGrazingCos = 0.15;
constexpr double kMinTriangulationAngleDeg = 2.0;
constexpr double kMinCameraDepth = 0.3;

std::uint64_t Mix(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RigidPose LookAlong(const Point3& center, const Vector3& forward) {
  const Vector3 f = forward.normalized();
  Vector3 right = f.cross(Vector3::UnitZ());
  if (right.norm() < 1e-9) right = Vector3::UnitX();
  right.normalize();
  const Vector3 down = f.cross(right);
  Matrix3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = f.transpose();
  RigidPose pose;
  pose.rotation = Rotation3::Orthonormalized(r);
  pose.translation = -(pose.rotation * center);
  return pose;
}

Rgb RegionColor(int region, int facet) {
  static constexpr Rgb kPalette[] = {{196, 164, 132}, {120, 144, 156}, {170, 90, 70},
                                     {90, 130, 90},   {200, 200, 180}, {110, 100, 150},
                                     {180, 140, 60},  {80, 80, 80}};
  Rgb c = kPalette[region % std::size(kPalette)];
  const int shade = static_cast<int>(Mix(facet, 7) % 31) - 15;
  for (auto& ch : c) ch = static_cast<std::uint8_t>(std::clamp(ch + shade, 0, 255));
  return c;
}

class MeshBuilder {
 public:
  MeshBuilder(const SceneSpec& spec, Rng& rng) : spec_(spec), rng_(rng) {}

  // Grid-meshed rectangle o + a*u + b*v, a, b in [0, 1].
  void AddRect(const std::string& region, const Point3& o, const Vector3& u,
               const Vector3& v) {
    const double edge = spec_.base_edge / spec_.DensityFor(region);
    const int nu = std::max(1, static_cast<int>(std::ceil(u.norm() / edge - 1e-9)));
    const int nv = std::max(1, static_cast<int>(std::ceil(v.norm() / edge - 1e-9)));
    const int region_id = RegionId(region);
    std::uniform_real_distribution<double> jitter(-spec_.vertex_jitter,
                                                  spec_.vertex_jitter);
    const int base = static_cast<int>(vertices_.size());
    for (int j = 0; j <= nv; ++j) {
      for (int i = 0; i <= nu; ++i) {
        double a = static_cast<double>(i) / nu;
        double b = static_cast<double>(j) / nv;
        if (i > 0 && i < nu) a += jitter(rng_) / nu;
        if (j > 0 && j < nv) b += jitter(rng_) / nv;
        vertices_.push_back(o + a * u + b * v);
      }
    }
    const auto id = [&](int i, int j) { return base + j * (nu + 1) + i; };
    for (int j = 0; j < nv; ++j) {
      for (int i = 0; i < nu; ++i) {
        facets_.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
        facets_.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        facet_region_.push_back(region_id);
        facet_region_.push_back(region_id);
      }
    }
  }

  void Finish(GroundTruthBundle& out) {
    out.mesh = TriMesh(std::move(vertices_), std::move(facets_));
    out.facet_region = std::move(facet_region_);
    out.region_names = std::move(names_);
    out.facet_color.resize(out.facet_region.size());
    for (size_t f = 0; f < out.facet_region.size(); ++f) {
      out.facet_color[f] = RegionColor(out.facet_region[f], static_cast<int>(f));
    }
  }

 private:
  int RegionId(const std::string& name) {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it != names_.end()) return static_cast<int>(it - names_.begin());
    names_.push_back(name);
    return static_cast<int>(names_.size()) - 1;
  }

  const SceneSpec& spec_;
  Rng& rng_;
  std::vector<Point3> vertices_;
  std::vector<Facet> facets_;
  std::vector<int> facet_region_;
  std::vector<std::string> names_;
};

bool BayRoofed(const SceneSpec& spec, int bay) {
  return spec.ceiling || std::find(spec.roofed_bays.begin(), spec.roofed_bays.end(),
                                   bay) != spec.roofed_bays.end();
}

bool AllRoofed(const SceneSpec& spec) {
  for (int b = 0; b < spec.bays; ++b) {
    if (!BayRoofed(spec, b)) return false;
  }
  return true;
}

void BuildMesh(const SceneSpec& spec, Rng& rng, GroundTruthBundle& out) {
  MeshBuilder mb(spec, rng);
  const double lx = spec.size.x(), ly = spec.size.y(), lz = spec.size.z();
  const double w = lx / spec.bays;
  for (int b = 0; b < spec.bays; ++b) {
    const std::string s = std::to_string(b);
    const double x0 = b * w;
    mb.AddRect("floor_" + s, Point3(x0, 0, 0), Vector3(w, 0, 0), Vector3(0, ly, 0));
    if (BayRoofed(spec, b)) {
      mb.AddRect("ceiling_" + s, Point3(x0, 0, lz), Vector3(w, 0, 0),
                 Vector3(0, ly, 0));
    }
    mb.AddRect("south_" + s, Point3(x0, 0, 0), Vector3(w, 0, 0), Vector3(0, 0, lz));
    mb.AddRect("north_" + s, Point3(x0, ly, 0), Vector3(w, 0, 0), Vector3(0, 0, lz));
  }
  mb.AddRect("west", Point3(0, 0, 0), Vector3(0, ly, 0), Vector3(0, 0, lz));
  mb.AddRect("east", Point3(lx, 0, 0), Vector3(0, ly, 0), Vector3(0, 0, lz));
  for (int k = 1; k < spec.bays; ++k) {
    const std::string name = "partition_" + std::to_string(k);
    const double x = k * w;
    if (spec.doorway_width <= 0.0) {
      mb.AddRect(name, Point3(x, 0, 0), Vector3(0, ly, 0), Vector3(0, 0, lz));
      continue;
    }
    const double y0 = 0.5 * (ly - spec.doorway_width);
    const double y1 = y0 + spec.doorway_width;
    mb.AddRect(name, Point3(x, 0, 0), Vector3(0, y0, 0), Vector3(0, 0, lz));
    mb.AddRect(name, Point3(x, y1, 0), Vector3(0, ly - y1, 0), Vector3(0, 0, lz));
    if (spec.doorway_height < lz) {
      mb.AddRect(name, Point3(x, y0, spec.doorway_height),
                 Vector3(0, spec.doorway_width, 0),
                 Vector3(0, 0, lz - spec.doorway_height));
    }
  }
  mb.Finish(out);
}

std::vector<Point3> GridStations(const SceneSpec& spec) {
  std::vector<Point3> out;
  const double w = spec.size.x() / spec.bays;
  const auto axis = [&](double len) {
    const int n = std::max(1, static_cast<int>(std::floor(len / spec.station_spacing)));
    std::vector<double> c;
    const double start = 0.5 * (len - (n - 1) * spec.station_spacing);
    for (int i = 0; i < n; ++i) c.push_back(start + i * spec.station_spacing);
    return c;
  };
  const auto xs = axis(w);
  const auto ys = axis(spec.size.y());
  for (int b = 0; b < spec.bays; ++b) {
    for (double y : ys) {
      for (double x : xs) out.emplace_back(b * w + x, y, spec.station_height);
    }
  }
  return out;
}

Vector3 FacetNormal(const TriMesh& mesh, int f) {
  return (mesh.Corner(f, 1) - mesh.Corner(f, 0))
      .cross(mesh.Corner(f, 2) - mesh.Corner(f, 0))
      .normalized();
}

// Unoccluded, non-grazing line of sight from origin to a point on facet f.
bool LineOfSight(const MeshBvh& bvh, const Point3& origin, const Point3& p, int f) {
  const Vector3 d = p - origin;
  const double dist = d.norm();
  if (dist < 1e-6) return false;
  const Vector3 dir = d / dist;
  if (std::abs(FacetNormal(bvh.mesh(), f).dot(dir)) < kMinGrazingCos) return false;
  const auto hit = bvh.Intersect(origin, dir);
  return hit && hit->distance >= dist * (1.0 - 1e-6) - 1e-9;
}

bool SeenByCamera(const MeshBvh& bvh, const CameraView& cam, const Point3& p, int f) {
  const auto proj = ProjectPoint(cam, p);
  if (!proj || proj->depth < kMinCameraDepth) return false;
  if (!PixelInImage(cam.intrinsics, proj->pixel)) return false;
  return LineOfSight(bvh, cam.Center(), p, f);
}

struct SurfaceSampler {
  explicit SurfaceSampler(const TriMesh& mesh)
      : mesh(mesh), pick(mesh.areas().begin(), mesh.areas().end()) {}
  std::pair<int, Point3> operator()(Rng& rng) {
    const int f = pick(rng);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double r1 = std::sqrt(u01(rng)), r2 = u01(rng);
    const Point3 p = (1 - r1) * mesh.Corner(f, 0) + r1 * (1 - r2) * mesh.Corner(f, 1) +
                     r1 * r2 * mesh.Corner(f, 2);
    return {f, p};
  }
  const TriMesh& mesh;
  std::discrete_distribution<int> pick;
};

Point3 Triangulate(const std::vector<CameraView>& cams,
                   const std::vector<const Observation2D*>& obs) {
  Eigen::MatrixXd a(2 * obs.size(), 3);
  Eigen::VectorXd b(2 * obs.size());
  for (size_t i = 0; i < obs.size(); ++i) {
    const CameraView& c = cams[obs[i]->camera];
    const auto& k = c.intrinsics;
    const Matrix3& r = c.pose.rotation.matrix();
    const Vector3& t = c.pose.translation;
    const double x = (obs[i]->pixel.x() - k.cx) / k.fx;
    const double y = (obs[i]->pixel.y() - k.cy) / k.fy;
    // x * (r2 X + t2) = r0 X + t0, likewise for y
    a.row(2 * i) = x * r.row(2) - r.row(0);
    b(2 * i) = t.x() - x * t.z();
    a.row(2 * i + 1) = y * r.row(2) - r.row(1);
    b(2 * i + 1) = t.y() - y * t.z();
  }
  Point3 p = a.colPivHouseholderQr().solve(b);
  for (int it = 0; it < 10; ++it) {
    Matrix3 jtj = Matrix3::Zero();
    Vector3 jtr = Vector3::Zero();
    for (const Observation2D* o : obs) {
      const CameraView& c = cams[o->camera];
      const Point3 pc = c.pose.Apply(p);
      if (pc.z() <= 1e-9) continue;
      const auto& k = c.intrinsics;
      Eigen::Matrix<double, 2, 3> jp;
      jp << k.fx / pc.z(), 0, -k.fx * pc.x() / (pc.z() * pc.z()), 0, k.fy / pc.z(),
          -k.fy * pc.y() / (pc.z() * pc.z());
      const Eigen::Matrix<double, 2, 3> j = jp * c.pose.rotation.matrix();
      const Vector2 r(k.fx * pc.x() / pc.z() + k.cx - o->pixel.x(),
                      k.fy * pc.y() / pc.z() + k.cy - o->pixel.y());
      jtj += j.transpose() * j;
      jtr += j.transpose() * r;
    }
    const Vector3 step = jtj.ldlt().solve(-jtr);
    if (!step.allFinite()) break;
    p += step;
    if (step.norm() < 1e-12) break;
  }
  return p;
}

Vector3 Gaussian3(Rng& rng, double sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double x = n(rng), y = n(rng), z = n(rng);
  return sigma * Vector3(x, y, z);
}

}  // namespace

SceneSpec::SceneSpec() {
  rig = {{-20, 0}, {-20, 90}, {-20, 180}, {-20, 270},
         {20, 45}, {20, 135}, {20, 225}, {20, 315}};
  roofed_bays = {1};
  density = {{"north_0", 0.5}, {"partition", 1.5}};
}

std::vector<std::pair<double, double>> SceneSpec::FullRig() {
  std::vector<std::pair<double, double>> r;
  for (int p = -40; p <= 40; p += 20) {
    for (int y = 0; y <= 320; y += 40) r.emplace_back(p, y);
  }
  return r;
}

double SceneSpec::DensityFor(const std::string& region) const {
  if (auto it = density.find(region); it != density.end()) return it->second;
  const std::string base = region.substr(0, region.find('_'));
  if (auto it = density.find(base); it != density.end()) return it->second;
  if (auto it = density.find("*"); it != density.end()) return it->second;
  return 1.0;
}

void SceneSpec::Validate() const {
  if (!(size.minCoeff() > 0.0) || !size.allFinite()) {
    throw InvalidSpec("scene size must be positive");
  }
  if (bays < 1) throw InvalidSpec("bays must be at least 1");
  for (int b : roofed_bays) {
    if (b < 0 || b >= bays) throw InvalidSpec("roofed bay out of range");
  }
  // Doorways only exist in partition walls.
  if (bays > 1 && (doorway_width < 0.0 || doorway_width >= size.y())) {
    throw InvalidSpec("doorway width must be in [0, size.y)");
  }
  if (bays > 1 && doorway_width > 0.0 && !(doorway_height > 0.0 && doorway_height <= size.z())) {
    throw InvalidSpec("doorway height must be in (0, size.z]");
  }
  if (!(base_edge > 0.0)) throw InvalidSpec("base_edge must be positive");
  if (!(vertex_jitter >= 0.0 && vertex_jitter < 0.3)) {
    throw InvalidSpec("vertex_jitter must be in [0, 0.3)");
  }
  for (const auto& [name, m] : density) {
    if (!(m > 0.0)) throw InvalidSpec("density multiplier for " + name + " must be positive");
  }
  if (!(station_spacing > 0.0)) throw InvalidSpec("station_spacing must be positive");
  if (!(station_height > 0.0 && station_height < size.z())) {
    throw InvalidSpec("station height must lie inside the scene");
  }
  for (const Point3& s : stations) {
    if (!(s.x() > 0 && s.y() > 0 && s.z() > 0 && s.x() < size.x() &&
          s.y() < size.y() && s.z() < size.z())) {
      throw InvalidSpec("station outside the scene");
    }
  }
  if (rig.empty()) throw InvalidSpec("camera rig is empty");
  try {
    ground_intrinsics.Validate();
    aerial_intrinsics.Validate();
  } catch (const InvalidArgument& e) {
    throw InvalidSpec(std::string("intrinsics: ") + e.what());
  }
  if (aerial_cameras < 0) throw InvalidSpec("aerial_cameras must be nonnegative");
  if (!(aerial_height > size.z())) throw InvalidSpec("aerial cameras must be above the roof");
  if (num_points < 1) throw InvalidSpec("num_points must be positive");
  if (!(laser_scale > 0.0)) throw InvalidSpec("laser_scale must be positive");
  const NoiseModel& n = noise;
  if (n.pixel_sigma < 0 || n.range_sigma < 0 || n.match_sigma < 0 || n.anchor_sigma < 0 ||
      n.camera_rotation_sigma_deg < 0 || n.camera_translation_sigma < 0 ||
      n.scan_yaw_sigma_deg < 0) {
    throw InvalidSpec("noise levels must be nonnegative");
  }
  if (!(n.max_feature_scale >= 1.0)) throw InvalidSpec("max_feature_scale must be >= 1");
  if (!(n.outlier_fraction >= 0.0 && n.outlier_fraction < 1.0)) {
    throw InvalidSpec("outlier_fraction must be in [0, 1)");
  }
}

namespace {

Json IntrinsicsToJson(const CameraIntrinsics& k) {
  return Json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx},
              {"cy", k.cy}, {"w", k.width}, {"h", k.height}};
}

CameraIntrinsics IntrinsicsFromJson(const Json& j) {
  return CameraIntrinsics{j.at("fx").get<double>(), j.at("fy").get<double>(),
                          j.at("cx").get<double>(), j.at("cy").get<double>(),
                          j.at("w").get<int>(),     j.at("h").get<int>()};
}

template <typename T>
void Read(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

Json SceneSpecToJson(const SceneSpec& s) {
  Json stations = Json::array();
  for (const Point3& p : s.stations) stations.push_back(PointToJson(p));
  Json rig = Json::array();
  for (const auto& [p, y] : s.rig) rig.push_back(Json::array({p, y}));
  const NoiseModel& n = s.noise;
  return Json{
      {"size", PointToJson(s.size)},
      {"bays", s.bays},
      {"doorway_width", s.doorway_width},
      {"doorway_height", s.doorway_height},
      {"ceiling", s.ceiling},
      {"roofed_bays", s.roofed_bays},
      {"base_edge", s.base_edge},
      {"density", s.density},
      {"vertex_jitter", s.vertex_jitter},
      {"station_spacing", s.station_spacing},
      {"station_height", s.station_height},
      {"stations", stations},
      {"rig", rig},
      {"ground_intrinsics", IntrinsicsToJson(s.ground_intrinsics)},
      {"aerial_cameras", s.aerial_cameras},
      {"aerial_height", s.aerial_height},
      {"aerial_radius", s.aerial_radius},
      {"aerial_intrinsics", IntrinsicsToJson(s.aerial_intrinsics)},
      {"num_points", s.num_points},
      {"laser_scale", s.laser_scale},
      {"seed", s.seed},
      {"noise",
       {{"pixel_sigma", n.pixel_sigma},
        {"max_feature_scale", n.max_feature_scale},
        {"range_sigma", n.range_sigma},
        {"match_sigma", n.match_sigma},
        {"anchor_sigma", n.anchor_sigma},
        {"outlier_fraction", n.outlier_fraction},
        {"camera_rotation_sigma_deg", n.camera_rotation_sigma_deg},
        {"camera_translation_sigma", n.camera_translation_sigma},
        {"scan_yaw_sigma_deg", n.scan_yaw_sigma_deg}}}};
}

SceneSpec SceneSpecFromJson(const Json& j) {
  SceneSpec s;
  try {
    if (!j.is_object()) throw InvalidSpec("scene spec must be a JSON object");
    static const std::set<std::string> kKeys = {
        "size", "bays", "doorway_width", "doorway_height", "ceiling", "roofed_bays",
        "base_edge", "density", "vertex_jitter", "station_spacing", "station_height",
        "stations", "rig", "ground_intrinsics", "aerial_cameras", "aerial_height",
        "aerial_radius", "aerial_intrinsics", "num_points", "laser_scale", "seed",
        "noise"};
    for (const auto& [key, value] : j.items()) {
      if (!kKeys.count(key)) throw InvalidSpec("unknown scene key '" + key + "'");
    }
    if (j.contains("size")) s.size = PointFromJson(j.at("size"));
    Read(j, "bays", s.bays);
    Read(j, "doorway_width", s.doorway_width);
    Read(j, "doorway_height", s.doorway_height);
    Read(j, "ceiling", s.ceiling);
    Read(j, "roofed_bays", s.roofed_bays);
    Read(j, "base_edge", s.base_edge);
    Read(j, "density", s.density);
    Read(j, "vertex_jitter", s.vertex_jitter);
    Read(j, "station_spacing", s.station_spacing);
    Read(j, "station_height", s.station_height);
    if (j.contains("stations")) {
      s.stations.clear();
      for (const Json& p : j.at("stations")) s.stations.push_back(PointFromJson(p));
    }
    if (j.contains("rig")) {
      const Json& r = j.at("rig");
      s.rig.clear();
      if (r.is_string()) {
        if (r.get<std::string>() != "full") throw InvalidSpec("rig must be 'full' or a list");
        s.rig = SceneSpec::FullRig();
      } else {
        for (const Json& e : r) s.rig.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());
      }
    }
    if (j.contains("ground_intrinsics")) {
      s.ground_intrinsics = IntrinsicsFromJson(j.at("ground_intrinsics"));
    }
    Read(j, "aerial_cameras", s.aerial_cameras);
    Read(j, "aerial_height", s.aerial_height);
    Read(j, "aerial_radius", s.aerial_radius);
    if (j.contains("aerial_intrinsics")) {
      s.aerial_intrinsics = IntrinsicsFromJson(j.at("aerial_intrinsics"));
    }
    Read(j, "num_points", s.num_points);
    Read(j, "laser_scale", s.laser_scale);
    Read(j, "seed", s.seed);
    if (j.contains("noise")) {
      const Json& n = j.at("noise");
      NoiseModel& m = s.noise;
      Read(n, "pixel_sigma", m.pixel_sigma);
      Read(n, "max_feature_scale", m.max_feature_scale);
      Read(n, "range_sigma", m.range_sigma);
      Read(n, "match_sigma", m.match_sigma);
      Read(n, "anchor_sigma", m.anchor_sigma);
      Read(n, "outlier_fraction", m.outlier_fraction);
      Read(n, "camera_rotation_sigma_deg", m.camera_rotation_sigma_deg);
      Read(n, "camera_translation_sigma", m.camera_translation_sigma);
      Read(n, "scan_yaw_sigma_deg", m.scan_yaw_sigma_deg);
    }
  } catch (const Json::exception& e) {
    throw InvalidSpec(std::string("malformed scene spec: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidSpec(std::string("malformed scene spec: ") + e.what());
  }
  s.Validate();
  return s;
}

bool GroundTruthBundle::HasCeilingAt(const Point3& p) const {
  const double w = spec.size.x() / spec.bays;
  const int bay = std::clamp(static_cast<int>(std::floor(p.x() / w)), 0, spec.bays - 1);
  return BayRoofed(spec, bay);
}

GroundTruthBundle GenerateScene(const SceneSpec& spec) {
  spec.Validate();
  GroundTruthBundle out;
  out.spec = spec;
  Rng rng(Mix(spec.seed, 1));
  BuildMesh(spec, rng, out);
  const MeshBvh bvh(out.mesh);

  const std::vector<Point3> stations =
      spec.stations.empty() ? GridStations(spec) : spec.stations;
  std::normal_distribution<double> yaw_noise(0.0, 1.0);
  const double yaw_sigma = spec.noise.scan_yaw_sigma_deg * kDeg;
  for (size_t i = 0; i < stations.size(); ++i) {
    out.stations.push_back({static_cast<int>(i), stations[i]});
    const Rotation3 heading =
        Rotation3::FromAngleAxis(yaw_sigma * yaw_noise(rng), Vector3::UnitZ());
    out.scan_truth.emplace_back(spec.laser_scale, heading, stations[i]);
    out.scan_prior.emplace_back(1.0, Rotation3::Identity(), stations[i]);
  }

  for (size_t i = 0; i < stations.size(); ++i) {
    for (const auto& [pitch, yaw] : spec.rig) {
      const double p = pitch * kDeg, y = yaw * kDeg;
      const Vector3 f(std::cos(p) * std::cos(y), std::cos(p) * std::sin(y), std::sin(p));
      out.cameras.push_back(
          {spec.ground_intrinsics, LookAlong(stations[i], f), CameraLabel::kCapturedGround});
      out.camera_station.push_back(static_cast<int>(i));
    }
  }
  if (!AllRoofed(spec)) {
    const Point3 target(0.5 * spec.size.x(), 0.5 * spec.size.y(), 0.0);
    for (int k = 0; k < spec.aerial_cameras; ++k) {
      const double a = 2.0 * std::numbers::pi * k / spec.aerial_cameras;
      const Point3 c = target + Vector3(spec.aerial_radius * std::cos(a),
                                        spec.aerial_radius * std::sin(a), spec.aerial_height);
      out.cameras.push_back(
          {spec.aerial_intrinsics, LookAlong(c, target - c), CameraLabel::kCapturedAerial});
      out.camera_station.push_back(-1);
    }
  }

  // Track points: surface samples seen from two viewpoints with a usable
  // triangulation angle.
  out.visible_points.assign(out.cameras.size(), {});
  SurfaceSampler sample(out.mesh);
  const double min_angle_cos = std::cos(kMinTriangulationAngleDeg * kDeg);
  const int max_attempts = 40 * spec.num_points;
  std::vector<int> seen;
  for (int attempt = 0;
       attempt < max_attempts && static_cast<int>(out.points.size()) < spec.num_points;
       ++attempt) {
    const auto [f, p] = sample(rng);
    seen.clear();
    for (size_t c = 0; c < out.cameras.size(); ++c) {
      if (SeenByCamera(bvh, out.cameras[c], p, f)) seen.push_back(static_cast<int>(c));
    }
    bool wide = false;
    for (size_t a = 0; a < seen.size() && !wide; ++a) {
      const Vector3 da = (p - out.cameras[seen[a]].Center()).normalized();
      for (size_t b = a + 1; b < seen.size(); ++b) {
        const Vector3 db = (p - out.cameras[seen[b]].Center()).normalized();
        if (da.dot(db) < min_angle_cos) {
          wide = true;
          break;
        }
      }
    }
    if (!wide) continue;
    const int id = static_cast<int>(out.points.size());
    out.points.push_back(p);
    for (int c : seen) out.visible_points[c].push_back(id);
  }
  if (out.points.empty()) throw InvalidSpec("no surface point is seen by two viewpoints");
  return out;
}

ColoredPointCloud SimulateScan(const GroundTruthBundle& bundle,
                               const Sim3Transform& scan_to_world,
                               double angular_step_deg, double range_sigma, Rng& rng) {
  if (!(angular_step_deg > 0.0 && angular_step_deg <= 90.0)) {
    throw InvalidArgument("angular step must be in (0, 90] degrees");
  }
  const Point3& o = scan_to_world.translation();
  const Vector3& size = bundle.spec.size;
  if (!(o.x() > 0 && o.y() > 0 && o.z() > 0 && o.x() < size.x() && o.y() < size.y() &&
        o.z() < size.z())) {
    throw InvalidArgument("scan origin outside the scene");
  }
  const MeshBvh bvh(bundle.mesh);
  const int n_az = std::max(1, static_cast<int>(std::lround(360.0 / angular_step_deg)));
  const int n_el = std::max(1, static_cast<int>(std::lround(180.0 / angular_step_deg)));
  std::normal_distribution<double> noise(0.0, 1.0);
  ColoredPointCloud cloud;
  std::vector<double> ranges;
  for (int e = 0; e < n_el; ++e) {
    const double el = -0.5 * std::numbers::pi + (e + 0.5) * std::numbers::pi / n_el;
    for (int a = 0; a < n_az; ++a) {
      const double az = 2.0 * std::numbers::pi * a / n_az;
      const Vector3 d_laser(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                            std::sin(el));
      const Vector3 d_world = scan_to_world.rotation() * d_laser;
      const auto hit = bvh.Intersect(o, d_world);
      if (!hit) continue;
      double range = hit->distance / scan_to_world.scale();
      if (range_sigma > 0.0) range = std::max(0.0, range + range_sigma * noise(rng));
      cloud.points.push_back(range * d_laser);
      cloud.colors.push_back(bundle.facet_color[hit->facet]);
      ranges.push_back(range);
    }
  }
  cloud.origin_distance = std::move(ranges);
  return cloud;
}

ColoredPointCloud SimulateScan(const GroundTruthBundle& bundle, int station,
                               double angular_step_deg) {
  if (station < 0 || station >= static_cast<int>(bundle.scan_truth.size())) {
    throw InvalidArgument("station index out of range");
  }
  Rng rng(Mix(bundle.spec.seed, 1000 + station));
  return SimulateScan(bundle, bundle.scan_truth[station], angular_step_deg,
                      bundle.spec.noise.range_sigma, rng);
}

std::vector<Point3> SampleMeshSurface(const TriMesh& mesh, double spacing, Rng& rng) {
  if (!(spacing > 0.0)) throw InvalidArgument("sample spacing must be positive");
  if (mesh.NumFacets() == 0) return {};
  const double area = std::accumulate(mesh.areas().begin(), mesh.areas().end(), 0.0);
  const auto n = static_cast<size_t>(std::ceil(area / (spacing * spacing)));
  SurfaceSampler sample(mesh);
  std::vector<Point3> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) out.push_back(sample(rng).second);
  return out;
}

CorrespondenceSet SimulateMatches(const GroundTruthBundle& bundle,
                                  const std::vector<int>& scan_stations,
                                  const NoiseModel& noise, const MatchOptions& options) {
  const int num_stations = static_cast<int>(bundle.stations.size());
  for (int s : scan_stations) {
    if (s < 0 || s >= num_stations) throw InvalidArgument("scan station out of range");
  }
  if (noise.outlier_fraction < 0.0 || noise.outlier_fraction >= 1.0) {
    throw InvalidArgument("outlier fraction must be in [0, 1)");
  }
  CorrespondenceSet out;
  out.scan_stations = scan_stations;
  Rng rng(Mix(bundle.spec.seed, 2));
  const auto& cams = bundle.cameras;

  // Noisy image observations.
  std::uniform_real_distribution<double> feature_scale(1.0, noise.max_feature_scale);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (size_t c = 0; c < cams.size(); ++c) {
    for (int k : bundle.visible_points[c]) {
      const auto proj = ProjectPoint(cams[c], bundle.points[k]);
      Observation2D o;
      o.camera = static_cast<int>(c);
      o.point = k;
      o.feature_scale = feature_scale(rng);
      const double sigma = noise.pixel_sigma * o.feature_scale;
      const double du = unit(rng);
      const double dv = unit(rng);
      o.pixel = proj->pixel + sigma * Vector2(du, dv);
      out.observations.push_back(o);
    }
  }

  // Initial SfM: perturbed cameras (camera 0 exact), triangulated points.
  out.sfm_cameras = cams;
  for (size_t c = 1; c < cams.size(); ++c) {
    const Vector3 w = Gaussian3(rng, noise.camera_rotation_sigma_deg * kDeg);
    const Point3 center = cams[c].Center() + Gaussian3(rng, noise.camera_translation_sigma);
    RigidPose& pose = out.sfm_cameras[c].pose;
    pose.rotation = Rotation3::Exp(w) * pose.rotation;
    pose.translation = -(pose.rotation * center);
  }
  std::vector<std::vector<const Observation2D*>> per_point(bundle.points.size());
  for (const Observation2D& o : out.observations) per_point[o.point].push_back(&o);
  out.sfm_points.resize(bundle.points.size());
  for (size_t k = 0; k < bundle.points.size(); ++k) {
    out.sfm_points[k] = Triangulate(out.sfm_cameras, per_point[k]);
  }

  std::vector<bool> ground_tracked(bundle.points.size(), false);
  for (size_t c = 0; c < cams.size(); ++c) {
    if (bundle.camera_station[c] < 0) continue;
    for (int k : bundle.visible_points[c]) ground_tracked[k] = true;
  }
  std::vector<int> point_facet(bundle.points.size(), -1);
  const MeshBvh bvh(bundle.mesh);
  // Recover each track's facet from a ray from one of its cameras.
  for (size_t c = 0; c < cams.size(); ++c) {
    for (int k : bundle.visible_points[c]) {
      if (point_facet[k] >= 0) continue;
      const Vector3 d = (bundle.points[k] - cams[c].Center()).normalized();
      if (const auto hit = bvh.Intersect(cams[c].Center(), d)) point_facet[k] = hit->facet;
    }
  }
  std::vector<int> aerial_cams;
  for (size_t c = 0; c < cams.size(); ++c) {
    if (bundle.camera_station[c] < 0) aerial_cams.push_back(static_cast<int>(c));
  }

  SurfaceSampler sample(bundle.mesh);
  std::vector<std::pair<int, int>> reference_pool;  // (scan, track)
  for (size_t i = 0; i < scan_stations.size(); ++i) {
    const int scan = static_cast<int>(i);
    const Point3 origin = bundle.stations[scan_stations[i]].position;
    const Sim3Transform to_laser = bundle.scan_truth[scan_stations[i]].Inverse();
    const double laser_noise = noise.match_sigma / bundle.spec.laser_scale;

    std::vector<Correspondence3D> inl;
    std::vector<Point3> inl_true;
    std::vector<int> tracks;
    for (size_t k = 0; k < bundle.points.size(); ++k) {
      if (!ground_tracked[k] || point_facet[k] < 0) continue;
      if ((bundle.points[k] - origin).norm() > options.max_match_range) continue;
      if (LineOfSight(bvh, origin, bundle.points[k], point_facet[k])) {
        tracks.push_back(static_cast<int>(k));
      }
    }
    std::shuffle(tracks.begin(), tracks.end(), rng);
    if (static_cast<int>(tracks.size()) > options.max_ground_per_scan) {
      tracks.resize(options.max_ground_per_scan);
    }
    std::sort(tracks.begin(), tracks.end());
    for (int k : tracks) {
      const Point3 src = to_laser.Apply(bundle.points[k]);
      Correspondence3D c;
      c.source = src + Gaussian3(rng, laser_noise);
      c.target = out.sfm_points[k];
      c.channel = Channel::kGround;
      c.scan = scan;
      c.track = k;
      inl.push_back(c);
      inl_true.push_back(src);
      reference_pool.emplace_back(scan, k);
    }

    // Aerial channel: fixed points triangulated from the aerial images.
    int aerial = 0;
    for (int attempt = 0; attempt < 200 * options.max_aerial_per_scan &&
                          aerial < options.max_aerial_per_scan && !aerial_cams.empty();
         ++attempt) {
      const auto [f, p] = sample(rng);
      if ((p - origin).norm() > options.max_match_range) continue;
      if (!LineOfSight(bvh, origin, p, f)) continue;
      int views = 0;
      for (int c : aerial_cams) views += SeenByCamera(bvh, cams[c], p, f) ? 1 : 0;
      if (views < 2) continue;
      const Point3 src = to_laser.Apply(p);
      Correspondence3D c;
      c.source = src + Gaussian3(rng, laser_noise);
      c.target = p + Gaussian3(rng, noise.anchor_sigma);
      c.channel = Channel::kAerial;
      c.scan = scan;
      c.track = -1;
      inl.push_back(c);
      inl_true.push_back(src);
      ++aerial;
    }

    // Wrong matches: uniform points in the scene box paired with tracks.
    const int n_in = static_cast<int>(inl.size());
    const int n_out = (n_in > 0 && !tracks.empty())
                          ? static_cast<int>(std::lround(noise.outlier_fraction * n_in /
                                                         (1.0 - noise.outlier_fraction)))
                          : 0;
    const double min_gap = std::max(3.0 * noise.match_sigma, 0.1);
    std::vector<Correspondence3D> all = inl;
    std::vector<Point3> all_true = inl_true;
    std::vector<bool> labels(all.size(), false);
    std::uniform_int_distribution<size_t> pick_track(0, tracks.size() - 1);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int o = 0; o < n_out; ++o) {
      const int dst = tracks[pick_track(rng)];
      Point3 p;
      do {
        const double x = u01(rng), y = u01(rng), z = u01(rng);
        p = Point3(x, y, z).cwiseProduct(bundle.spec.size);
      } while ((p - bundle.points[dst]).norm() <= min_gap);
      const Point3 src = to_laser.Apply(p);
      Correspondence3D c;
      c.source = src;
      c.target = out.sfm_points[dst];
      c.channel = Channel::kGround;
      c.scan = scan;
      c.track = dst;
      all.push_back(c);
      all_true.push_back(src);
      labels.push_back(true);
    }
    std::vector<size_t> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t idx : order) {
      out.correspondences.push_back(all[idx]);
      out.true_sources.push_back(all_true[idx]);
      out.outlier.push_back(labels[idx]);
    }
  }

  // Without aerial anchors some ground matches are held fixed so the
  // shared scale stays observable.
  const bool has_anchor =
      std::any_of(out.correspondences.begin(), out.correspondences.end(),
                  [](const Correspondence3D& c) { return c.track < 0; });
  if (!has_anchor) {
    for (size_t i = 0; i < out.correspondences.size(); i += 4) {
      if (!out.outlier[i]) out.correspondences[i].track = -1;
    }
  }

  // Half the reference pairs indoors, half outdoors when both exist.
  std::shuffle(reference_pool.begin(), reference_pool.end(), rng);
  std::vector<std::pair<int, int>> indoor, outdoor;
  for (const auto& e : reference_pool) {
    (bundle.HasCeilingAt(bundle.points[e.second]) ? indoor : outdoor).push_back(e);
  }
  const size_t want = static_cast<size_t>(std::max(0, options.reference_pairs));
  size_t n_in = std::min(indoor.size(), want / 2);
  const size_t n_outdoor = std::min(outdoor.size(), want - n_in);
  n_in = std::min(indoor.size(), want - n_outdoor);
  std::vector<std::pair<int, int>> chosen(indoor.begin(), indoor.begin() + n_in);
  chosen.insert(chosen.end(), outdoor.begin(), outdoor.begin() + n_outdoor);
  for (const auto& [scan, k] : chosen) {
    ReferencePair p;
    p.sfm_point = out.sfm_points[k];
    p.laser_point = bundle.scan_truth[scan_stations[scan]].Inverse().Apply(bundle.points[k]);
    p.region = bundle.HasCeilingAt(bundle.points[k]) ? Region::kIndoor : Region::kOutdoor;
    p.scan = scan;
    p.track = k;
    out.references.push_back(p);
  }
  return out;
}

MergeProblem BuildMergeProblem(const CorrespondenceSet& set,
                               const std::vector<Sim3Transform>& coarse,
                               const std::vector<bool>& keep) {
  if (coarse.size() != set.scan_stations.size()) {
    throw InvalidArgument("need one coarse transform per scan");
  }
  return AssembleMergeProblem(set.sfm_cameras, set.sfm_points, set.observations,
                              set.correspondences, keep, coarse);
}

}  // namespace scanmerge
