#include "scanmerge/pipeline.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "scanmerge/image_io.h"
#include "scanmerge/ply_io.h"
#include "scanmerge/spatial_index.h"
#include "scanmerge/table_io.h"

namespace scanmerge {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------- config

void CheckKeys(const Json& j, const std::string& section, const std::set<std::string>& keys) {
  if (!j.is_object()) throw InvalidSpec("config section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!keys.count(key)) {
      throw InvalidSpec("unknown config key '" + (section.empty() ? key : section + "." + key) +
                        "'");
    }
  }
}

template <typename T>
void Read(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string_view OverlapModeName(OverlapMode m) {
  return m == OverlapMode::kCandidateOnly ? "candidate-only" : "all-unselected";
}

OverlapMode ParseOverlapMode(const std::string& s) {
  if (s == "candidate-only") return OverlapMode::kCandidateOnly;
  if (s == "all-unselected") return OverlapMode::kAllUnselected;
  throw InvalidSpec("overlap_mode must be 'candidate-only' or 'all-unselected'");
}

std::uint64_t Fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// ---------------------------------------------------------------- files

fs::path Sub(const fs::path& dir, const std::string& rel) {
  const fs::path p = dir / rel;
  fs::create_directories(p.parent_path());
  return p;
}

std::string Str(const fs::path& p) { return p.string(); }

void WriteReport(const fs::path& dir, const std::string& stage, const Json& report) {
  WriteJsonFile(Str(Sub(dir, "reports/" + stage + ".json")), report);
}

template <typename Fn>
Json RunStage(const std::string& stage, const fs::path& dir, Fn&& fn) {
  Json report;
  try {
    report = fn();
    report["stage"] = stage;
    WriteReport(dir, stage, report);
  } catch (const InvalidSpec&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
  return report;
}

struct ScanEntry {
  int id = 0;
  int station = -1;
  std::string cloud;  // relative to the scans file
  Sim3Transform prior;
};

std::vector<ScanEntry> ReadScans(const fs::path& dir) {
  const Json j = ReadJsonFile(Str(dir / "scans.json"));
  std::vector<ScanEntry> out;
  for (const Json& e : j.at("scans")) {
    ScanEntry s;
    s.id = e.at("id").get<int>();
    s.station = e.value("station", -1);
    s.cloud = e.at("cloud").get<std::string>();
    s.prior = Sim3FromJson(e.at("prior"));
    out.push_back(s);
  }
  for (size_t i = 0; i < out.size(); ++i) {
    if (out[i].id != static_cast<int>(i)) throw IoError("scans.json: ids must be 0..n-1 in order");
  }
  return out;
}

void WriteScans(const fs::path& dir, const std::vector<ScanEntry>& scans) {
  Json arr = Json::array();
  for (const auto& s : scans) {
    arr.push_back({{"id", s.id}, {"station", s.station}, {"cloud", s.cloud},
                   {"prior", Sim3ToJson(s.prior)}});
  }
  WriteJsonFile(Str(dir / "scans.json"), Json{{"scans", arr}});
}

std::vector<Sim3Transform> ReadTransforms(const fs::path& path) {
  const Json j = ReadJsonFile(Str(path));
  std::vector<Sim3Transform> out;
  for (const Json& e : j.at("scans")) out.push_back(Sim3FromJson(e.at("transform")));
  return out;
}

ColoredPointCloud GrayCloud(const std::vector<Point3>& pts) {
  ColoredPointCloud c;
  c.points = pts;
  c.colors.assign(pts.size(), Rgb{128, 128, 128});
  return c;
}

Json PlanToJson(const PlanResult& r, const std::vector<VisibilityRecord>& records) {
  Json steps = Json::array();
  for (const auto& s : r.steps) {
    steps.push_back({{"location", s.location},
                     {"numerator", s.numerator},
                     {"denominator", s.denominator},
                     {"coverage", s.coverage}});
  }
  Json recs = Json::array();
  for (const auto& v : records) {
    recs.push_back({{"location", v.location},
                    {"visible_facets", v.facets.size()},
                    {"score", v.score}});
  }
  return Json{{"selected", r.selected},       {"num_selected", r.num_selected()},
              {"coverage", r.coverage},       {"exhausted", r.exhausted},
              {"steps", steps},               {"records", recs}};
}

Json PrfToJson(const PrfReport& r) {
  return Json{{"tau", r.tau}, {"precision", r.precision}, {"recall", r.recall},
              {"fscore", r.fscore}};
}

std::uint64_t StageSeed(std::uint64_t seed, std::uint64_t salt) {
  return Fnv1a(std::to_string(seed) + ":" + std::to_string(salt));
}

}  // namespace

// ---------------------------------------------------------------- config

void PipelineConfig::Validate() const {
  scene.Validate();
  if (matches.max_ground_per_scan < 0 || matches.max_aerial_per_scan < 0 ||
      matches.reference_pairs < 0 || !(matches.max_match_range > 0.0)) {
    throw InvalidSpec("match options must be nonnegative with a positive range");
  }
  if (!simulate) {
    const std::pair<const char*, const std::string*> required[] = {
        {"mesh", &inputs.mesh},         {"stations", &inputs.stations},
        {"cameras", &inputs.cameras},   {"points", &inputs.points},
        {"tracks", &inputs.tracks},     {"scans", &inputs.scans},
        {"correspondences", &inputs.correspondences}};
    for (const auto& [name, value] : required) {
      if (value->empty()) throw InvalidSpec(std::string("inputs.") + name + " is required");
    }
  }
  if (ray_count < 1) throw InvalidSpec("plan.ray_count must be at least 1");
  if (!(neighbor_radius > 0.0)) throw InvalidSpec("plan.neighbor_radius must be positive");
  if (!(coverage_threshold > 0.0 && coverage_threshold <= 1.0)) {
    throw InvalidSpec("plan.coverage_threshold must be in (0, 1]");
  }
  if (!(scan_step_deg > 0.0 && scan_step_deg <= 90.0)) {
    throw InvalidSpec("capture.angular_step_deg must be in (0, 90]");
  }
  if (cube_resolution < 8) throw InvalidSpec("synth.cube_resolution must be at least 8");
  if (fill_radius < 0) throw InvalidSpec("synth.fill_radius must be nonnegative");
  if (!(gradient_threshold > 0.0)) throw InvalidSpec("synth.gradient_threshold must be positive");
  if (aerial_views < 0) throw InvalidSpec("synth.aerial_views must be nonnegative");
  if (ransac_samples < 1) throw InvalidSpec("register.num_samples must be at least 1");
  if (!(ransac_threshold > 0.0)) throw InvalidSpec("register.threshold must be positive");
  if (omega && !(*omega > 0.0 && std::isfinite(*omega))) {
    throw InvalidSpec("merge.omega must be 'auto' or a positive number");
  }
  if (!std::isfinite(rc_exponent)) throw InvalidSpec("merge.rc_exponent must be finite");
  if (!(huber_delta > 0.0)) throw InvalidSpec("merge.huber_delta must be positive");
  if (max_iterations < 1) throw InvalidSpec("merge.max_iterations must be at least 1");
  if (!(function_tolerance >= 0.0)) throw InvalidSpec("merge.function_tolerance must be >= 0");
  try {
    covariance.Validate();
  } catch (const InvalidProblem& e) {
    throw InvalidSpec(std::string("merge: ") + e.what());
  }
  if (!(tau > 0.0)) throw InvalidSpec("eval.tau must be positive");
  if (!(scene_scale > 0.0)) throw InvalidSpec("eval.scene_scale must be positive");
}

Json PipelineConfigToJson(const PipelineConfig& c) {
  Json scene = SceneSpecToJson(c.scene);
  scene.erase("seed");
  const PipelineInputs& in = c.inputs;
  return Json{
      {"seed", c.seed},
      {"output_root", c.output_root},
      {"simulate", c.simulate},
      {"scene", scene},
      {"matches",
       {{"max_ground_per_scan", c.matches.max_ground_per_scan},
        {"max_aerial_per_scan", c.matches.max_aerial_per_scan},
        {"reference_pairs", c.matches.reference_pairs},
        {"max_match_range", c.matches.max_match_range}}},
      {"inputs",
       {{"mesh", in.mesh},
        {"stations", in.stations},
        {"cameras", in.cameras},
        {"points", in.points},
        {"tracks", in.tracks},
        {"scans", in.scans},
        {"correspondences", in.correspondences},
        {"references", in.references},
        {"ground_truth", in.ground_truth}}},
      {"plan",
       {{"ray_count", c.ray_count},
        {"neighbor_radius", c.neighbor_radius},
        {"coverage_threshold", c.coverage_threshold},
        {"overlap_mode", OverlapModeName(c.overlap_mode)}}},
      {"capture", {{"angular_step_deg", c.scan_step_deg}}},
      {"synth",
       {{"cube_resolution", c.cube_resolution},
        {"fill_radius", c.fill_radius},
        {"gradient_threshold", c.gradient_threshold},
        {"aerial_views", c.aerial_views}}},
      {"register", {{"num_samples", c.ransac_samples}, {"threshold", c.ransac_threshold}}},
      {"merge",
       {{"omega", c.omega ? Json(*c.omega) : Json("auto")},
        {"rc_exponent", c.rc_exponent},
        {"huber_delta", c.huber_delta},
        {"max_iterations", c.max_iterations},
        {"function_tolerance", c.function_tolerance},
        {"pixel_sigma", c.covariance.pixel_sigma},
        {"feature_scale_exponent", c.covariance.feature_scale_exponent},
        {"laser_sigma", c.covariance.laser_sigma},
        {"range_coefficient", c.covariance.range_coefficient}}},
      {"eval", {{"tau", c.tau}, {"scene_scale", c.scene_scale}}}};
}

PipelineConfig PipelineConfigFromJson(const Json& j) {
  PipelineConfig c;
  try {
    CheckKeys(j, "", {"seed", "output_root", "simulate", "scene", "matches", "inputs", "plan",
                      "capture", "synth", "register", "merge", "eval"});
    Read(j, "seed", c.seed);
    Read(j, "output_root", c.output_root);
    Read(j, "simulate", c.simulate);
    if (j.contains("scene")) {
      if (j.at("scene").contains("seed")) {
        throw InvalidSpec("scene.seed is not allowed; set the top-level seed");
      }
      c.scene = SceneSpecFromJson(j.at("scene"));
    }
    c.scene.seed = c.seed;
    if (j.contains("matches")) {
      const Json& m = j.at("matches");
      CheckKeys(m, "matches",
                {"max_ground_per_scan", "max_aerial_per_scan", "reference_pairs",
                 "max_match_range"});
      Read(m, "max_ground_per_scan", c.matches.max_ground_per_scan);
      Read(m, "max_aerial_per_scan", c.matches.max_aerial_per_scan);
      Read(m, "reference_pairs", c.matches.reference_pairs);
      Read(m, "max_match_range", c.matches.max_match_range);
    }
    if (j.contains("inputs")) {
      const Json& in = j.at("inputs");
      CheckKeys(in, "inputs",
                {"mesh", "stations", "cameras", "points", "tracks", "scans",
                 "correspondences", "references", "ground_truth"});
      Read(in, "mesh", c.inputs.mesh);
      Read(in, "stations", c.inputs.stations);
      Read(in, "cameras", c.inputs.cameras);
      Read(in, "points", c.inputs.points);
      Read(in, "tracks", c.inputs.tracks);
      Read(in, "scans", c.inputs.scans);
      Read(in, "correspondences", c.inputs.correspondences);
      Read(in, "references", c.inputs.references);
      Read(in, "ground_truth", c.inputs.ground_truth);
    }
    if (j.contains("plan")) {
      const Json& p = j.at("plan");
      CheckKeys(p, "plan", {"ray_count", "neighbor_radius", "coverage_threshold", "overlap_mode"});
      Read(p, "ray_count", c.ray_count);
      Read(p, "neighbor_radius", c.neighbor_radius);
      Read(p, "coverage_threshold", c.coverage_threshold);
      if (p.contains("overlap_mode")) {
        c.overlap_mode = ParseOverlapMode(p.at("overlap_mode").get<std::string>());
      }
    }
    if (j.contains("capture")) {
      CheckKeys(j.at("capture"), "capture", {"angular_step_deg"});
      Read(j.at("capture"), "angular_step_deg", c.scan_step_deg);
    }
    if (j.contains("synth")) {
      const Json& s = j.at("synth");
      CheckKeys(s, "synth", {"cube_resolution", "fill_radius", "gradient_threshold", "aerial_views"});
      Read(s, "cube_resolution", c.cube_resolution);
      Read(s, "fill_radius", c.fill_radius);
      Read(s, "gradient_threshold", c.gradient_threshold);
      Read(s, "aerial_views", c.aerial_views);
    }
    if (j.contains("register")) {
      const Json& r = j.at("register");
      CheckKeys(r, "register", {"num_samples", "threshold"});
      Read(r, "num_samples", c.ransac_samples);
      Read(r, "threshold", c.ransac_threshold);
    }
    if (j.contains("merge")) {
      const Json& m = j.at("merge");
      CheckKeys(m, "merge",
                {"omega", "rc_exponent", "huber_delta", "max_iterations", "function_tolerance",
                 "pixel_sigma", "feature_scale_exponent", "laser_sigma", "range_coefficient"});
      if (m.contains("omega")) {
        const Json& w = m.at("omega");
        if (w.is_string()) {
          if (w.get<std::string>() != "auto") throw InvalidSpec("merge.omega must be 'auto' or a number");
          c.omega.reset();
        } else {
          c.omega = w.get<double>();
        }
      }
      Read(m, "rc_exponent", c.rc_exponent);
      Read(m, "huber_delta", c.huber_delta);
      Read(m, "max_iterations", c.max_iterations);
      Read(m, "function_tolerance", c.function_tolerance);
      Read(m, "pixel_sigma", c.covariance.pixel_sigma);
      Read(m, "feature_scale_exponent", c.covariance.feature_scale_exponent);
      Read(m, "laser_sigma", c.covariance.laser_sigma);
      Read(m, "range_coefficient", c.covariance.range_coefficient);
    }
    if (j.contains("eval")) {
      CheckKeys(j.at("eval"), "eval", {"tau", "scene_scale"});
      Read(j.at("eval"), "tau", c.tau);
      Read(j.at("eval"), "scene_scale", c.scene_scale);
    }
  } catch (const Json::exception& e) {
    throw InvalidSpec(std::string("malformed config: ") + e.what());
  }
  c.Validate();
  return c;
}

PipelineConfig LoadPipelineConfig(const std::string& path) {
  try {
    return PipelineConfigFromJson(ReadJsonFile(path, true));
  } catch (const IoError& e) {
    throw InvalidSpec(e.what());
  }
}

std::string ConfigHash(const PipelineConfig& c) {
  Json j = PipelineConfigToJson(c);
  j.erase("output_root");
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(Fnv1a(j.dump())));
  return buf;
}

fs::path RunDirectory(const PipelineConfig& c) {
  return fs::path(c.output_root) / ConfigHash(c);
}

// ---------------------------------------------------------------- stages

Json StageSimulate(const PipelineConfig& c, const fs::path& dir) {
  return RunStage("simulate", dir, [&] {
    const GroundTruthBundle bundle = GenerateScene(c.scene);
    const CorrespondenceSet set = SimulateMatches(bundle, {}, c.scene.noise, c.matches);
    WritePlyMesh(Str(Sub(dir, "mesh.ply")), bundle.mesh);
    WriteStationsJson(Str(Sub(dir, "stations.json")), bundle.stations);
    WriteCamerasJson(Str(Sub(dir, "cameras.json")), set.sfm_cameras);
    WritePlyCloud(Str(Sub(dir, "points.ply")), GrayCloud(set.sfm_points));
    WriteTracksCsv(Str(Sub(dir, "tracks.csv")), set.observations);
    WriteCamerasJson(Str(Sub(dir, "truth/cameras.json")), bundle.cameras);
    WritePlyCloud(Str(Sub(dir, "truth/points.ply")), GrayCloud(bundle.points));
    WriteJsonFile(Str(Sub(dir, "truth/scene.json")), SceneSpecToJson(bundle.spec));
    int aerial = 0;
    for (int s : bundle.camera_station) aerial += s < 0 ? 1 : 0;
    return Json{{"facets", bundle.mesh.NumFacets()},
                {"stations", bundle.stations.size()},
                {"ground_cameras", static_cast<int>(bundle.cameras.size()) - aerial},
                {"aerial_cameras", aerial},
                {"points", bundle.points.size()},
                {"observations", set.observations.size()}};
  });
}

Json StageImport(const PipelineConfig& c, const fs::path& dir) {
  const PipelineInputs& in = c.inputs;
  const auto need = [](const std::string& p, const char* what) {
    if (!p.empty() && !fs::exists(p)) {
      throw InvalidSpec(std::string("inputs.") + what + " does not exist: " + p);
    }
  };
  need(in.mesh, "mesh");
  need(in.stations, "stations");
  need(in.cameras, "cameras");
  need(in.points, "points");
  need(in.tracks, "tracks");
  need(in.scans, "scans");
  need(in.correspondences, "correspondences");
  need(in.references, "references");
  need(in.ground_truth, "ground_truth");
  return RunStage("import", dir, [&] {
    const auto copy = [&](const std::string& from, const std::string& to) {
      fs::copy_file(from, Sub(dir, to), fs::copy_options::overwrite_existing);
    };
    copy(in.mesh, "mesh.ply");
    copy(in.stations, "stations.json");
    copy(in.cameras, "cameras.json");
    copy(in.points, "points.ply");
    copy(in.tracks, "tracks.csv");
    copy(in.correspondences, "correspondences.csv");
    if (!in.references.empty()) copy(in.references, "references.csv");
    if (!in.ground_truth.empty()) copy(in.ground_truth, "truth/ground_truth.ply");
    const fs::path scans_dir = fs::path(in.scans).parent_path();
    copy(in.scans, "scans.json");
    std::vector<ScanEntry> scans = ReadScans(dir);
    for (auto& s : scans) {
      const std::string rel = "scans/scan_" + std::to_string(s.id) + ".ply";
      copy(Str(scans_dir / s.cloud), rel);
      s.cloud = rel;
    }
    WriteScans(dir, scans);
    return Json{{"scans", scans.size()}};
  });
}

Json StagePlan(const PipelineConfig& c, const fs::path& dir) {
  return RunStage("plan", dir, [&] {
    const TriMesh mesh = ReadPlyMesh(Str(dir / "mesh.ply"));
    const auto stations = ReadStationsJson(Str(dir / "stations.json"));
    const auto records =
        ComputeVisibilityRecords(mesh, stations, c.ray_count, c.neighbor_radius);
    PlanOptions options;
    options.coverage_threshold = c.coverage_threshold;
    options.overlap_mode = c.overlap_mode;
    const PlanResult plan = PlanLocations(records, options);
    const Json j = PlanToJson(plan, records);
    WriteJsonFile(Str(Sub(dir, "plan.json")), j);
    return j;
  });
}

Json StageCapture(const PipelineConfig& c, const fs::path& dir) {
  return RunStage("capture", dir, [&] {
    const GroundTruthBundle bundle = GenerateScene(c.scene);
    const Json plan = ReadJsonFile(Str(dir / "plan.json"));
    const auto selected = plan.at("selected").get<std::vector<int>>();
    std::vector<ScanEntry> scans;
    Json per_scan = Json::array();
    Json truth = Json::array();
    for (size_t i = 0; i < selected.size(); ++i) {
      const int station = selected[i];
      const ColoredPointCloud cloud = SimulateScan(bundle, station, c.scan_step_deg);
      ScanEntry e;
      e.id = static_cast<int>(i);
      e.station = station;
      e.cloud = "scans/scan_" + std::to_string(i) + ".ply";
      e.prior = bundle.scan_prior[station];
      WritePlyCloud(Str(Sub(dir, e.cloud)), cloud);
      scans.push_back(e);
      per_scan.push_back({{"id", e.id}, {"station", station}, {"points", cloud.size()}});
      truth.push_back({{"id", e.id}, {"transform", Sim3ToJson(bundle.scan_truth[station])}});
    }
    WriteScans(dir, scans);
    const CorrespondenceSet set = SimulateMatches(bundle, selected, c.scene.noise, c.matches);
    WriteCorrespondencesCsv(Str(Sub(dir, "correspondences.csv")), set.correspondences);
    WriteReferencesCsv(Str(Sub(dir, "references.csv")), set.references);
    WriteJsonFile(Str(Sub(dir, "truth/scans.json")), Json{{"scans", truth}});
    WriteCorrespondencesCsv(Str(Sub(dir, "truth/labels.csv")), set.correspondences,
                            &set.outlier);
    int outliers = 0;
    for (bool o : set.outlier) outliers += o ? 1 : 0;
    return Json{{"scans", per_scan},
                {"correspondences", set.correspondences.size()},
                {"outliers", outliers},
                {"references", set.references.size()}};
  });
}

Json StageSynth(const PipelineConfig& c, const fs::path& dir) {
  return RunStage("synth", dir, [&] {
    const std::vector<ScanEntry> scans = ReadScans(dir);
    const std::vector<CameraView> cameras = ReadCamerasJson(Str(dir / "cameras.json"));
    const auto pairs = ReadCorrespondencesCsv(Str(dir / "correspondences.csv"));
    std::vector<int> aerial_ids, ground_ids;
    std::vector<CameraView> aerial, ground;
    for (size_t i = 0; i < cameras.size(); ++i) {
      if (cameras[i].label == CameraLabel::kCapturedAerial) {
        aerial_ids.push_back(static_cast<int>(i));
        aerial.push_back(cameras[i]);
      } else if (cameras[i].label == CameraLabel::kCapturedGround) {
        ground_ids.push_back(static_cast<int>(i));
        ground.push_back(cameras[i]);
      }
    }
    SynthOptions options;
    options.fill_radius = c.fill_radius;
    std::vector<bool> keep(pairs.size(), false);
    Json per_scan = Json::array();
    for (const ScanEntry& scan : scans) {
      const ColoredPointCloud cloud = ReadPlyCloud(Str(dir / scan.cloud));
      const std::string prefix = "synth/scan_" + std::to_string(scan.id) + "/";
      const CubeRig rig = BuildCubeRig(Point3::Zero(), c.cube_resolution);
      std::vector<std::optional<SynthImage>> faces(6);
      std::vector<std::vector<std::uint8_t>> masks(6);
      Json face_stats = Json::array();
      for (int f = 0; f < 6; ++f) {
        try {
          faces[f] = SynthesizeView(cloud, rig.views[f], options, scan.id);
        } catch (const DisjointView&) {
          face_stats.push_back({{"face", f}, {"empty", true}});
          continue;
        }
        const SynthImage& img = *faces[f];
        masks[f] = DepthEdgeMask(img, c.gradient_threshold);
        const std::string name = prefix + "face_" + std::to_string(f);
        WritePngRgb(Str(Sub(dir, name + "_rgb.png")), img.width, img.height, img.rgb);
        WritePfm(Str(Sub(dir, name + "_depth.pfm")), img.width, img.height, img.depth);
        std::vector<std::uint8_t> mask_img(masks[f].size());
        size_t filled = 0, masked = 0;
        for (size_t p = 0; p < masks[f].size(); ++p) {
          mask_img[p] = masks[f][p] ? 255 : 0;
          filled += img.depth[p] != kEmptyDepth ? 1 : 0;
          masked += masks[f][p] ? 1 : 0;
        }
        WritePngGray(Str(Sub(dir, name + "_mask.png")), img.width, img.height, mask_img);
        // Captured ground images that would be matched against this face.
        const Sim3Transform to_laser = scan.prior.Inverse();
        CameraView in_sfm = rig.views[f];
        in_sfm.pose.rotation = rig.views[f].pose.rotation * to_laser.rotation();
        in_sfm.pose.translation = rig.views[f].pose.rotation * to_laser.translation() +
                                  rig.views[f].pose.translation;
        const auto partners = GatePartnerCameras(in_sfm, ground);
        const double n = static_cast<double>(masks[f].size());
        face_stats.push_back({{"face", f},
                              {"filled", filled / n},
                              {"unreliable", masked / n},
                              {"partners", partners.size()}});
      }

      int kept = 0, dropped = 0;
      for (size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].scan != scan.id) continue;
        const Point3& x = pairs[i].source;
        int best = -1;
        double best_depth = 0.0;
        for (int f = 0; f < 6; ++f) {
          if (!faces[f]) continue;
          const auto proj = ProjectPoint(rig.views[f], x);
          if (!proj || !PixelInImage(rig.views[f].intrinsics, proj->pixel)) continue;
          if (proj->depth > best_depth) {
            best_depth = proj->depth;
            best = f;
          }
        }
        bool ok = false;
        if (best >= 0) {
          const auto px = PixelIndex(ProjectPoint(rig.views[best], x)->pixel);
          const SynthImage& img = *faces[best];
          ok = img.Filled(px.x(), px.y()) && !masks[best][img.Index(px.x(), px.y())];
        }
        keep[i] = ok;
        (ok ? kept : dropped) += 1;
      }

      Json aerial_json = Json::array();
      if (!aerial.empty() && c.aerial_views > 0) {
        ColoredPointCloud world = cloud;
        for (Point3& p : world.points) p = scan.prior.Apply(p);
        world.origin_distance.reset();
        std::vector<int> chosen;
        try {
          chosen = SelectAerialViews(world, aerial, c.aerial_views);
        } catch (const NoVisibility&) {
          chosen.clear();
        }
        for (int a : chosen) {
          const SynthImage img = SynthesizeView(world, aerial[a], options, scan.id);
          WritePngRgb(Str(Sub(dir, prefix + "aerial_" + std::to_string(aerial_ids[a]) + ".png")),
                      img.width, img.height, img.rgb);
          aerial_json.push_back(aerial_ids[a]);
        }
      }
      per_scan.push_back({{"id", scan.id},
                          {"faces", face_stats},
                          {"aerial_views", aerial_json},
                          {"kept", kept},
                          {"dropped_unreliable", dropped}});
    }
    std::vector<Correspondence3D> filtered;
    for (size_t i = 0; i < pairs.size(); ++i) {
      if (keep[i]) filtered.push_back(pairs[i]);
    }
    WriteCorrespondencesCsv(Str(Sub(dir, "synth/correspondences.csv")), filtered);
    const Json report{{"scans", per_scan}, {"correspondences", filtered.size()}};
    WriteJsonFile(Str(Sub(dir, "synth/synth.json")), report);
    return report;
  });
}

Json StageRegister(const PipelineConfig& c, const fs::path& dir) {
  return RunStage("register", dir, [&] {
    const std::vector<ScanEntry> scans = ReadScans(dir);
    const auto pairs = ReadCorrespondencesCsv(Str(dir / "synth/correspondences.csv"));
    std::vector<bool> inlier(pairs.size(), false);
    Json per_scan = Json::array();
    for (const ScanEntry& scan : scans) {
      std::vector<Correspondence3D> subset;
      std::vector<size_t> index;
      for (size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].scan == scan.id) {
          subset.push_back(pairs[i]);
          index.push_back(i);
        }
      }
      RansacOptions options;
      options.num_samples = c.ransac_samples;
      options.threshold = c.ransac_threshold;
      options.seed = StageSeed(c.seed, 100 + scan.id);
      RansacReport r;
      try {
        r = RansacSim3(subset, options);
      } catch (const Error& e) {
        throw StageError("register", "scan " + std::to_string(scan.id) + ": " + e.what());
      }
      for (int k : r.inliers) inlier[index[k]] = true;
      per_scan.push_back({{"id", scan.id},
                          {"transform", Sim3ToJson(r.transform)},
                          {"sample_transform", Sim3ToJson(r.sample_transform)},
                          {"correspondences", subset.size()},
                          {"inliers", r.inliers.size()},
                          {"inlier_rms", r.inlier_rms},
                          {"iterations", r.iterations},
                          {"degenerate_skipped", r.degenerate_skipped},
                          {"refit_used", r.refit_used}});
    }
    const Json report{{"scans", per_scan}};
    WriteJsonFile(Str(Sub(dir, "register/coarse.json")), report);
    WriteCorrespondencesCsv(Str(Sub(dir, "register/inliers.csv")), pairs, &inlier);
    return report;
  });
}

Json StageMerge(const PipelineConfig& c, const fs::path& dir) {
  return RunStage("merge", dir, [&] {
    std::vector<bool> inlier;
    const auto pairs = ReadCorrespondencesCsv(Str(dir / "register/inliers.csv"), &inlier);
    const auto coarse = ReadTransforms(dir / "register/coarse.json");
    MergeProblem problem = AssembleMergeProblem(
        ReadCamerasJson(Str(dir / "cameras.json")),
        ReadPlyCloud(Str(dir / "points.ply")).points, ReadTracksCsv(Str(dir / "tracks.csv")),
        pairs, inlier, coarse);
    problem.covariance = c.covariance;
    problem.huber_delta = c.huber_delta;
    problem.omega = 1.0;
    const CostBreakdown initial = EvaluateCost(problem);
    const double base = c.omega ? *c.omega : ComputeOmega(problem);
    problem.omega = ScaledOmega(base, c.rc_exponent);
    const double lg_rc = std::log10(problem.omega * initial.space / initial.reprojection);

    SolveOptions options;
    options.max_iterations = c.max_iterations;
    options.function_tolerance = c.function_tolerance;
    const SolveReport r = Solve(problem, options);

    WriteCamerasJson(Str(Sub(dir, "merge/cameras.json")), problem.cameras);
    WritePlyCloud(Str(Sub(dir, "merge/points.ply")), GrayCloud(problem.points));
    Json transforms = Json::array();
    for (size_t s = 0; s < problem.scans.size(); ++s) {
      transforms.push_back({{"id", s}, {"transform", Sim3ToJson(problem.ScanTransform(s))}});
    }
    WriteJsonFile(Str(Sub(dir, "merge/scans.json")), Json{{"scans", transforms}});

    // Merged reconstruction: SfM points plus every scan in the SfM frame.
    ColoredPointCloud merged = GrayCloud(problem.points);
    for (const ScanEntry& scan : ReadScans(dir)) {
      const ColoredPointCloud cloud = ReadPlyCloud(Str(dir / scan.cloud));
      const Sim3Transform t = problem.ScanTransform(scan.id);
      for (size_t i = 0; i < cloud.size(); ++i) {
        merged.points.push_back(t.Apply(cloud.points[i]));
        merged.colors.push_back(cloud.colors[i]);
      }
    }
    WritePlyCloud(Str(Sub(dir, "merge/merged_cloud.ply")), merged);

    const Json report{{"omega", problem.omega},
                      {"omega_base", base},
                      {"omega_mode", c.omega ? "fixed" : "auto"},
                      {"rc_exponent", c.rc_exponent},
                      {"lg_rc", lg_rc},
                      {"scale", problem.scale},
                      {"observations2d", problem.observations2d.size()},
                      {"observations3d", problem.observations3d.size()},
                      {"iterations", r.iterations},
                      {"termination", r.termination},
                      {"initial_cost", r.initial_cost},
                      {"final_cost", r.final_cost},
                      {"initial_reprojection_rms", r.initial_reprojection_rms},
                      {"final_reprojection_rms", r.final_reprojection_rms},
                      {"initial_space_rms", r.initial_space_rms},
                      {"final_space_rms", r.final_space_rms},
                      {"dropped_residuals", r.dropped_residuals},
                      {"cost_trace", r.cost_trace}};
    WriteJsonFile(Str(Sub(dir, "merge/solve.json")), report);
    return report;
  });
}

Json StageEval(const PipelineConfig& c, const fs::path& dir) {
  return RunStage("eval", dir, [&] {
    const auto coarse = ReadTransforms(dir / "register/coarse.json");
    const auto fine = ReadTransforms(dir / "merge/scans.json");
    const auto initial_points = ReadPlyCloud(Str(dir / "points.ply")).points;
    const auto merged_points = ReadPlyCloud(Str(dir / "merge/points.ply")).points;
    Json report;
    report["num_scans"] = fine.size();

    if (fs::exists(dir / "references.csv")) {
      const auto refs = ReadReferencesCsv(Str(dir / "references.csv"));
      Json rms;
      rms["pairs"] = refs.size();
      rms["coarse"] = RmsReferenceError(refs, coarse, &initial_points);
      rms["fine"] = RmsReferenceError(refs, fine, &merged_points);
      for (const Region region : {Region::kOutdoor, Region::kIndoor}) {
        std::vector<ReferencePair> subset;
        for (const auto& p : refs) {
          if (p.region == region) subset.push_back(p);
        }
        const char* name = region == Region::kIndoor ? "indoor" : "outdoor";
        if (subset.empty()) continue;
        rms[name] = {{"pairs", subset.size()},
                     {"coarse", RmsReferenceError(subset, coarse, &initial_points)},
                     {"fine", RmsReferenceError(subset, fine, &merged_points)}};
      }
      report["rms"] = rms;
    }

    std::vector<Point3> gt;
    if (fs::exists(dir / "truth/ground_truth.ply")) {
      gt = ReadPlyCloud(Str(dir / "truth/ground_truth.ply")).points;
    } else if (c.simulate) {
      Rng rng(StageSeed(c.seed, 7));
      gt = SampleMeshSurface(ReadPlyMesh(Str(dir / "mesh.ply")), 0.25 * c.tau * c.scene_scale,
                             rng);
    }
    if (!gt.empty()) {
      const double tau = c.tau * c.scene_scale;
      std::vector<Point3> merged = merged_points;
      std::vector<Point3> with_coarse = initial_points;
      for (const ScanEntry& scan : ReadScans(dir)) {
        const auto cloud = ReadPlyCloud(Str(dir / scan.cloud)).points;
        for (const Point3& p : cloud) {
          merged.push_back(fine[scan.id].Apply(p));
          with_coarse.push_back(coarse[scan.id].Apply(p));
        }
      }
      report["prf"] = {
          {"tau", tau},
          {"merged", PrfToJson(PrecisionRecallFscore(merged, gt, tau))},
          {"coarse", PrfToJson(PrecisionRecallFscore(with_coarse, gt, tau))},
          {"image_only", PrfToJson(PrecisionRecallFscore(initial_points, gt, tau))}};
    }
    WriteJsonFile(Str(Sub(dir, "eval.json")), report);
    return report;
  });
}

// ---------------------------------------------------------------- run

Json BeginRun(const PipelineConfig& c, const fs::path& dir) {
  fs::create_directories(dir);
  const Json config = PipelineConfigToJson(c);
  WriteJsonFile(Str(dir / "config.json"), config);
  const fs::path summary = dir / "summary.jsonl";
  std::ofstream out(summary, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + Str(summary));
  const Json record{{"stage", "config"}, {"hash", ConfigHash(c)}, {"config", config}};
  out << record.dump() << '\n';
  if (!out) throw IoError("write failed: " + Str(summary));
  return record;
}

void AppendRecord(const fs::path& dir, const Json& record) {
  const fs::path summary = dir / "summary.jsonl";
  std::ofstream out(summary, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot write " + Str(summary));
  out << record.dump() << '\n';
  if (!out) throw IoError("write failed: " + Str(summary));
}

RunResult RunPipeline(const PipelineConfig& c, const std::optional<fs::path>& dir_override) {
  c.Validate();
  RunResult result;
  result.dir = dir_override ? *dir_override : RunDirectory(c);
  result.records.push_back(BeginRun(c, result.dir));

  using StageFn = Json (*)(const PipelineConfig&, const fs::path&);
  std::vector<std::pair<const char*, StageFn>> stages;
  if (c.simulate) {
    stages = {{"simulate", StageSimulate}, {"plan", StagePlan},         {"capture", StageCapture},
              {"synth", StageSynth},       {"register", StageRegister}, {"merge", StageMerge},
              {"eval", StageEval}};
  } else {
    stages = {{"import", StageImport}, {"plan", StagePlan},   {"synth", StageSynth},
              {"register", StageRegister}, {"merge", StageMerge}, {"eval", StageEval}};
  }
  for (const auto& [name, fn] : stages) {
    Json record;
    try {
      record = fn(c, result.dir);
    } catch (const StageError& e) {
      AppendRecord(result.dir, Json{{"stage", e.stage()}, {"error", e.what()}});
      throw;
    }
    AppendRecord(result.dir, record);
    result.records.push_back(record);
  }
  return result;
}

// ---------------------------------------------------------------- sweep

namespace {

std::string ResolveParameter(const std::string& p) {
  if (p == "rc-exponent" || p == "rc_exponent") return "merge.rc_exponent";
  if (p == "t_c" || p == "tc" || p == "coverage-threshold") return "plan.coverage_threshold";
  if (p == "omega") return "merge.omega";
  if (p == "huber" || p == "huber-delta") return "merge.huber_delta";
  return p;
}

Json::json_pointer Pointer(const std::string& dotted) {
  std::string s = "/" + dotted;
  for (char& ch : s) {
    if (ch == '.') ch = '/';
  }
  return Json::json_pointer(s);
}

Json ParseValue(const std::string& v) {
  const auto slash = v.find('/');
  if (slash != std::string::npos) {
    try {
      size_t a = 0, b = 0;
      const double num = std::stod(v.substr(0, slash), &a);
      const double den = std::stod(v.substr(slash + 1), &b);
      if (a == slash && b == v.size() - slash - 1 && den != 0.0) return num / den;
    } catch (const std::exception&) {
    }
  }
  try {
    return Json::parse(v);
  } catch (const Json::exception&) {
    return Json(v);
  }
}

const Json* FindStage(const std::vector<Json>& records, const std::string& stage) {
  for (const Json& r : records) {
    if (r.value("stage", "") == stage) return &r;
  }
  return nullptr;
}

}  // namespace

std::vector<SweepRow> Sweep(const PipelineConfig& base, const std::string& parameter,
                            const std::vector<std::string>& values) {
  const std::string key = ResolveParameter(parameter);
  const Json base_json = PipelineConfigToJson(base);
  const Json::json_pointer ptr = Pointer(key);
  if (key == "output_root" || !base_json.contains(ptr) || base_json.at(ptr).is_object()) {
    throw InvalidSpec("unknown sweep parameter '" + parameter + "'");
  }
  std::vector<SweepRow> rows;
  for (const std::string& value : values) {
    SweepRow row;
    row.value = value;
    try {
      Json j = base_json;
      j[ptr] = ParseValue(value);
      const PipelineConfig c = PipelineConfigFromJson(j);
      row.run_dir = Str(RunDirectory(c));
      const RunResult run = RunPipeline(c);
      row.status = "ok";
      if (const Json* e = FindStage(run.records, "eval")) {
        row.num_scans = e->value("num_scans", 0);
        if (e->contains("rms")) {
          row.coarse_rms = e->at("rms").at("coarse").get<double>();
          row.final_rms = e->at("rms").at("fine").get<double>();
        }
        if (e->contains("prf")) {
          row.fscore_merged = e->at("prf").at("merged").at("fscore").get<double>();
          row.fscore_image_only = e->at("prf").at("image_only").at("fscore").get<double>();
        }
      }
    } catch (const std::exception& e) {
      row.status = "failed";
      row.message = e.what();
    }
    rows.push_back(row);
  }
  return rows;
}

std::string SweepCsv(const std::string& parameter, const std::vector<SweepRow>& rows) {
  const auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  };
  const auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "parameter,value,status,run_dir,num_scans,coarse_rms,final_rms,fscore_merged,"
         "fscore_image_only,message\n";
  for (const auto& r : rows) {
    out << quote(parameter) << ',' << quote(r.value) << ',' << r.status << ','
        << quote(r.run_dir) << ',' << r.num_scans << ',' << num(r.coarse_rms) << ','
        << num(r.final_rms) << ',' << num(r.fscore_merged) << ',' << num(r.fscore_image_only)
        << ',' << quote(r.message) << '\n';
  }
  return out.str();
}

}  // namespace scanmerge
