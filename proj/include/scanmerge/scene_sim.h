#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "scanmerge/camera_io.h"
#include "scanmerge/geometry.h"
#include "scanmerge/merge_ba.h"
#include "scanmerge/mesh.h"
#include "scanmerge/metrics.h"
#include "scanmerge/planner.h"
#include "scanmerge/registration.h"

namespace scanmerge {

using Rng = std::mt19937_64;

struct NoiseModel {
  double pixel_sigma = 1.0;        // pixels, scaled by each feature's scale
  double max_feature_scale = 2.0;  // feature scales drawn from [1, max]
  double range_sigma = 0.0;        // laser range noise, meters
  double match_sigma = 0.01;       // laser-side localization error of a match
  double anchor_sigma = 0.005;     // error of fixed (untracked) anchor points
  double outlier_fraction = 0.0;   // of all 3D correspondences
  double camera_rotation_sigma_deg = 0.1;  // initial SfM pose error
  double camera_translation_sigma = 0.02;  // meters
  double scan_yaw_sigma_deg = 3.0;         // scanner heading error
};

// Rectangular compound split into bays along x by partition walls.
//
// Regions (for density multipliers): floor_<b>, ceiling_<b>, south_<b>
// (y = 0), north_<b> (y = size.y), west (x = 0), east (x = size.x) and
// partition_<k> (k = 1..bays-1). A multiplier lookup tries the exact name,
// then the name before the underscore, then "*"; the default is 1. A
// multiplier m meshes the region with facet edge base_edge / m. Points
// under a roof are tagged indoor, the rest outdoor.
struct SceneSpec {
  Vector3 size = Vector3(10.0, 8.0, 3.5);
  int bays = 2;
  double doorway_width = 2.0;  // 0 closes the partitions
  double doorway_height = 2.4;
  bool ceiling = false;          // roof over every bay
  std::vector<int> roofed_bays;  // roof over selected bays only
  double base_edge = 0.25;
  std::map<std::string, double> density;
  double vertex_jitter = 0.15;  // fraction of the local facet edge

  double station_spacing = 3.0;
  double station_height = 1.5;
  std::vector<Point3> stations;  // explicit candidates override the grid

  // Ground rig as (pitch, yaw) pairs in degrees.
  std::vector<std::pair<double, double>> rig;
  CameraIntrinsics ground_intrinsics = {500.0, 500.0, 320.0, 240.0, 640, 480};
  int aerial_cameras = 12;  // none when every bay is roofed
  double aerial_height = 14.0;
  double aerial_radius = 7.0;
  CameraIntrinsics aerial_intrinsics = {700.0, 700.0, 400.0, 300.0, 800, 600};

  int num_points = 5000;
  double laser_scale = 1.0;  // SfM units per laser meter
  NoiseModel noise;
  std::uint64_t seed = 1;

  SceneSpec();
  // 45 images per station: pitch -40..40 step 20, yaw 0..320 step 40.
  static std::vector<std::pair<double, double>> FullRig();
  double DensityFor(const std::string& region) const;
  void Validate() const;
};

Json SceneSpecToJson(const SceneSpec& spec);
SceneSpec SceneSpecFromJson(const Json& j);

struct GroundTruthBundle {
  SceneSpec spec;
  TriMesh mesh;
  std::vector<int> facet_region;  // index into region_names
  std::vector<std::string> region_names;
  std::vector<Rgb> facet_color;
  std::vector<PotentialLocation> stations;
  // True laser-to-SfM similarity of a scan taken at each station, and the
  // geo-referenced prior (station position, no heading error).
  std::vector<Sim3Transform> scan_truth;
  std::vector<Sim3Transform> scan_prior;
  std::vector<CameraView> cameras;  // true poses
  std::vector<int> camera_station;  // -1 for aerial cameras
  std::vector<Point3> points;       // true track positions
  std::vector<std::vector<int>> visible_points;  // per camera, ascending

  bool HasCeilingAt(const Point3& p) const;
};

// Throws InvalidSpec for impossible layouts.
GroundTruthBundle GenerateScene(const SceneSpec& spec);

// Spherical sweep at the given angular step from the scan origin. Points are
// returned in the scan frame with their ranges. Noise uses the given rng.
ColoredPointCloud SimulateScan(const GroundTruthBundle& bundle,
                               const Sim3Transform& scan_to_world,
                               double angular_step_deg, double range_sigma, Rng& rng);
ColoredPointCloud SimulateScan(const GroundTruthBundle& bundle, int station,
                               double angular_step_deg);

// Everything the image side and the matcher hand to registration/merging.
struct CorrespondenceSet {
  std::vector<Observation2D> observations;   // noisy, one per visible pair
  std::vector<CameraView> sfm_cameras;       // initial SfM estimate
  std::vector<Point3> sfm_points;            // initial SfM estimate
  std::vector<int> scan_stations;            // station of each scan
  std::vector<Correspondence3D> correspondences;  // targets in SfM frame
  std::vector<bool> outlier;                 // ground-truth labels
  std::vector<Point3> true_sources;          // noise-free laser-side points
  std::vector<ReferencePair> references;
};

struct MatchOptions {
  int max_ground_per_scan = 300;
  int max_aerial_per_scan = 100;
  int reference_pairs = 40;
  double max_match_range = 12.0;  // meters from the scanner
};

CorrespondenceSet SimulateMatches(const GroundTruthBundle& bundle,
                                  const std::vector<int>& scan_stations,
                                  const NoiseModel& noise,
                                  const MatchOptions& options = {});

// Uniform random samples on the mesh surface at roughly one per spacing^2.
std::vector<Point3> SampleMeshSurface(const TriMesh& mesh, double spacing, Rng& rng);

// Merge problem seeded from a correspondence set and coarse scan estimates.
// Only correspondences flagged in keep (e.g. RANSAC inliers) become space
// residuals.
MergeProblem BuildMergeProblem(const CorrespondenceSet& set,
                               const std::vector<Sim3Transform>& coarse,
                               const std::vector<bool>& keep);

}  // namespace scanmerge
