#pragma once

#include <vector>

#include "scanmerge/geometry.h"

namespace scanmerge {

enum class Region { kOutdoor, kIndoor };

// Manually (or synthetically) picked point pair that should coincide after
// merging. sfm_point is used when track < 0, otherwise the live track
// position is looked up; laser_point is in the frame of scan.
struct ReferencePair {
  Point3 sfm_point = Point3::Zero();
  Point3 laser_point = Point3::Zero();
  Region region = Region::kOutdoor;
  int scan = 0;
  int track = -1;
};

// sqrt(mean squared distance) after mapping each laser point through its
// scan's transform. points, when non-null, supplies live track positions.
double RmsReferenceError(const std::vector<ReferencePair>& pairs,
                         const std::vector<Sim3Transform>& scan_transforms,
                         const std::vector<Point3>* points = nullptr);

inline constexpr double kDefaultTau = 0.01;  // meters

// One centroid per occupied voxel, emitted in ascending voxel-key order.
// The grid is anchored at the origin of grid_frame (world-to-grid pose);
// the default is the world origin.
std::vector<Point3> VoxelResample(const std::vector<Point3>& cloud, double voxel_size,
                                  const RigidPose& grid_frame = {});

struct PrfReport {
  double tau = 0.0;
  double precision = 0.0;  // percent
  double recall = 0.0;     // percent
  double fscore = 0.0;     // percent
};

double FScore(double precision, double recall);

// Both clouds are voxel-resampled at tau / 2 first. A point counts as matched
// when some point of the other cloud lies within tau (inclusive).
PrfReport PrecisionRecallFscore(const std::vector<Point3>& reconstruction,
                                const std::vector<Point3>& ground_truth, double tau,
                                const RigidPose& grid_frame = {});

}  // namespace scanmerge
