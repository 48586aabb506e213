#pragma once

// Noise-free merge problems built straight from simulator ground truth.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "oracles.h"
#include "scanmerge/merge_ba.h"
#include "scanmerge/scene_sim.h"

namespace oracle {

using namespace scanmerge;

// Exact projections of every visible track, one scan per station with live
// space residuals on every stride-th ground-visible track within range and
// every fourth of those held as a fixed anchor. Cameras seeing fewer than
// min_tracks tracks are held fixed, since their poses are not determined.
inline MergeProblem TruthProblem(const GroundTruthBundle& b, int stride = 1,
                                 double max_range = 12.0, size_t min_tracks = 8) {
  MergeProblem p;
  p.cameras = b.cameras;
  p.points = b.points;
  for (size_t c = 0; c < b.cameras.size(); ++c) {
    if (c > 0 && b.visible_points[c].size() < min_tracks) {
      p.fixed_cameras.push_back(static_cast<int>(c));
    }
    for (int k : b.visible_points[c]) {
      Observation2D o;
      o.camera = static_cast<int>(c);
      o.point = k;
      o.pixel = ProjectPoint(b.cameras[c], b.points[k])->pixel;
      p.observations2d.push_back(o);
    }
  }
  p.scale = b.scan_truth.empty() ? 1.0 : b.scan_truth[0].scale();
  for (size_t s = 0; s < b.scan_truth.size(); ++s) {
    p.scans.push_back({b.scan_truth[s].rotation(), b.scan_truth[s].translation()});
    const Sim3Transform to_laser = b.scan_truth[s].Inverse();
    std::vector<bool> seen(b.points.size(), false);
    for (size_t c = 0; c < b.cameras.size(); ++c) {
      if (b.camera_station[c] != static_cast<int>(s)) continue;
      for (int k : b.visible_points[c]) seen[k] = true;
    }
    int n = 0, kept = 0;
    for (size_t k = 0; k < b.points.size(); ++k) {
      if (!seen[k] || (b.points[k] - b.stations[s].position).norm() > max_range) continue;
      if (n++ % stride) continue;
      Observation3D o;
      o.scan = static_cast<int>(s);
      o.laser_point = to_laser.Apply(b.points[k]);
      o.anchor = b.points[k];
      o.point = (kept++ % 4 == 3) ? -1 : static_cast<int>(k);
      p.observations3d.push_back(o);
    }
  }
  p.Validate();
  return p;
}

// Camera rotations rot_deg and translations trans (all but the fixed
// camera), scans the same, scale times scale_factor, points jittered.
inline void Perturb(MergeProblem& p, std::mt19937_64& rng, double rot_deg, double trans,
                    double scale_factor, double point_jitter) {
  const double rad = rot_deg * std::numbers::pi / 180.0;
  for (size_t c = 0; c < p.cameras.size(); ++c) {
    if (std::find(p.fixed_cameras.begin(), p.fixed_cameras.end(), static_cast<int>(c)) !=
        p.fixed_cameras.end()) {
      continue;
    }
    RigidPose& pose = p.cameras[c].pose;
    const Point3 center = p.cameras[c].Center() + trans * RandomUnit(rng);
    pose.rotation = Rotation3::Exp(rad * RandomUnit(rng)) * pose.rotation;
    pose.translation = -(pose.rotation * center);
  }
  for (auto& s : p.scans) {
    s.rotation = Rotation3::Exp(rad * RandomUnit(rng)) * s.rotation;
    s.translation += trans * RandomUnit(rng);
  }
  p.scale *= scale_factor;
  for (auto& x : p.points) x += point_jitter * RandomUnit(rng);
}

}  // namespace oracle
