#pragma once

// Ray-cast oracles for synthesized cube faces of a simulated room scan.

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "scanmerge/scene_sim.h"
#include "scanmerge/spatial_index.h"
#include "scanmerge/view_synth.h"

namespace oracle {

using namespace scanmerge;

struct RoomScan {
  GroundTruthBundle bundle;
  Sim3Transform scan_to_world;
  ColoredPointCloud cloud;  // laser frame
  double step_rad = 0.0;
};

// Two roofed rooms joined by a doorway, scanned noise-free from the first
// room. The door jambs give depth discontinuities, the walls give corners.
inline RoomScan MakeRoomScan(double step_deg, std::uint64_t seed = 1) {
  SceneSpec spec;
  spec.size = Vector3(9.0, 5.0, 3.0);
  spec.bays = 2;
  spec.roofed_bays = {0, 1};
  spec.doorway_width = 1.6;
  spec.aerial_cameras = 0;
  spec.rig = {{0.0, 0.0}, {0.0, 90.0}, {0.0, 180.0}, {0.0, 270.0}};
  spec.num_points = 100;
  spec.seed = seed;
  spec.stations = {Point3(2.2, 1.9, 1.4), Point3(6.5, 3.2, 1.4)};
  RoomScan r;
  r.bundle = GenerateScene(spec);
  r.scan_to_world = Sim3Transform(1.0, Rotation3::FromAngleAxis(0.3, Vector3::UnitZ()),
                                  spec.stations[0]);
  Rng rng(seed);
  r.cloud = SimulateScan(r.bundle, r.scan_to_world, step_deg, 0.0, rng);
  r.step_rad = step_deg * std::numbers::pi / 180.0;
  return r;
}

struct FaceStats {
  long true_pixels = 0;    // pixels whose ray hits the mesh
  long depth_ok = 0;       // filled and within 2x point spacing
  long bad_pixels = 0;     // filled with error above 3x point spacing
  long bad_masked = 0;     // of those, flagged by the edge mask
  long seed_pixels = 0;
  long seed_recovered = 0;  // pixel_to_point within the back-projection spread
};

inline FaceStats CheckFace(const RoomScan& r, const MeshBvh& bvh, const CameraView& view,
                           const SynthImage& img, const std::vector<std::uint8_t>& mask) {
  FaceStats s;
  const Vector3 forward = view.ViewDirection();
  const Matrix3 rot = r.scan_to_world.rotation().matrix();
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const Vector3 d = UnprojectPixel(view, Vector2(u, v), 1.0).normalized();
      const auto hit = bvh.Intersect(r.scan_to_world.translation(), rot * d);
      if (!hit) continue;
      ++s.true_pixels;
      if (!img.Filled(u, v)) continue;
      const double truth = hit->distance * d.dot(forward);
      const double spacing = hit->distance * r.step_rad;
      const double err = std::abs(img.depth[img.Index(u, v)] - truth);
      if (err <= 2.0 * spacing) ++s.depth_ok;
      if (err > 3.0 * spacing) {
        ++s.bad_pixels;
        if (mask[img.Index(u, v)]) ++s.bad_masked;
      }
    }
  }
  // Seed pixels against the z-buffer winner recomputed here.
  std::vector<double> best(static_cast<size_t>(img.width) * img.height,
                           std::numeric_limits<double>::infinity());
  std::vector<int> winner(best.size(), -1);
  for (size_t i = 0; i < r.cloud.size(); ++i) {
    const auto p = ProjectPoint(view, r.cloud.points[i]);
    if (!p || !PixelInImage(view.intrinsics, p->pixel)) continue;
    const auto px = PixelIndex(p->pixel);
    const size_t idx = img.Index(px.x(), px.y());
    if (p->depth < best[idx]) {
      best[idx] = p->depth;
      winner[idx] = static_cast<int>(i);
    }
  }
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const size_t idx = img.Index(u, v);
      if (!img.seed[idx]) continue;
      ++s.seed_pixels;
      const Point3 got = PixelToPoint(img, u, v);
      const double z = best[idx];
      const double spread = std::sqrt(0.5) * z / view.intrinsics.fx + 1e-6 * z;
      if (winner[idx] >= 0 && (got - r.cloud.points[winner[idx]]).norm() <= spread) {
        ++s.seed_recovered;
      }
    }
  }
  return s;
}

inline FaceStats CheckCube(const RoomScan& r, int resolution, double grad_thresh,
                           int fill_radius = kDefaultFillRadius) {
  const MeshBvh bvh(r.bundle.mesh);
  const CubeRig rig = BuildCubeRig(Point3::Zero(), resolution);
  FaceStats total;
  SynthOptions opt;
  opt.fill_radius = fill_radius;
  for (const CameraView& view : rig.views) {
    const SynthImage img = SynthesizeView(r.cloud, view, opt);
    const auto mask = DepthEdgeMask(img, grad_thresh);
    const FaceStats s = CheckFace(r, bvh, view, img, mask);
    total.true_pixels += s.true_pixels;
    total.depth_ok += s.depth_ok;
    total.bad_pixels += s.bad_pixels;
    total.bad_masked += s.bad_masked;
    total.seed_pixels += s.seed_pixels;
    total.seed_recovered += s.seed_recovered;
  }
  return total;
}

}  // namespace oracle
