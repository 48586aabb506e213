#include "scanmerge/metrics.h"

#include <cmath>
#include <map>

#include "scanmerge/errors.h"
#include "scanmerge/spatial_index.h"

namespace scanmerge {

double RmsReferenceError(const std::vector<ReferencePair>& pairs,
                         const std::vector<Sim3Transform>& scan_transforms,
                         const std::vector<Point3>* points) {
  if (pairs.empty()) throw InvalidArgument("no reference pairs");
  double sq = 0.0;
  for (const auto& p : pairs) {
    if (p.scan < 0 || p.scan >= static_cast<int>(scan_transforms.size())) {
      throw InvalidArgument("reference pair references a missing scan");
    }
    Point3 sfm = p.sfm_point;
    if (p.track >= 0 && points) {
      if (p.track >= static_cast<int>(points->size())) {
        throw InvalidArgument("reference pair references a missing track");
      }
      sfm = (*points)[p.track];
    }
    sq += (scan_transforms[p.scan].Apply(p.laser_point) - sfm).squaredNorm();
  }
  return std::sqrt(sq / static_cast<double>(pairs.size()));
}

std::vector<Point3> VoxelResample(const std::vector<Point3>& cloud, double voxel_size,
                                  const RigidPose& grid_frame) {
  if (!(voxel_size > 0.0)) throw InvalidArgument("voxel size must be positive");
  std::map<CellKey, std::pair<Vector3, int>> voxels;
  for (const Point3& p : cloud) {
    auto& [sum, count] = voxels.try_emplace(CellOf(grid_frame.Apply(p), voxel_size), Vector3::Zero(), 0)
                             .first->second;
    sum += p;
    ++count;
  }
  std::vector<Point3> out;
  out.reserve(voxels.size());
  for (const auto& [key, acc] : voxels) out.push_back(acc.first / acc.second);
  return out;
}

double FScore(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

namespace {

double MatchedPercent(const std::vector<Point3>& queries, const std::vector<Point3>& ref,
                      double tau) {
  const PointGrid grid(ref, tau);
  size_t hit = 0;
  for (const Point3& q : queries) hit += grid.NearestWithin(q, tau) ? 1 : 0;
  return 100.0 * static_cast<double>(hit) / static_cast<double>(queries.size());
}

}  // namespace

PrfReport PrecisionRecallFscore(const std::vector<Point3>& reconstruction,
                                const std::vector<Point3>& ground_truth, double tau,
                                const RigidPose& grid_frame) {
  if (reconstruction.empty() || ground_truth.empty()) {
    throw InvalidArgument("precision/recall needs two non-empty clouds");
  }
  if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
  const auto recon = VoxelResample(reconstruction, tau / 2.0, grid_frame);
  const auto gt = VoxelResample(ground_truth, tau / 2.0, grid_frame);
  PrfReport report;
  report.tau = tau;
  report.precision = MatchedPercent(recon, gt, tau);
  report.recall = MatchedPercent(gt, recon, tau);
  report.fscore = FScore(report.precision, report.recall);
  return report;
}

}  // namespace scanmerge
