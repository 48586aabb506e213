#pragma once

#include <span>
#include <vector>

#include "scanmerge/geometry.h"
#include "scanmerge/mesh.h"
#include "scanmerge/spatial_index.h"

namespace scanmerge {

inline constexpr int kDefaultRayCount = 1000;
inline constexpr double kDefaultNeighborRadius = 0.1;  // meters
inline constexpr double kDefaultCoverageThreshold = 0.125;

struct PotentialLocation {
  int index = 0;
  Point3 position = Point3::Zero();
};

// Facets seen from one candidate station and their scores.
struct VisibilityRecord {
  int location = 0;
  std::vector<int> facets;             // ascending, unique
  std::vector<double> facet_scores;    // aligned with facets
  double score = 0.0;                  // mean of facet_scores, 0 when empty
};

struct PlanStep {
  int location = 0;
  double numerator = 0.0;    // summed location scores incl. the candidate
  double denominator = 0.0;  // summed overlaps; 0 on the first step
  double coverage = 0.0;     // coverage after taking this location
};

struct PlanResult {
  std::vector<int> selected;  // selection order
  std::vector<PlanStep> steps;
  double coverage = 0.0;
  // True when selection ended because no remaining candidate had a
  // positive score, before the coverage threshold was reached.
  bool exhausted = false;

  int num_selected() const { return static_cast<int>(selected.size()); }
};

// How the overlap sum against unselected candidates enters the greedy ratio.
enum class OverlapMode {
  // Only the evaluated candidate's overlaps with the selected set.
  kCandidateOnly,
  // Overlaps of the selected set with every unselected candidate, which is
  // the same for all candidates.
  kAllUnselected,
};

struct PlanOptions {
  double coverage_threshold = kDefaultCoverageThreshold;
  OverlapMode overlap_mode = OverlapMode::kCandidateOnly;
};

// Equal-area spiral on the unit sphere; deterministic for a given count.
std::vector<Vector3> SampleSphereDirections(int count);

// Nearest-hit facet for each ray, deduplicated and sorted.
std::vector<int> CastVisibility(const MeshBvh& bvh, const Point3& origin,
                                std::span<const Vector3> dirs);

// Facet area plus the areas of all other facets whose centers lie strictly
// closer than radius. Exhaustive scan over the mesh.
double FacetScore(const TriMesh& mesh, int facet, double radius);

// Same quantity as FacetScore, answered through a grid over facet centers
// and memoized per facet.
class FacetScorer {
 public:
  FacetScorer(const TriMesh& mesh, double radius);
  double Score(int facet);

 private:
  const TriMesh& mesh_;
  double radius_;
  PointGrid grid_;
  std::vector<double> cache_;
};

// Mean of the per-facet scores; 0 for an empty record.
double LocationScore(std::span<const double> facet_scores);

// |a & b| / |a | b| over sorted unique sets; 0 when both are empty.
double PairwiseIou(std::span<const int> a, std::span<const int> b);

std::vector<VisibilityRecord> ComputeVisibilityRecords(
    const TriMesh& mesh, const std::vector<PotentialLocation>& locations,
    int ray_count, double radius);

// Greedy location selection: seed with the highest location score, then
// repeatedly add the candidate maximizing summed score over summed overlap
// until the covered fraction of visible facets reaches the threshold.
PlanResult PlanLocations(const std::vector<VisibilityRecord>& records,
                         const PlanOptions& options = {});

}  // namespace scanmerge
