#include "scanmerge/planner.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "scanmerge/errors.h"

namespace scanmerge {

std::vector<Vector3> SampleSphereDirections(int count) {
  if (count < 1) throw InvalidArgument("ray count must be positive");
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Vector3> dirs;
  dirs.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * i;
    dirs.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
    dirs.back().normalize();
  }
  return dirs;
}

std::vector<int> CastVisibility(const MeshBvh& bvh, const Point3& origin,
                                std::span<const Vector3> dirs) {
  std::vector<int> facets;
  for (const Vector3& d : dirs) {
    if (const auto hit = bvh.Intersect(origin, d)) facets.push_back(hit->facet);
  }
  std::sort(facets.begin(), facets.end());
  facets.erase(std::unique(facets.begin(), facets.end()), facets.end());
  return facets;
}

double FacetScore(const TriMesh& mesh, int facet, double radius) {
  if (facet < 0 || facet >= static_cast<int>(mesh.NumFacets())) {
    throw InvalidArgument("facet index out of range");
  }
  if (!(radius > 0.0)) throw InvalidArgument("neighbor radius must be positive");
  const Point3& c = mesh.centers()[facet];
  double score = mesh.areas()[facet];
  for (size_t f = 0; f < mesh.NumFacets(); ++f) {
    if (static_cast<int>(f) == facet) continue;
    if ((mesh.centers()[f] - c).norm() < radius) score += mesh.areas()[f];
  }
  return score;
}

FacetScorer::FacetScorer(const TriMesh& mesh, double radius)
    : mesh_(mesh),
      radius_(radius),
      grid_(mesh.centers(), radius > 0.0 ? radius : 1.0),
      cache_(mesh.NumFacets(), std::numeric_limits<double>::quiet_NaN()) {
  if (!(radius > 0.0)) throw InvalidArgument("neighbor radius must be positive");
}

double FacetScorer::Score(int facet) {
  if (facet < 0 || facet >= static_cast<int>(mesh_.NumFacets())) {
    throw InvalidArgument("facet index out of range");
  }
  double& slot = cache_[facet];
  if (std::isnan(slot)) {
    double score = mesh_.areas()[facet];
    for (int f : grid_.RadiusQuery(mesh_.centers()[facet], radius_, true)) {
      if (f != facet) score += mesh_.areas()[f];
    }
    slot = score;
  }
  return slot;
}

double LocationScore(std::span<const double> facet_scores) {
  if (facet_scores.empty()) return 0.0;
  double sum = 0.0;
  for (double a : facet_scores) sum += a;
  return sum / static_cast<double>(facet_scores.size());
}

double PairwiseIou(std::span<const int> a, std::span<const int> b) {
  size_t inter = 0;
  size_t i = 0, k = 0;
  while (i < a.size() && k < b.size()) {
    if (a[i] < b[k]) {
      ++i;
    } else if (b[k] < a[i]) {
      ++k;
    } else {
      ++inter;
      ++i;
      ++k;
    }
  }
  const size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<VisibilityRecord> ComputeVisibilityRecords(
    const TriMesh& mesh, const std::vector<PotentialLocation>& locations,
    int ray_count, double radius) {
  const auto dirs = SampleSphereDirections(ray_count);
  const MeshBvh bvh(mesh);
  FacetScorer scorer(mesh, radius);
  std::vector<VisibilityRecord> records;
  records.reserve(locations.size());
  for (const auto& loc : locations) {
    VisibilityRecord rec;
    rec.location = loc.index;
    rec.facets = CastVisibility(bvh, loc.position, dirs);
    rec.facet_scores.reserve(rec.facets.size());
    for (int f : rec.facets) rec.facet_scores.push_back(scorer.Score(f));
    rec.score = LocationScore(rec.facet_scores);
    records.push_back(std::move(rec));
  }
  return records;
}

namespace {

// Ranks a candidate ratio; a zero denominator with a positive numerator is
// the limit +inf and outranks any finite ratio.
struct RatioKey {
  bool unbounded = false;
  double value = 0.0;

  bool operator>(const RatioKey& o) const {
    if (unbounded != o.unbounded) return unbounded;
    return value > o.value;
  }
};

RatioKey MakeKey(double numerator, double denominator) {
  if (denominator <= 0.0) return RatioKey{true, numerator};
  return RatioKey{false, numerator / denominator};
}

}  // namespace

PlanResult PlanLocations(const std::vector<VisibilityRecord>& records,
                         const PlanOptions& options) {
  const double t_c = options.coverage_threshold;
  if (!(t_c > 0.0 && t_c <= 1.0)) {
    throw InvalidArgument("coverage threshold must lie in (0, 1]");
  }
  const int n = static_cast<int>(records.size());
  std::set<int> all_facets;
  for (const auto& r : records) all_facets.insert(r.facets.begin(), r.facets.end());
  if (all_facets.empty()) {
    throw NoVisibility("no candidate location sees any facet");
  }
  const double total = static_cast<double>(all_facets.size());

  std::vector<std::vector<double>> iou(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      iou[i][j] = iou[j][i] = PairwiseIou(records[i].facets, records[j].facets);
    }
  }

  PlanResult result;
  std::vector<bool> taken(n, false);
  std::set<int> covered;
  double score_sum = 0.0;
  double selected_overlap = 0.0;

  auto take = [&](int idx, double numerator, double denominator) {
    for (int s : result.selected) selected_overlap += iou[s][idx];
    taken[idx] = true;
    result.selected.push_back(idx);
    score_sum += records[idx].score;
    covered.insert(records[idx].facets.begin(), records[idx].facets.end());
    result.coverage = static_cast<double>(covered.size()) / total;
    result.steps.push_back(PlanStep{idx, numerator, denominator, result.coverage});
  };

  // First pick: largest location score, lowest index on ties.
  int first = 0;
  for (int i = 1; i < n; ++i) {
    if (records[i].score > records[first].score) first = i;
  }
  take(first, records[first].score, 0.0);

  while (result.coverage < t_c) {
    double unselected_overlap = 0.0;
    if (options.overlap_mode == OverlapMode::kAllUnselected) {
      for (int s : result.selected) {
        for (int c = 0; c < n; ++c) {
          if (!taken[c]) unselected_overlap += iou[s][c];
        }
      }
    }
    int best = -1;
    RatioKey best_key;
    double best_num = 0.0, best_den = 0.0;
    for (int c = 0; c < n; ++c) {
      if (taken[c] || !(records[c].score > 0.0)) continue;
      const double num = score_sum + records[c].score;
      double den = selected_overlap;
      if (options.overlap_mode == OverlapMode::kAllUnselected) {
        den += unselected_overlap;
      } else {
        for (int s : result.selected) den += iou[s][c];
      }
      const RatioKey key = MakeKey(num, den);
      if (best < 0 || key > best_key) {
        best = c;
        best_key = key;
        best_num = num;
        best_den = den;
      }
    }
    if (best < 0) {
      result.exhausted = true;
      break;
    }
    take(best, best_num, best_den);
  }
  return result;
}

}  // namespace scanmerge
