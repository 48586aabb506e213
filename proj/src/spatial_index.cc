#include "scanmerge/spatial_index.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "scanmerge/errors.h"

namespace scanmerge {

namespace {

constexpr int kLeafSize = 4;

bool RayBox(const Eigen::AlignedBox3d& box, const Point3& origin,
            const Vector3& inv_dir, double t_max, double* t_enter) {
  double t0 = 0.0;
  double t1 = t_max;
  for (int a = 0; a < 3; ++a) {
    double near = (box.min()[a] - origin[a]) * inv_dir[a];
    double far = (box.max()[a] - origin[a]) * inv_dir[a];
    if (std::isnan(near) || std::isnan(far)) {
      // Ray parallel to the slab and starting on its boundary plane.
      if (origin[a] < box.min()[a] || origin[a] > box.max()[a]) return false;
      continue;
    }
    if (near > far) std::swap(near, far);
    t0 = std::max(t0, near);
    t1 = std::min(t1, far);
    if (t0 > t1) return false;
  }
  *t_enter = t0;
  return true;
}

bool CloserHit(double t, int facet, const std::optional<RayHit>& best) {
  return !best || t < best->distance || (t == best->distance && facet < best->facet);
}

}  // namespace

MeshBvh::MeshBvh(const TriMesh& mesh) : mesh_(mesh) {
  order_.resize(mesh.NumFacets());
  std::iota(order_.begin(), order_.end(), 0);
  if (!order_.empty()) {
    nodes_.reserve(2 * order_.size() / kLeafSize + 1);
    Build(0, static_cast<int>(order_.size()), 0);
  }
}

int MeshBvh::Build(int begin, int end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box;
  Eigen::AlignedBox3d centroid_box;
  for (int i = begin; i < end; ++i) {
    for (int k = 0; k < 3; ++k) box.extend(mesh_.Corner(order_[i], k));
    centroid_box.extend(mesh_.centers()[order_[i]]);
  }
  nodes_[id].box = box;
  if (end - begin <= kLeafSize || depth > 60) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  int axis = 0;
  centroid_box.sizes().maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  const auto& centers = mesh_.centers();
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](int a, int b) {
                     if (centers[a][axis] != centers[b][axis]) {
                       return centers[a][axis] < centers[b][axis];
                     }
                     return a < b;
                   });
  const int left = Build(begin, mid, depth + 1);
  const int right = Build(mid, end, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::optional<RayHit> MeshBvh::Intersect(const Point3& origin,
                                         const Vector3& dir) const {
  std::optional<RayHit> best;
  if (nodes_.empty()) return best;
  const Vector3 inv_dir = dir.cwiseInverse();
  std::vector<int> stack;
  stack.reserve(64);
  stack.push_back(0);
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    double t_enter = 0.0;
    const double t_max = best ? best->distance : std::numeric_limits<double>::infinity();
    if (!RayBox(node.box, origin, inv_dir, t_max, &t_enter)) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int f = order_[i];
        const auto t = RayTriangleIntersect(origin, dir, mesh_.Corner(f, 0),
                                            mesh_.Corner(f, 1), mesh_.Corner(f, 2));
        if (t && CloserHit(*t, f, best)) best = RayHit{f, *t};
      }
      continue;
    }
    stack.push_back(node.right);
    stack.push_back(node.left);
  }
  return best;
}

std::optional<RayHit> IntersectBruteForce(const TriMesh& mesh,
                                          const Point3& origin,
                                          const Vector3& dir) {
  std::optional<RayHit> best;
  for (size_t f = 0; f < mesh.NumFacets(); ++f) {
    const auto t = RayTriangleIntersect(origin, dir, mesh.Corner(f, 0),
                                        mesh.Corner(f, 1), mesh.Corner(f, 2));
    if (t && CloserHit(*t, static_cast<int>(f), best)) {
      best = RayHit{static_cast<int>(f), *t};
    }
  }
  return best;
}

CellKey CellOf(const Point3& p, double cell_size) {
  return CellKey{static_cast<std::int64_t>(std::floor(p.x() / cell_size)),
                 static_cast<std::int64_t>(std::floor(p.y() / cell_size)),
                 static_cast<std::int64_t>(std::floor(p.z() / cell_size))};
}

PointGrid::PointGrid(const std::vector<Point3>& points, double cell_size)
    : points_(points), cell_size_(cell_size) {
  if (!(cell_size > 0.0)) throw InvalidArgument("grid cell size must be positive");
  cells_.reserve(points.size());
  for (size_t i = 0; i < points.size(); ++i) {
    cells_[CellOf(points[i], cell_size)].push_back(static_cast<int>(i));
  }
}

template <typename Fn>
void PointGrid::VisitCandidates(const Point3& p, double radius, Fn&& fn) const {
  const CellKey lo = CellOf(p - Vector3::Constant(radius), cell_size_);
  const CellKey hi = CellOf(p + Vector3::Constant(radius), cell_size_);
  for (std::int64_t x = lo.x; x <= hi.x; ++x) {
    for (std::int64_t y = lo.y; y <= hi.y; ++y) {
      for (std::int64_t z = lo.z; z <= hi.z; ++z) {
        const auto it = cells_.find(CellKey{x, y, z});
        if (it == cells_.end()) continue;
        for (int idx : it->second) fn(idx);
      }
    }
  }
}

std::vector<int> PointGrid::RadiusQuery(const Point3& p, double radius,
                                        bool strict) const {
  std::vector<int> out;
  const double r2 = radius * radius;
  VisitCandidates(p, radius, [&](int idx) {
    const double d2 = (points_[idx] - p).squaredNorm();
    if (strict ? d2 < r2 : d2 <= r2) out.push_back(idx);
  });
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<double> PointGrid::NearestWithin(const Point3& p,
                                               double radius) const {
  double best = std::numeric_limits<double>::infinity();
  VisitCandidates(p, radius, [&](int idx) {
    best = std::min(best, (points_[idx] - p).squaredNorm());
  });
  if (best <= radius * radius) return std::sqrt(best);
  return std::nullopt;
}

}  // namespace scanmerge
