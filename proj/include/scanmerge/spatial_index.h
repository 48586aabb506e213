#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "scanmerge/geometry.h"
#include "scanmerge/mesh.h"

namespace scanmerge {

struct RayHit {
  int facet = -1;
  double distance = 0.0;
};

// Bounding-volume hierarchy over mesh facets for nearest-hit ray queries.
// Holds a reference to the mesh, which must outlive the index.
class MeshBvh {
 public:
  explicit MeshBvh(const TriMesh& mesh);

  // Nearest hit along the ray; equal distances resolve to the lowest facet
  // index.
  std::optional<RayHit> Intersect(const Point3& origin, const Vector3& dir) const;

  const TriMesh& mesh() const { return mesh_; }

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1;   // child node, or -1 for a leaf
    int right = -1;
    int begin = 0;   // leaf range into order_
    int end = 0;
  };

  int Build(int begin, int end, int depth);

  const TriMesh& mesh_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

// Exhaustive nearest hit, kept as the reference for MeshBvh.
std::optional<RayHit> IntersectBruteForce(const TriMesh& mesh,
                                          const Point3& origin,
                                          const Vector3& dir);

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
  bool operator<(const CellKey& o) const {
    return std::tie(x, y, z) < std::tie(o.x, o.y, o.z);
  }
};

struct CellKeyHash {
  size_t operator()(const CellKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 19349663ULL;
    h ^= static_cast<std::uint64_t>(k.z) * 83492791ULL;
    return static_cast<size_t>(h);
  }
};

CellKey CellOf(const Point3& p, double cell_size);

// Uniform hash grid over a fixed point set for radius queries.
class PointGrid {
 public:
  PointGrid(const std::vector<Point3>& points, double cell_size);

  // Indices (ascending) of points with distance < radius (strict) or
  // <= radius (non-strict).
  std::vector<int> RadiusQuery(const Point3& p, double radius,
                               bool strict = true) const;
  // Distance to the nearest point if one lies within radius (inclusive).
  std::optional<double> NearestWithin(const Point3& p, double radius) const;

 private:
  template <typename Fn>
  void VisitCandidates(const Point3& p, double radius, Fn&& fn) const;

  const std::vector<Point3>& points_;
  double cell_size_;
  std::unordered_map<CellKey, std::vector<int>, CellKeyHash> cells_;
};

}  // namespace scanmerge
