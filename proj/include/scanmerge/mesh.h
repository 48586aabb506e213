#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "scanmerge/geometry.h"

namespace scanmerge {

using Facet = std::array<int, 3>;

// Indexed triangle mesh. Facet centers and areas are computed once at
// construction; the mesh is immutable afterwards. Open (non-watertight)
// meshes are allowed.
class TriMesh {
 public:
  TriMesh() = default;
  // Throws InvalidMesh on out-of-range indices or zero-area facets.
  TriMesh(std::vector<Point3> vertices, std::vector<Facet> facets);

  const std::vector<Point3>& vertices() const { return vertices_; }
  const std::vector<Facet>& facets() const { return facets_; }
  const std::vector<Point3>& centers() const { return centers_; }
  const std::vector<double>& areas() const { return areas_; }

  size_t NumFacets() const { return facets_.size(); }
  const Point3& Corner(size_t facet, int k) const {
    return vertices_[facets_[facet][k]];
  }

  static double FacetArea(const Point3& a, const Point3& b, const Point3& c);

 private:
  std::vector<Point3> vertices_;
  std::vector<Facet> facets_;
  std::vector<Point3> centers_;
  std::vector<double> areas_;
};

using Rgb = std::array<std::uint8_t, 3>;

struct ColoredPointCloud {
  std::vector<Point3> points;
  std::vector<Rgb> colors;
  // Distance from each point to the scanner origin, when known.
  std::optional<std::vector<double>> origin_distance;

  size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  // Throws InvalidArgument on size mismatch or negative distances.
  void Validate() const;
};

}  // namespace scanmerge
