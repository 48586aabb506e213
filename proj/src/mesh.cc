#include "scanmerge/mesh.h"

#include <string>

#include "scanmerge/errors.h"

namespace scanmerge {

double TriMesh::FacetArea(const Point3& a, const Point3& b, const Point3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

TriMesh::TriMesh(std::vector<Point3> vertices, std::vector<Facet> facets)
    : vertices_(std::move(vertices)), facets_(std::move(facets)) {
  const int n = static_cast<int>(vertices_.size());
  for (const Point3& v : vertices_) {
    if (!v.allFinite()) throw InvalidMesh("mesh vertex is not finite");
  }
  centers_.reserve(facets_.size());
  areas_.reserve(facets_.size());
  for (size_t f = 0; f < facets_.size(); ++f) {
    for (int idx : facets_[f]) {
      if (idx < 0 || idx >= n) {
        throw InvalidMesh("facet " + std::to_string(f) +
                          " references vertex out of range");
      }
    }
    const Point3& a = vertices_[facets_[f][0]];
    const Point3& b = vertices_[facets_[f][1]];
    const Point3& c = vertices_[facets_[f][2]];
    const double area = FacetArea(a, b, c);
    if (!(area > 0.0)) {
      throw InvalidMesh("facet " + std::to_string(f) + " is degenerate");
    }
    areas_.push_back(area);
    centers_.push_back((a + b + c) / 3.0);
  }
}

void ColoredPointCloud::Validate() const {
  if (colors.size() != points.size()) {
    throw InvalidArgument("point cloud colors/points size mismatch");
  }
  if (origin_distance) {
    if (origin_distance->size() != points.size()) {
      throw InvalidArgument("point cloud distance/points size mismatch");
    }
    for (double d : *origin_distance) {
      if (!(d >= 0.0)) throw InvalidArgument("negative origin distance");
    }
  }
}

}  // namespace scanmerge
