#pragma once

#include <string>

#include "scanmerge/mesh.h"

namespace scanmerge {

enum class PlyFormat { kBinaryLittleEndian, kAscii };

// Reads ASCII or binary little-endian PLY. Vertex positions may be float or
// double; faces must be triangles.
TriMesh ReadPlyMesh(const std::string& path);
void WritePlyMesh(const std::string& path, const TriMesh& mesh,
                  PlyFormat format = PlyFormat::kBinaryLittleEndian);

// Colors default to mid-gray when absent. A per-vertex "distance" property
// maps to origin_distance.
ColoredPointCloud ReadPlyCloud(const std::string& path);
void WritePlyCloud(const std::string& path, const ColoredPointCloud& cloud,
                   PlyFormat format = PlyFormat::kBinaryLittleEndian);

}  // namespace scanmerge
