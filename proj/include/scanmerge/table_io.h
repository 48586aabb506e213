#pragma once

#include <string>
#include <vector>

#include "scanmerge/merge_ba.h"
#include "scanmerge/metrics.h"
#include "scanmerge/planner.h"
#include "scanmerge/registration.h"

namespace scanmerge {

// Comma-separated tables with a fixed header line. Numbers are written with
// 17 significant digits so files round-trip exactly.
//
//   tracks:           camera,point,u,v,feature_scale
//   correspondences:  scan,src_x,src_y,src_z,dst_x,dst_y,dst_z,channel,weight,track
//                     (an optional trailing inlier column holds 0/1)
//   references:       scan,track,region,sfm_x,sfm_y,sfm_z,laser_x,laser_y,laser_z
//
// Readers throw IoError on missing files and malformed rows.

void WriteTracksCsv(const std::string& path, const std::vector<Observation2D>& obs);
std::vector<Observation2D> ReadTracksCsv(const std::string& path);

void WriteCorrespondencesCsv(const std::string& path,
                             const std::vector<Correspondence3D>& pairs,
                             const std::vector<bool>* inlier = nullptr);
// inlier, when non-null, receives the inlier column (all true if absent).
std::vector<Correspondence3D> ReadCorrespondencesCsv(const std::string& path,
                                                     std::vector<bool>* inlier = nullptr);

void WriteReferencesCsv(const std::string& path, const std::vector<ReferencePair>& refs);
std::vector<ReferencePair> ReadReferencesCsv(const std::string& path);

// {"stations": [{"index": i, "position": [x, y, z]}, ...]}
void WriteStationsJson(const std::string& path, const std::vector<PotentialLocation>& s);
std::vector<PotentialLocation> ReadStationsJson(const std::string& path);

}  // namespace scanmerge
