#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "scanmerge/geometry.h"

namespace scanmerge {

enum class Channel { kGround, kAerial };

std::string_view ChannelName(Channel c);
Channel ParseChannel(std::string_view name);

// A laser point (scan frame) paired with an image-side point (SfM frame).
struct Correspondence3D {
  Point3 source = Point3::Zero();
  Point3 target = Point3::Zero();
  Channel channel = Channel::kGround;
  double weight = 1.0;
  int scan = 0;
  // SfM track the target was triangulated from, or -1 for a fixed anchor.
  int track = -1;
};

// Weighted least-squares similarity (rotation, translation and, optionally,
// scale) mapping sources onto targets. Throws RankDeficient when the sources
// are collinear or coincident.
Sim3Transform UmeyamaSim3(std::span<const Correspondence3D> pairs,
                          bool estimate_scale = true);

inline constexpr int kDefaultRansacSamples = 100;
inline constexpr double kDefaultRansacThreshold = 0.1;  // meters

struct RansacOptions {
  int num_samples = kDefaultRansacSamples;
  double threshold = kDefaultRansacThreshold;
  std::uint64_t seed = 0;
  bool estimate_scale = true;
};

struct RansacReport {
  Sim3Transform transform;         // final model (refit when it helped)
  Sim3Transform sample_transform;  // best minimal-sample model
  std::vector<int> inliers;        // ascending
  double inlier_rms = 0.0;
  int iterations = 0;              // non-degenerate samples evaluated
  int degenerate_skipped = 0;
  bool refit_used = false;
};

double TransferError(const Sim3Transform& t, const Correspondence3D& c);

// Consensus estimation over minimal three-pair samples. When the number of
// distinct triples does not exceed num_samples, every triple is evaluated
// once instead of sampling. Throws RegistrationFailed when no model gathers
// three inliers.
RansacReport RansacSim3(std::span<const Correspondence3D> pairs,
                        const RansacOptions& options = {});

}  // namespace scanmerge
