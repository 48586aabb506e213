#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "scanmerge/geometry.h"
#include "scanmerge/mesh.h"

namespace scanmerge {

inline constexpr int kDefaultCubeResolution = 512;
inline constexpr int kFullCubeResolution = 3840;  // survey-grade option
inline constexpr int kDefaultFillRadius = 3;           // pixels
inline constexpr double kDefaultGradientThreshold = 0.05;  // meters per pixel
inline constexpr float kEmptyDepth = 0.0f;

// Image rendered from a colored point cloud. Depth is camera-frame z in
// meters; kEmptyDepth marks pixels with no data.
struct SynthImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, row-major
  std::vector<float> depth;
  std::vector<std::uint8_t> seed;  // 1 where a point landed directly
  CameraView camera;
  int scan_id = -1;

  size_t Index(int u, int v) const { return static_cast<size_t>(v) * width + u; }
  bool Filled(int u, int v) const { return depth[Index(u, v)] != kEmptyDepth; }
};

// Six 90-degree virtual cameras at a common center looking along +-X, +-Y,
// +-Z of the frame the center is expressed in.
struct CubeRig {
  Point3 center = Point3::Zero();
  int resolution = kDefaultCubeResolution;
  std::array<CameraView, 6> views;
};

CubeRig BuildCubeRig(const Point3& center, int resolution);

struct SynthOptions {
  int fill_radius = kDefaultFillRadius;
};

// Z-buffered one-pixel splats followed by nearest-seed hole filling within
// fill_radius pixels. Throws DisjointView when no point lands in the image.
SynthImage SynthesizeView(const ColoredPointCloud& cloud, const CameraView& cam,
                          const SynthOptions& options = {}, int scan_id = -1);

// Row-major mask, 1 = unreliable depth. A pixel is a core pixel when its
// depth is empty or differs from some 8-neighbor by more than the threshold;
// the mask is the core grown by two pixels in every direction.
std::vector<std::uint8_t> DepthEdgeMask(const SynthImage& img,
                                        double gradient_threshold);

// Back-projects a pixel center at its stored depth into the frame of the
// generating camera's world. Throws NoDepth or UnreliableDepth.
Point3 PixelToPoint(const SynthImage& img, int u, int v,
                    const std::vector<std::uint8_t>* mask = nullptr);

// Greedy aerial view choice: first the camera seeing the most scan points,
// then by (newly visible count) x (minimum axis separation to chosen views).
std::vector<int> SelectAerialViews(const ColoredPointCloud& scan,
                                   const std::vector<CameraView>& cameras, int k);

inline constexpr double kPartnerMaxDistance = 5.0;  // meters
inline constexpr double kPartnerMaxAngleDeg = 45.0;

// Captured cameras close enough in position and viewing direction to be
// matched against a virtual view.
std::vector<int> GatePartnerCameras(const CameraView& virtual_view,
                                    const std::vector<CameraView>& captured,
                                    double max_distance = kPartnerMaxDistance,
                                    double max_angle_deg = kPartnerMaxAngleDeg);

}  // namespace scanmerge
