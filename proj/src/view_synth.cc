#include "scanmerge/view_synth.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <tuple>

#include "scanmerge/errors.h"

namespace scanmerge {

CubeRig BuildCubeRig(const Point3& center, int resolution) {
  if (resolution < 2) throw InvalidArgument("cube resolution must be at least 2");
  CubeRig rig;
  rig.center = center;
  rig.resolution = resolution;
  // 90 degree field of view with the principal point at the image center,
  // so the six faces tile the sphere without gaps.
  const double f = resolution / 2.0;
  const double c = (resolution - 1) / 2.0;
  const CameraIntrinsics k = CameraIntrinsics::Create(f, f, c, c, resolution, resolution);
  // Forward axis and image-down axis per face; right = down x forward.
  const std::array<std::pair<Vector3, Vector3>, 6> faces = {{
      {Vector3::UnitX(), -Vector3::UnitZ()},
      {-Vector3::UnitX(), -Vector3::UnitZ()},
      {Vector3::UnitY(), -Vector3::UnitZ()},
      {-Vector3::UnitY(), -Vector3::UnitZ()},
      {Vector3::UnitZ(), Vector3::UnitY()},
      {-Vector3::UnitZ(), Vector3::UnitY()},
  }};
  for (size_t f = 0; f < faces.size(); ++f) {
    const auto& [forward, down] = faces[f];
    Matrix3 r;
    r.row(0) = down.cross(forward).transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    CameraView& view = rig.views[f];
    view.intrinsics = k;
    view.pose.rotation = Rotation3::FromMatrix(r);
    view.pose.translation = -(r * center);
    view.label = CameraLabel::kVirtual;
  }
  return rig;
}

namespace {

struct Offset {
  int du, dv;
};

// Offsets within radius ordered by distance, then row, then column, so the
// donor choice is deterministic.
std::vector<Offset> FillOffsets(int radius) {
  std::vector<Offset> offsets;
  for (int dv = -radius; dv <= radius; ++dv) {
    for (int du = -radius; du <= radius; ++du) {
      if ((du == 0 && dv == 0) || du * du + dv * dv > radius * radius) continue;
      offsets.push_back({du, dv});
    }
  }
  std::sort(offsets.begin(), offsets.end(), [](const Offset& a, const Offset& b) {
    return std::make_tuple(a.du * a.du + a.dv * a.dv, a.dv, a.du) <
           std::make_tuple(b.du * b.du + b.dv * b.dv, b.dv, b.du);
  });
  return offsets;
}

}  // namespace

SynthImage SynthesizeView(const ColoredPointCloud& cloud, const CameraView& cam,
                          const SynthOptions& options, int scan_id) {
  if (cloud.empty()) throw InvalidArgument("cannot synthesize from an empty cloud");
  if (options.fill_radius < 0) throw InvalidArgument("fill radius must be nonnegative");
  cloud.Validate();
  SynthImage img;
  img.width = cam.intrinsics.width;
  img.height = cam.intrinsics.height;
  img.camera = cam;
  img.scan_id = scan_id;
  const size_t npix = static_cast<size_t>(img.width) * img.height;
  img.rgb.assign(3 * npix, 0);
  img.depth.assign(npix, kEmptyDepth);
  img.seed.assign(npix, 0);

  std::vector<double> zbuf(npix, std::numeric_limits<double>::infinity());
  std::vector<int> winner(npix, -1);
  for (size_t i = 0; i < cloud.size(); ++i) {
    const auto proj = ProjectPoint(cam, cloud.points[i]);
    if (!proj || !PixelInImage(cam.intrinsics, proj->pixel)) continue;
    const Eigen::Vector2i px = PixelIndex(proj->pixel);
    const size_t idx = img.Index(px.x(), px.y());
    if (proj->depth < zbuf[idx]) {
      zbuf[idx] = proj->depth;
      winner[idx] = static_cast<int>(i);
    }
  }
  bool any = false;
  for (size_t idx = 0; idx < npix; ++idx) {
    if (winner[idx] < 0) continue;
    any = true;
    img.seed[idx] = 1;
    img.depth[idx] = static_cast<float>(zbuf[idx]);
    const Rgb& c = cloud.colors[winner[idx]];
    std::copy(c.begin(), c.end(), img.rgb.begin() + 3 * idx);
  }
  if (!any) throw DisjointView("no point projects into the view");

  const auto offsets = FillOffsets(options.fill_radius);
  std::vector<float> depth = img.depth;
  std::vector<std::uint8_t> rgb = img.rgb;
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const size_t idx = img.Index(u, v);
      if (img.seed[idx]) continue;
      for (const Offset& o : offsets) {
        const int su = u + o.du, sv = v + o.dv;
        if (su < 0 || sv < 0 || su >= img.width || sv >= img.height) continue;
        const size_t donor = img.Index(su, sv);
        if (!img.seed[donor]) continue;
        depth[idx] = img.depth[donor];
        std::copy_n(img.rgb.begin() + 3 * donor, 3, rgb.begin() + 3 * idx);
        break;
      }
    }
  }
  img.depth = std::move(depth);
  img.rgb = std::move(rgb);
  return img;
}

std::vector<std::uint8_t> DepthEdgeMask(const SynthImage& img,
                                        double gradient_threshold) {
  if (!(gradient_threshold > 0.0)) {
    throw InvalidArgument("gradient threshold must be positive");
  }
  const int w = img.width, h = img.height;
  std::vector<std::uint8_t> core(static_cast<size_t>(w) * h, 0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const float d = img.depth[img.Index(u, v)];
      bool bad = d == kEmptyDepth;
      for (int dv = -1; dv <= 1 && !bad; ++dv) {
        for (int du = -1; du <= 1 && !bad; ++du) {
          const int nu = u + du, nv = v + dv;
          if ((du == 0 && dv == 0) || nu < 0 || nv < 0 || nu >= w || nv >= h) continue;
          if (std::abs(static_cast<double>(img.depth[img.Index(nu, nv)]) - d) >
              gradient_threshold) {
            bad = true;
          }
        }
      }
      core[img.Index(u, v)] = bad ? 1 : 0;
    }
  }
  // Two-pixel square dilation, separable.
  constexpr int kGrow = 2;
  std::vector<std::uint8_t> rows(core.size(), 0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!core[img.Index(u, v)]) continue;
      for (int du = -kGrow; du <= kGrow; ++du) {
        const int nu = u + du;
        if (nu >= 0 && nu < w) rows[img.Index(nu, v)] = 1;
      }
    }
  }
  std::vector<std::uint8_t> mask(core.size(), 0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!rows[img.Index(u, v)]) continue;
      for (int dv = -kGrow; dv <= kGrow; ++dv) {
        const int nv = v + dv;
        if (nv >= 0 && nv < h) mask[img.Index(u, nv)] = 1;
      }
    }
  }
  return mask;
}

Point3 PixelToPoint(const SynthImage& img, int u, int v,
                    const std::vector<std::uint8_t>* mask) {
  if (u < 0 || v < 0 || u >= img.width || v >= img.height) {
    throw InvalidArgument("pixel out of bounds");
  }
  const size_t idx = img.Index(u, v);
  if (img.depth[idx] == kEmptyDepth) throw NoDepth("pixel has no depth");
  if (mask && (*mask)[idx]) throw UnreliableDepth("pixel depth is near a depth edge");
  return UnprojectPixel(img.camera, Vector2(u, v), img.depth[idx]);
}

std::vector<int> SelectAerialViews(const ColoredPointCloud& scan,
                                   const std::vector<CameraView>& cameras, int k) {
  if (k < 1) throw InvalidArgument("must select at least one view");
  if (cameras.empty()) throw InvalidArgument("no aerial cameras given");
  const size_t n = cameras.size();
  std::vector<std::vector<int>> visible(n);
  for (size_t c = 0; c < n; ++c) {
    for (size_t i = 0; i < scan.size(); ++i) {
      const auto proj = ProjectPoint(cameras[c], scan.points[i]);
      if (proj && PixelInImage(cameras[c].intrinsics, proj->pixel)) {
        visible[c].push_back(static_cast<int>(i));
      }
    }
  }
  size_t first = 0;
  for (size_t c = 1; c < n; ++c) {
    if (visible[c].size() > visible[first].size()) first = c;
  }
  if (visible[first].empty()) throw NoVisibility("no aerial camera sees the scan");

  std::vector<int> chosen = {static_cast<int>(first)};
  std::vector<bool> seen(scan.size(), false);
  for (int i : visible[first]) seen[i] = true;
  std::vector<bool> used(n, false);
  used[first] = true;
  const size_t want = std::min<size_t>(k, n);
  while (chosen.size() < want) {
    int best = -1;
    std::pair<double, double> best_key{-1.0, -1.0};
    for (size_t c = 0; c < n; ++c) {
      if (used[c]) continue;
      double separation = std::numbers::pi;
      for (int s : chosen) {
        const double dot = std::clamp(
            cameras[c].ViewDirection().dot(cameras[s].ViewDirection()), -1.0, 1.0);
        separation = std::min(separation, std::acos(dot));
      }
      size_t fresh = 0;
      for (int i : visible[c]) fresh += seen[i] ? 0 : 1;
      // Ties on the primary term (e.g. nothing new to see) fall back to
      // spread weighted by total visibility.
      const std::pair<double, double> key{
          static_cast<double>(fresh) * separation,
          static_cast<double>(visible[c].size()) * separation};
      if (best < 0 || key > best_key) {
        best = static_cast<int>(c);
        best_key = key;
      }
    }
    used[best] = true;
    chosen.push_back(best);
    for (int i : visible[best]) seen[i] = true;
  }
  return chosen;
}

std::vector<int> GatePartnerCameras(const CameraView& virtual_view,
                                    const std::vector<CameraView>& captured,
                                    double max_distance, double max_angle_deg) {
  std::vector<int> out;
  const double cos_max = std::cos(max_angle_deg * std::numbers::pi / 180.0);
  for (size_t c = 0; c < captured.size(); ++c) {
    const double dist = (captured[c].Center() - virtual_view.Center()).norm();
    const double cosang = captured[c].ViewDirection().dot(virtual_view.ViewDirection());
    if (dist < max_distance && cosang > cos_max) out.push_back(static_cast<int>(c));
  }
  return out;
}

}  // namespace scanmerge
