#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace scanmerge {

using Point3 = Eigen::Vector3d;
using Vector3 = Eigen::Vector3d;
using Vector2 = Eigen::Vector2d;
using Matrix3 = Eigen::Matrix3d;

// Proper rotation stored as an orthonormal matrix. Construction from an
// arbitrary matrix validates R^T R = I and det(R) = +1 within 1e-9.
class Rotation3 {
 public:
  Rotation3() : matrix_(Matrix3::Identity()) {}

  static Rotation3 Identity() { return Rotation3(); }
  static Rotation3 FromMatrix(const Matrix3& m);
  // Re-orthonormalizes via SVD; use after accumulating floating-point drift.
  static Rotation3 Orthonormalized(const Matrix3& m);
  static Rotation3 FromAngleAxis(double angle, const Vector3& axis);
  // Rodrigues map of a rotation vector.
  static Rotation3 Exp(const Vector3& omega);
  Vector3 Log() const;

  const Matrix3& matrix() const { return matrix_; }
  Rotation3 Inverse() const { return Rotation3(matrix_.transpose(), 0); }
  double AngleTo(const Rotation3& other) const;

  Vector3 operator*(const Vector3& v) const { return matrix_ * v; }
  Rotation3 operator*(const Rotation3& o) const {
    return Rotation3(matrix_ * o.matrix_, 0);
  }

 private:
  Rotation3(const Matrix3& m, int /*unchecked*/) : matrix_(m) {}
  Matrix3 matrix_;
};

Matrix3 Skew(const Vector3& v);

// World-to-camera convention: x_cam = R * x_world + t.
struct RigidPose {
  Rotation3 rotation;
  Vector3 translation = Vector3::Zero();

  Point3 Apply(const Point3& p) const { return rotation * p + translation; }
  RigidPose Inverse() const;
  // Position of the frame origin expressed in the outer frame (camera center
  // for a world-to-camera pose).
  Point3 Center() const { return -(rotation.matrix().transpose() * translation); }
};

// p -> scale * R * p + t.
class Sim3Transform {
 public:
  Sim3Transform() = default;
  Sim3Transform(double scale, const Rotation3& rotation,
                const Vector3& translation);

  static Sim3Transform Identity() { return Sim3Transform(); }

  double scale() const { return scale_; }
  const Rotation3& rotation() const { return rotation_; }
  const Vector3& translation() const { return translation_; }

  Point3 Apply(const Point3& p) const {
    return scale_ * (rotation_ * p) + translation_;
  }
  Sim3Transform Inverse() const;

 private:
  double scale_ = 1.0;
  Rotation3 rotation_;
  Vector3 translation_ = Vector3::Zero();
};

Point3 ApplySim3(const Sim3Transform& t, const Point3& p);
// Result applies b first, then a.
Sim3Transform ComposeSim3(const Sim3Transform& a, const Sim3Transform& b);

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  static CameraIntrinsics Create(double fx, double fy, double cx, double cy,
                                 int width, int height);
  void Validate() const;
};

enum class CameraLabel { kCapturedGround, kCapturedAerial, kVirtual };

std::string_view CameraLabelName(CameraLabel label);
CameraLabel ParseCameraLabel(std::string_view name);

struct CameraView {
  CameraIntrinsics intrinsics;
  RigidPose pose;  // world-to-camera
  CameraLabel label = CameraLabel::kCapturedGround;

  Point3 Center() const { return pose.Center(); }
  // Unit optical axis (camera +z) in world coordinates.
  Vector3 ViewDirection() const {
    return pose.rotation.matrix().row(2).transpose();
  }
};

struct ProjectedPoint {
  Vector2 pixel;
  double depth = 0.0;  // camera-frame z
};

// Pixel coordinates put pixel centers at integers: pixel (i, j) spans
// [i - 0.5, i + 0.5) x [j - 0.5, j + 0.5).
// Returns nullopt when the camera-frame depth is not positive.
std::optional<ProjectedPoint> ProjectPoint(const CameraView& cam,
                                           const Point3& p);
Point3 UnprojectPixel(const CameraView& cam, const Vector2& pixel,
                      double depth);
bool PixelInImage(const CameraIntrinsics& k, const Vector2& pixel);
// Integer pixel containing a continuous coordinate (rounds to nearest center).
Eigen::Vector2i PixelIndex(const Vector2& pixel);

// Returns the smallest nonnegative ray parameter at which the ray meets the
// triangle (edges and vertices included), or nullopt on a miss. Throws
// InvalidMesh when the triangle is degenerate.
std::optional<double> RayTriangleIntersect(const Point3& origin,
                                           const Vector3& dir,
                                           const Point3& a, const Point3& b,
                                           const Point3& c);

}  // namespace scanmerge
