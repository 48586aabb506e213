#include "scanmerge/geometry.h"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/SVD>

#include "scanmerge/errors.h"

namespace scanmerge {

namespace {
constexpr double kRotationTol = 1e-9;
}

Rotation3 Rotation3::FromMatrix(const Matrix3& m) {
  if (!m.allFinite()) throw InvalidArgument("rotation has non-finite entries");
  const double ortho_err = (m.transpose() * m - Matrix3::Identity()).norm();
  const double det = m.determinant();
  if (ortho_err > kRotationTol || std::abs(det - 1.0) > kRotationTol) {
    throw InvalidArgument("matrix is not a proper rotation (orthonormality error " +
                          std::to_string(ortho_err) + ", det " +
                          std::to_string(det) + ")");
  }
  return Rotation3(m, 0);
}

Rotation3 Rotation3::Orthonormalized(const Matrix3& m) {
  Eigen::JacobiSVD<Matrix3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Matrix3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return Rotation3(r, 0);
}

Rotation3 Rotation3::FromAngleAxis(double angle, const Vector3& axis) {
  return Rotation3(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(),
                   0);
}

Rotation3 Rotation3::Exp(const Vector3& omega) {
  const double theta = omega.norm();
  const Matrix3 k = Skew(omega);
  if (theta < 1e-8) {
    // Second-order series; orthonormalize to stay on the manifold.
    return Orthonormalized(Matrix3::Identity() + k + 0.5 * k * k);
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Rotation3(Matrix3::Identity() + a * k + b * k * k, 0);
}

Vector3 Rotation3::Log() const {
  const Eigen::AngleAxisd aa(matrix_);
  return aa.angle() * aa.axis();
}

double Rotation3::AngleTo(const Rotation3& other) const {
  const Matrix3 rel = matrix_.transpose() * other.matrix_;
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  // acos loses precision near zero; use the skew part there.
  const Vector3 w(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0),
                  rel(1, 0) - rel(0, 1));
  return std::atan2(0.5 * w.norm(), c);
}

Matrix3 Skew(const Vector3& v) {
  Matrix3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

RigidPose RigidPose::Inverse() const {
  RigidPose inv;
  inv.rotation = rotation.Inverse();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

Sim3Transform::Sim3Transform(double scale, const Rotation3& rotation,
                             const Vector3& translation)
    : scale_(scale), rotation_(rotation), translation_(translation) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw InvalidArgument("similarity scale must be positive and finite");
  }
  if (!translation.allFinite()) {
    throw InvalidArgument("similarity translation must be finite");
  }
}

Sim3Transform Sim3Transform::Inverse() const {
  const Rotation3 r_inv = rotation_.Inverse();
  const double s_inv = 1.0 / scale_;
  return Sim3Transform(s_inv, r_inv, -s_inv * (r_inv * translation_));
}

Point3 ApplySim3(const Sim3Transform& t, const Point3& p) { return t.Apply(p); }

Sim3Transform ComposeSim3(const Sim3Transform& a, const Sim3Transform& b) {
  // a(b(p)) = sa Ra (sb Rb p + tb) + ta
  return Sim3Transform(a.scale() * b.scale(), a.rotation() * b.rotation(),
                       a.scale() * (a.rotation() * b.translation()) +
                           a.translation());
}

CameraIntrinsics CameraIntrinsics::Create(double fx, double fy, double cx,
                                          double cy, int width, int height) {
  CameraIntrinsics k{fx, fy, cx, cy, width, height};
  k.Validate();
  return k;
}

void CameraIntrinsics::Validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw InvalidArgument("focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw InvalidArgument("image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw InvalidArgument("principal point outside the image");
  }
}

std::string_view CameraLabelName(CameraLabel label) {
  switch (label) {
    case CameraLabel::kCapturedGround:
      return "captured-ground";
    case CameraLabel::kCapturedAerial:
      return "captured-aerial";
    case CameraLabel::kVirtual:
      return "virtual";
  }
  return "virtual";
}

CameraLabel ParseCameraLabel(std::string_view name) {
  if (name == "captured-ground") return CameraLabel::kCapturedGround;
  if (name == "captured-aerial") return CameraLabel::kCapturedAerial;
  if (name == "virtual") return CameraLabel::kVirtual;
  throw InvalidArgument("unknown camera label '" + std::string(name) + "'");
}

std::optional<ProjectedPoint> ProjectPoint(const CameraView& cam,
                                           const Point3& p) {
  const Point3 pc = cam.pose.Apply(p);
  if (!(pc.z() > 0.0)) return std::nullopt;
  const auto& k = cam.intrinsics;
  ProjectedPoint out;
  out.pixel = Vector2(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy);
  out.depth = pc.z();
  return out;
}

Point3 UnprojectPixel(const CameraView& cam, const Vector2& pixel,
                      double depth) {
  const auto& k = cam.intrinsics;
  const Point3 pc((pixel.x() - k.cx) / k.fx * depth,
                  (pixel.y() - k.cy) / k.fy * depth, depth);
  return cam.pose.rotation.matrix().transpose() * (pc - cam.pose.translation);
}

Eigen::Vector2i PixelIndex(const Vector2& pixel) {
  return Eigen::Vector2i(static_cast<int>(std::floor(pixel.x() + 0.5)),
                         static_cast<int>(std::floor(pixel.y() + 0.5)));
}

bool PixelInImage(const CameraIntrinsics& k, const Vector2& pixel) {
  if (!pixel.allFinite()) return false;
  const Eigen::Vector2i idx = PixelIndex(pixel);
  return idx.x() >= 0 && idx.x() < k.width && idx.y() >= 0 && idx.y() < k.height;
}

std::optional<double> RayTriangleIntersect(const Point3& origin,
                                           const Vector3& dir,
                                           const Point3& a, const Point3& b,
                                           const Point3& c) {
  const Vector3 e1 = b - a;
  const Vector3 e2 = c - a;
  const Vector3 n = e1.cross(e2);
  const double scale2 = std::max({e1.squaredNorm(), e2.squaredNorm(), 1e-300});
  if (n.norm() <= 1e-14 * scale2) {
    throw InvalidMesh("degenerate triangle in ray intersection");
  }
  // Moller-Trumbore with inclusive edge tests.
  const Vector3 pvec = dir.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) <= 1e-15 * std::sqrt(scale2)) return std::nullopt;
  const double inv_det = 1.0 / det;
  const Vector3 tvec = origin - a;
  const double u = tvec.dot(pvec) * inv_det;
  constexpr double kEdgeTol = 1e-12;
  if (u < -kEdgeTol || u > 1.0 + kEdgeTol) return std::nullopt;
  const Vector3 qvec = tvec.cross(e1);
  const double v = dir.dot(qvec) * inv_det;
  if (v < -kEdgeTol || u + v > 1.0 + kEdgeTol) return std::nullopt;
  const double t = e2.dot(qvec) * inv_det;
  if (t < 0.0) return std::nullopt;
  return t;
}

}  // namespace scanmerge
