#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "scanmerge/geometry.h"
#include "scanmerge/registration.h"

namespace scanmerge {

// Noise models behind the whitening of both residual kinds.
//   pixel:  sigma = pixel_sigma * feature_scale^feature_scale_exponent
//   laser:  sigma = laser_sigma + range_coefficient * range
struct CovarianceModel {
  double pixel_sigma = 1.0;             // pixels
  double feature_scale_exponent = 1.0;
  double laser_sigma = 0.001;           // meters
  double range_coefficient = 1e-5;      // per meter of range

  double PixelSigma(double feature_scale) const;
  double LaserSigma(double range) const;
  void Validate() const;
};

struct Observation2D {
  int camera = 0;
  int point = 0;
  Vector2 pixel = Vector2::Zero();
  double feature_scale = 1.0;
};

// Laser point in its scan frame matched to an SfM-frame point. When point
// is a valid index the residual follows that live point, otherwise it uses
// the fixed anchor.
struct Observation3D {
  int scan = 0;
  Channel channel = Channel::kGround;
  Point3 laser_point = Point3::Zero();
  int point = -1;
  Point3 anchor = Point3::Zero();
};

// Rigid part of a scan-to-SfM similarity; the scale is shared by all scans.
struct ScanAlignment {
  Rotation3 rotation;
  Vector3 translation = Vector3::Zero();
};

struct MergeProblem {
  std::vector<CameraView> cameras;  // intrinsics fixed, poses optimized
  std::vector<Point3> points;
  std::vector<ScanAlignment> scans;
  double scale = 1.0;
  std::vector<Observation2D> observations2d;
  std::vector<Observation3D> observations3d;
  CovarianceModel covariance;
  double huber_delta = 1.0;
  double omega = 1.0;
  // Cameras held constant. The first camera fixes the rigid gauge.
  std::vector<int> fixed_cameras = {0};

  Sim3Transform ScanTransform(int scan) const;
  // Throws InvalidProblem on bad indices or parameters.
  void Validate() const;
};

// Problem seeded from an SfM state and coarse scan alignments. Each kept
// correspondence becomes a space residual, linked to its track when it has
// one. The shared scale starts at the median coarse scale.
MergeProblem AssembleMergeProblem(std::vector<CameraView> cameras,
                                  std::vector<Point3> points,
                                  std::vector<Observation2D> observations,
                                  std::span<const Correspondence3D> correspondences,
                                  const std::vector<bool>& keep,
                                  const std::vector<Sim3Transform>& coarse);

// Robust cost of a squared whitened norm: quadratic up to norm = delta,
// linear in the norm beyond.
double Huber(double squared_norm, double delta);
// d Huber / d squared_norm.
double HuberWeight(double squared_norm, double delta);

// Whitened reprojection residual, or nullopt if the point is not in front
// of the camera.
std::optional<Vector2> ReprojectionResidual(const CameraView& cam,
                                            const Point3& point,
                                            const Observation2D& obs,
                                            const CovarianceModel& cov);
std::optional<Vector2> ReprojectionResidual(const MergeProblem& problem,
                                            const Observation2D& obs);

// Whitened space residual s*R*x_laser + t - x_sfm.
Vector3 SpaceResidual(const MergeProblem& problem, const Observation3D& obs);

// Jacobians with respect to the local increments used by the solver:
// pose and scan blocks are [rotation vector (left-multiplied), translation],
// the scale block is d/d(log s).
struct ReprojectionJacobian {
  Eigen::Matrix<double, 2, 6> pose;
  Eigen::Matrix<double, 2, 3> point;
};
struct SpaceJacobian {
  Eigen::Matrix<double, 3, 6> scan;
  Eigen::Vector3d log_scale;
  Eigen::Matrix3d point;  // zero when anchored
};

std::optional<ReprojectionJacobian> ReprojectionJacobians(
    const CameraView& cam, const Point3& point, const Observation2D& obs,
    const CovarianceModel& cov);
SpaceJacobian SpaceJacobians(const MergeProblem& problem, const Observation3D& obs);

// Retractions matching the Jacobian parameterization.
RigidPose RetractPose(const RigidPose& pose, const Eigen::Matrix<double, 6, 1>& delta);
ScanAlignment RetractScan(const ScanAlignment& scan,
                          const Eigen::Matrix<double, 6, 1>& delta);

struct CostBreakdown {
  double reprojection = 0.0;  // sum of robustified reprojection terms
  double space = 0.0;         // sum of robustified space terms, unweighted
  int dropped = 0;            // reprojection terms behind their camera
  double Total(double omega) const { return reprojection + omega * space; }
};

CostBreakdown EvaluateCost(const MergeProblem& problem);

// Weight making the initial weighted space cost equal to the reprojection
// cost. Throws InvalidProblem when either pool is empty or zero.
double ComputeOmega(const MergeProblem& problem);
// omega scaled so that lg(initial space / reprojection cost ratio) moves by
// exponent.
double ScaledOmega(double omega, double exponent);

// Unwhitened RMS over valid terms: pixels per observation, meters per
// space correspondence.
double ReprojectionRms(const MergeProblem& problem);
double SpaceRms(const MergeProblem& problem);

struct SolveOptions {
  int max_iterations = 100;
  double function_tolerance = 1e-6;  // relative cost decrease
  double gradient_tolerance = 1e-12;  // max-norm of the gradient
  double parameter_tolerance = 1e-12;
  double initial_damping = 1e-4;
};

struct SolveReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double initial_reprojection_rms = 0.0;
  double final_reprojection_rms = 0.0;
  double initial_space_rms = 0.0;
  double final_space_rms = 0.0;
  std::string termination;
  std::vector<double> cost_trace;  // cost after each accepted step, initial first
  int dropped_residuals = 0;
};

// Levenberg-Marquardt over every free parameter (layout as in ComputeStep).
// Points are eliminated from the damped normal equations. Throws
// InvalidProblem for an invalid state or a non-finite initial cost.
SolveReport Solve(MergeProblem& problem, const SolveOptions& options = {});

// Damped Gauss-Newton step for the current state, ordered as
// [free cameras (6 each), scans (6 each), log-scale, points (3 each)].
// dense = true assembles and factors the full normal equations instead of
// the reduced system; intended for small problems and testing.
Eigen::VectorXd ComputeStep(const MergeProblem& problem, double damping, bool dense);

// Smallest and largest eigenvalue of the undamped reduced (point-eliminated)
// normal matrix; a strictly positive minimum means the gauge is fixed.
std::pair<double, double> ReducedSystemEigenRange(const MergeProblem& problem);

}  // namespace scanmerge
