#include "scanmerge/merge_ba.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "scanmerge/errors.h"

namespace scanmerge {

double CovarianceModel::PixelSigma(double feature_scale) const {
  return pixel_sigma * std::pow(feature_scale, feature_scale_exponent);
}

double CovarianceModel::LaserSigma(double range) const {
  return laser_sigma + range_coefficient * range;
}

void CovarianceModel::Validate() const {
  if (!(pixel_sigma > 0.0) || !(feature_scale_exponent > 0.0) || !(laser_sigma > 0.0) ||
      !(range_coefficient > 0.0)) {
    throw InvalidProblem("covariance model parameters must be positive");
  }
}

Sim3Transform MergeProblem::ScanTransform(int scan) const {
  return Sim3Transform(scale, scans[scan].rotation, scans[scan].translation);
}

void MergeProblem::Validate() const {
  covariance.Validate();
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidProblem("scale must be positive");
  if (!(huber_delta > 0.0)) throw InvalidProblem("Huber delta must be positive");
  if (!(omega >= 0.0) || !std::isfinite(omega)) throw InvalidProblem("omega must be >= 0");
  const int nc = static_cast<int>(cameras.size());
  const int np = static_cast<int>(points.size());
  const int ns = static_cast<int>(scans.size());
  for (const auto& o : observations2d) {
    if (o.camera < 0 || o.camera >= nc || o.point < 0 || o.point >= np) {
      throw InvalidProblem("2D observation references a missing camera or point");
    }
    if (!(o.feature_scale > 0.0)) throw InvalidProblem("feature scale must be positive");
  }
  for (const auto& o : observations3d) {
    if (o.scan < 0 || o.scan >= ns) throw InvalidProblem("3D observation references a missing scan");
    if (o.point >= np) throw InvalidProblem("3D observation references a missing point");
  }
  for (int c : fixed_cameras) {
    if (c < 0 || c >= nc) throw InvalidProblem("fixed camera index out of range");
  }
  for (const auto& cam : cameras) {
    if (!cam.pose.rotation.matrix().allFinite() || !cam.pose.translation.allFinite()) {
      throw InvalidProblem("camera pose is not finite");
    }
  }
  for (const auto& x : points) {
    if (!x.allFinite()) throw InvalidProblem("point is not finite");
  }
  for (const auto& s : scans) {
    if (!s.rotation.matrix().allFinite() || !s.translation.allFinite()) {
      throw InvalidProblem("scan alignment is not finite");
    }
  }
  for (const auto& o : observations2d) {
    if (!o.pixel.allFinite()) throw InvalidProblem("observed pixel is not finite");
  }
  for (const auto& o : observations3d) {
    if (!o.laser_point.allFinite() || !o.anchor.allFinite()) {
      throw InvalidProblem("laser point or anchor is not finite");
    }
  }
}

MergeProblem AssembleMergeProblem(std::vector<CameraView> cameras,
                                  std::vector<Point3> points,
                                  std::vector<Observation2D> observations,
                                  std::span<const Correspondence3D> correspondences,
                                  const std::vector<bool>& keep,
                                  const std::vector<Sim3Transform>& coarse) {
  if (keep.size() != correspondences.size()) {
    throw InvalidProblem("keep mask size does not match the correspondences");
  }
  MergeProblem p;
  p.cameras = std::move(cameras);
  p.points = std::move(points);
  p.observations2d = std::move(observations);
  std::vector<double> scales;
  for (const Sim3Transform& t : coarse) {
    p.scans.push_back({t.rotation(), t.translation()});
    scales.push_back(t.scale());
  }
  if (!scales.empty()) {
    std::sort(scales.begin(), scales.end());
    const size_t n = scales.size();
    p.scale = n % 2 ? scales[n / 2] : 0.5 * (scales[n / 2 - 1] + scales[n / 2]);
  }
  for (size_t i = 0; i < correspondences.size(); ++i) {
    if (!keep[i]) continue;
    const Correspondence3D& c = correspondences[i];
    Observation3D o;
    o.scan = c.scan;
    o.channel = c.channel;
    o.laser_point = c.source;
    o.point = c.track;
    o.anchor = c.target;
    p.observations3d.push_back(o);
  }
  p.Validate();
  return p;
}

double Huber(double squared_norm, double delta) {
  const double d2 = delta * delta;
  if (squared_norm <= d2) return squared_norm;
  return 2.0 * delta * std::sqrt(squared_norm) - d2;
}

double HuberWeight(double squared_norm, double delta) {
  if (squared_norm <= delta * delta) return 1.0;
  return delta / std::sqrt(squared_norm);
}

std::optional<Vector2> ReprojectionResidual(const CameraView& cam,
                                            const Point3& point,
                                            const Observation2D& obs,
                                            const CovarianceModel& cov) {
  const auto proj = ProjectPoint(cam, point);
  if (!proj) return std::nullopt;
  return (obs.pixel - proj->pixel) / cov.PixelSigma(obs.feature_scale);
}

std::optional<Vector2> ReprojectionResidual(const MergeProblem& problem,
                                            const Observation2D& obs) {
  return ReprojectionResidual(problem.cameras[obs.camera], problem.points[obs.point],
                              obs, problem.covariance);
}

namespace {

const Point3& SpaceTarget(const MergeProblem& problem, const Observation3D& obs) {
  return obs.point >= 0 ? problem.points[obs.point] : obs.anchor;
}

}  // namespace

Vector3 SpaceResidual(const MergeProblem& problem, const Observation3D& obs) {
  const ScanAlignment& scan = problem.scans[obs.scan];
  const Vector3 mapped = problem.scale * (scan.rotation * obs.laser_point) + scan.translation;
  const double sigma = problem.covariance.LaserSigma(obs.laser_point.norm());
  return (mapped - SpaceTarget(problem, obs)) / sigma;
}

std::optional<ReprojectionJacobian> ReprojectionJacobians(
    const CameraView& cam, const Point3& point, const Observation2D& obs,
    const CovarianceModel& cov) {
  const Matrix3& r = cam.pose.rotation.matrix();
  const Vector3 rotated = r * point;
  const Vector3 pc = rotated + cam.pose.translation;
  if (!(pc.z() > 0.0)) return std::nullopt;
  const auto& k = cam.intrinsics;
  const double iz = 1.0 / pc.z();
  Eigen::Matrix<double, 2, 3> dproj;
  dproj << k.fx * iz, 0.0, -k.fx * pc.x() * iz * iz, 0.0, k.fy * iz,
      -k.fy * pc.y() * iz * iz;
  // Residual is (observed - projected) / sigma.
  const double scale = -1.0 / cov.PixelSigma(obs.feature_scale);
  ReprojectionJacobian jac;
  jac.pose.leftCols<3>() = scale * dproj * (-Skew(rotated));
  jac.pose.rightCols<3>() = scale * dproj;
  jac.point = scale * dproj * r;
  return jac;
}

SpaceJacobian SpaceJacobians(const MergeProblem& problem, const Observation3D& obs) {
  const ScanAlignment& scan = problem.scans[obs.scan];
  const double inv_sigma = 1.0 / problem.covariance.LaserSigma(obs.laser_point.norm());
  const Vector3 rotated = problem.scale * (scan.rotation * obs.laser_point);
  SpaceJacobian jac;
  jac.scan.leftCols<3>() = -Skew(rotated) * inv_sigma;
  jac.scan.rightCols<3>() = Matrix3::Identity() * inv_sigma;
  jac.log_scale = rotated * inv_sigma;
  jac.point = obs.point >= 0 ? Matrix3(-Matrix3::Identity() * inv_sigma) : Matrix3::Zero();
  return jac;
}

RigidPose RetractPose(const RigidPose& pose, const Eigen::Matrix<double, 6, 1>& delta) {
  RigidPose out;
  out.rotation = Rotation3::Orthonormalized(
      (Rotation3::Exp(delta.head<3>()) * pose.rotation).matrix());
  out.translation = pose.translation + delta.tail<3>();
  return out;
}

ScanAlignment RetractScan(const ScanAlignment& scan,
                          const Eigen::Matrix<double, 6, 1>& delta) {
  ScanAlignment out;
  out.rotation = Rotation3::Orthonormalized(
      (Rotation3::Exp(delta.head<3>()) * scan.rotation).matrix());
  out.translation = scan.translation + delta.tail<3>();
  return out;
}

CostBreakdown EvaluateCost(const MergeProblem& problem) {
  CostBreakdown cost;
  for (const auto& obs : problem.observations2d) {
    const auto r = ReprojectionResidual(problem, obs);
    if (!r) {
      ++cost.dropped;
      continue;
    }
    cost.reprojection += Huber(r->squaredNorm(), problem.huber_delta);
  }
  for (const auto& obs : problem.observations3d) {
    cost.space += Huber(SpaceResidual(problem, obs).squaredNorm(), problem.huber_delta);
  }
  return cost;
}

double ComputeOmega(const MergeProblem& problem) {
  problem.Validate();
  if (problem.observations2d.empty() || problem.observations3d.empty()) {
    throw InvalidProblem("both residual pools must be non-empty to balance them");
  }
  const CostBreakdown cost = EvaluateCost(problem);
  if (!(cost.space > 0.0)) throw InvalidProblem("initial space cost is zero");
  if (!(cost.reprojection > 0.0)) throw InvalidProblem("initial reprojection cost is zero");
  return cost.reprojection / cost.space;
}

double ScaledOmega(double omega, double exponent) {
  return omega * std::pow(10.0, exponent);
}

double ReprojectionRms(const MergeProblem& problem) {
  double sq = 0.0;
  int n = 0;
  for (const auto& obs : problem.observations2d) {
    const auto proj = ProjectPoint(problem.cameras[obs.camera], problem.points[obs.point]);
    if (!proj) continue;
    sq += (obs.pixel - proj->pixel).squaredNorm();
    ++n;
  }
  return n == 0 ? 0.0 : std::sqrt(sq / n);
}

double SpaceRms(const MergeProblem& problem) {
  double sq = 0.0;
  for (const auto& obs : problem.observations3d) {
    const Vector3 mapped = problem.ScanTransform(obs.scan).Apply(obs.laser_point);
    sq += (mapped - SpaceTarget(problem, obs)).squaredNorm();
  }
  return problem.observations3d.empty()
             ? 0.0
             : std::sqrt(sq / static_cast<double>(problem.observations3d.size()));
}

namespace {

// Offsets of the non-point parameter blocks in the reduced system.
struct Layout {
  std::vector<int> camera;  // -1 when fixed
  std::vector<int> scan;
  int log_scale = -1;
  int reduced = 0;
  int points = 0;

  explicit Layout(const MergeProblem& p) {
    std::vector<bool> fixed(p.cameras.size(), false);
    for (int c : p.fixed_cameras) fixed[c] = true;
    camera.assign(p.cameras.size(), -1);
    for (size_t c = 0; c < p.cameras.size(); ++c) {
      if (fixed[c]) continue;
      camera[c] = reduced;
      reduced += 6;
    }
    scan.assign(p.scans.size(), -1);
    for (size_t s = 0; s < p.scans.size(); ++s) {
      scan[s] = reduced;
      reduced += 6;
    }
    if (!p.observations3d.empty()) log_scale = reduced++;
    points = static_cast<int>(p.points.size());
  }

  int total() const { return reduced + 3 * points; }
};

struct Block {
  int offset;
  Eigen::MatrixXd jac;  // rows x block size
};

// One linearized residual: whitened value, robust weight (already scaled by
// omega for space terms) and Jacobian blocks.
struct Linearized {
  Eigen::VectorXd r;
  double weight = 1.0;
  std::vector<Block> blocks;
  int point = -1;
  Eigen::MatrixXd point_jac;
};

template <typename Fn>
void ForEachLinearized(const MergeProblem& p, const Layout& layout, Fn&& fn) {
  for (const auto& obs : p.observations2d) {
    const CameraView& cam = p.cameras[obs.camera];
    const Point3& x = p.points[obs.point];
    const auto r = ReprojectionResidual(cam, x, obs, p.covariance);
    const auto jac = ReprojectionJacobians(cam, x, obs, p.covariance);
    if (!r || !jac) continue;
    Linearized lin;
    lin.r = *r;
    lin.weight = HuberWeight(r->squaredNorm(), p.huber_delta);
    if (layout.camera[obs.camera] >= 0) {
      lin.blocks.push_back({layout.camera[obs.camera], jac->pose});
    }
    lin.point = obs.point;
    lin.point_jac = jac->point;
    fn(lin);
  }
  if (p.omega == 0.0) return;
  for (const auto& obs : p.observations3d) {
    const Vector3 r = SpaceResidual(p, obs);
    const SpaceJacobian jac = SpaceJacobians(p, obs);
    Linearized lin;
    lin.r = r;
    lin.weight = p.omega * HuberWeight(r.squaredNorm(), p.huber_delta);
    lin.blocks.push_back({layout.scan[obs.scan], jac.scan});
    lin.blocks.push_back({layout.log_scale, jac.log_scale});
    if (obs.point >= 0) {
      lin.point = obs.point;
      lin.point_jac = jac.point;
    }
    fn(lin);
  }
}

struct PointSystem {
  Matrix3 v = Matrix3::Zero();
  Vector3 g = Vector3::Zero();
  // Coupling to reduced blocks: offset -> (block size x 3).
  std::vector<Block> w;

  Eigen::MatrixXd& Coupling(int offset, int size) {
    for (auto& b : w) {
      if (b.offset == offset) return b.jac;
    }
    w.push_back({offset, Eigen::MatrixXd::Zero(size, 3)});
    return w.back().jac;
  }
};

struct NormalEquations {
  Eigen::MatrixXd u;  // reduced block
  Eigen::VectorXd g;  // reduced gradient (J^T W r)
  std::vector<PointSystem> points;
};

NormalEquations BuildNormalEquations(const MergeProblem& p, const Layout& layout) {
  NormalEquations ne;
  ne.u = Eigen::MatrixXd::Zero(layout.reduced, layout.reduced);
  ne.g = Eigen::VectorXd::Zero(layout.reduced);
  ne.points.resize(layout.points);
  ForEachLinearized(p, layout, [&](const Linearized& lin) {
    const double w = lin.weight;
    for (const Block& a : lin.blocks) {
      const int na = static_cast<int>(a.jac.cols());
      ne.g.segment(a.offset, na) += w * a.jac.transpose() * lin.r;
      for (const Block& b : lin.blocks) {
        ne.u.block(a.offset, b.offset, na, b.jac.cols()) += w * a.jac.transpose() * b.jac;
      }
    }
    if (lin.point < 0) return;
    PointSystem& ps = ne.points[lin.point];
    ps.v += w * lin.point_jac.transpose() * lin.point_jac;
    ps.g += w * lin.point_jac.transpose() * lin.r;
    for (const Block& a : lin.blocks) {
      ps.Coupling(a.offset, static_cast<int>(a.jac.cols())) +=
          w * a.jac.transpose() * lin.point_jac;
    }
  });
  return ne;
}

constexpr double kMinDiagonal = 1e-6;

Eigen::VectorXd DampedDiagonal(const Eigen::VectorXd& diag, double damping) {
  return damping * diag.cwiseMax(kMinDiagonal);
}

Eigen::VectorXd SolveReduced(const NormalEquations& ne, const Layout& layout,
                             double damping) {
  Eigen::MatrixXd s = ne.u;
  s.diagonal() += DampedDiagonal(ne.u.diagonal(), damping);
  Eigen::VectorXd rhs = -ne.g;
  std::vector<Matrix3> v_inv(layout.points);
  for (int k = 0; k < layout.points; ++k) {
    const PointSystem& ps = ne.points[k];
    Matrix3 v = ps.v;
    v.diagonal() += DampedDiagonal(ps.v.diagonal(), damping);
    v_inv[k] = v.inverse();
    for (const Block& a : ps.w) {
      const Eigen::MatrixXd wa_vinv = a.jac * v_inv[k];
      rhs.segment(a.offset, a.jac.rows()) += wa_vinv * ps.g;
      for (const Block& b : ps.w) {
        s.block(a.offset, b.offset, a.jac.rows(), b.jac.rows()) -=
            wa_vinv * b.jac.transpose();
      }
    }
  }
  Eigen::VectorXd step = Eigen::VectorXd::Zero(layout.total());
  if (layout.reduced > 0) step.head(layout.reduced) = s.ldlt().solve(rhs);
  for (int k = 0; k < layout.points; ++k) {
    const PointSystem& ps = ne.points[k];
    Vector3 b = -ps.g;
    for (const Block& a : ps.w) {
      b -= a.jac.transpose() * step.segment(a.offset, a.jac.rows());
    }
    step.segment<3>(layout.reduced + 3 * k) = v_inv[k] * b;
  }
  return step;
}

Eigen::VectorXd SolveDense(const MergeProblem& p, const Layout& layout, double damping) {
  const int n = layout.total();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  ForEachLinearized(p, layout, [&](const Linearized& lin) {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(lin.r.size(), n);
    for (const Block& a : lin.blocks) j.block(0, a.offset, j.rows(), a.jac.cols()) += a.jac;
    if (lin.point >= 0) j.block(0, layout.reduced + 3 * lin.point, j.rows(), 3) += lin.point_jac;
    h += lin.weight * j.transpose() * j;
    g += lin.weight * j.transpose() * lin.r;
  });
  h.diagonal() += DampedDiagonal(h.diagonal(), damping);
  return h.ldlt().solve(-g);
}

void ApplyStep(MergeProblem& p, const Layout& layout, const Eigen::VectorXd& step) {
  for (size_t c = 0; c < p.cameras.size(); ++c) {
    if (layout.camera[c] < 0) continue;
    p.cameras[c].pose = RetractPose(p.cameras[c].pose, step.segment<6>(layout.camera[c]));
  }
  for (size_t s = 0; s < p.scans.size(); ++s) {
    p.scans[s] = RetractScan(p.scans[s], step.segment<6>(layout.scan[s]));
  }
  if (layout.log_scale >= 0) p.scale *= std::exp(step(layout.log_scale));
  for (int k = 0; k < layout.points; ++k) {
    p.points[k] += step.segment<3>(layout.reduced + 3 * k);
  }
}

double GradientMaxNorm(const NormalEquations& ne) {
  double m = ne.g.size() ? ne.g.cwiseAbs().maxCoeff() : 0.0;
  for (const auto& ps : ne.points) m = std::max(m, ps.g.cwiseAbs().maxCoeff());
  return m;
}

// Predicted decrease of the half cost, -(g.d + 0.5 d.H.d), from the
// linearization; returned in full-cost units.
double ModelDecrease(const MergeProblem& p, const Layout& layout,
                     const Eigen::VectorXd& step) {
  double decrease = 0.0;
  ForEachLinearized(p, layout, [&](const Linearized& lin) {
    Eigen::VectorXd jd = Eigen::VectorXd::Zero(lin.r.size());
    for (const Block& a : lin.blocks) jd += a.jac * step.segment(a.offset, a.jac.cols());
    if (lin.point >= 0) jd += lin.point_jac * step.segment<3>(layout.reduced + 3 * lin.point);
    decrease -= lin.weight * (2.0 * lin.r.dot(jd) + jd.squaredNorm());
  });
  return decrease;
}

double ParameterNorm(const MergeProblem& p) {
  double sq = p.scale * p.scale;
  for (const auto& c : p.cameras) sq += c.pose.translation.squaredNorm();
  for (const auto& s : p.scans) sq += s.translation.squaredNorm();
  for (const auto& x : p.points) sq += x.squaredNorm();
  return std::sqrt(sq);
}

}  // namespace

Eigen::VectorXd ComputeStep(const MergeProblem& problem, double damping, bool dense) {
  problem.Validate();
  const Layout layout(problem);
  if (dense) return SolveDense(problem, layout, damping);
  return SolveReduced(BuildNormalEquations(problem, layout), layout, damping);
}

std::pair<double, double> ReducedSystemEigenRange(const MergeProblem& problem) {
  problem.Validate();
  const Layout layout(problem);
  const NormalEquations ne = BuildNormalEquations(problem, layout);
  Eigen::MatrixXd s = ne.u;
  for (int k = 0; k < layout.points; ++k) {
    const PointSystem& ps = ne.points[k];
    if (ps.w.empty()) continue;
    const Matrix3 v_inv = ps.v.inverse();
    for (const Block& a : ps.w) {
      for (const Block& b : ps.w) {
        s.block(a.offset, b.offset, a.jac.rows(), b.jac.rows()) -=
            a.jac * v_inv * b.jac.transpose();
      }
    }
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
  return {eig.eigenvalues().minCoeff(), eig.eigenvalues().maxCoeff()};
}

SolveReport Solve(MergeProblem& problem, const SolveOptions& options) {
  problem.Validate();
  const Layout layout(problem);
  SolveReport report;
  CostBreakdown breakdown = EvaluateCost(problem);
  double cost = breakdown.Total(problem.omega);
  if (!std::isfinite(cost)) throw InvalidProblem("initial cost is not finite");
  report.initial_cost = cost;
  report.initial_reprojection_rms = ReprojectionRms(problem);
  report.initial_space_rms = SpaceRms(problem);
  report.cost_trace.push_back(cost);
  report.termination = "max-iterations";

  double damping = options.initial_damping;
  double growth = 2.0;
  NormalEquations ne = BuildNormalEquations(problem, layout);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (GradientMaxNorm(ne) <= options.gradient_tolerance) {
      report.termination = "gradient-tolerance";
      break;
    }
    report.iterations = iter + 1;
    const Eigen::VectorXd step = SolveReduced(ne, layout, damping);
    if (!step.allFinite()) {
      damping *= growth;
      growth *= 2.0;
      continue;
    }
    if (step.norm() <= options.parameter_tolerance * (ParameterNorm(problem) + options.parameter_tolerance)) {
      report.termination = "parameter-tolerance";
      break;
    }
    const double predicted = ModelDecrease(problem, layout, step);
    MergeProblem trial = problem;
    ApplyStep(trial, layout, step);
    const double trial_cost = EvaluateCost(trial).Total(trial.omega);
    const double actual = cost - trial_cost;
    if (std::isfinite(trial_cost) && actual > 0.0 && predicted > 0.0) {
      const double rho = actual / predicted;
      problem = std::move(trial);
      const double previous = cost;
      cost = trial_cost;
      report.cost_trace.push_back(cost);
      damping *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      growth = 2.0;
      if (actual <= options.function_tolerance * previous) {
        report.termination = "function-tolerance";
        break;
      }
      ne = BuildNormalEquations(problem, layout);
    } else {
      damping *= growth;
      growth *= 2.0;
      if (damping > 1e32) {
        report.termination = "damping-limit";
        break;
      }
    }
  }
  breakdown = EvaluateCost(problem);
  report.final_cost = breakdown.Total(problem.omega);
  report.dropped_residuals = breakdown.dropped;
  report.final_reprojection_rms = ReprojectionRms(problem);
  report.final_space_rms = SpaceRms(problem);
  return report;
}

}  // namespace scanmerge
