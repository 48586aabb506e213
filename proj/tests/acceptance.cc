// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "merge_fixture.h"
#include "oracles.h"
#include "scanmerge/merge_ba.h"
#include "scanmerge/metrics.h"
#include "scanmerge/pipeline.h"
#include "scanmerge/planner.h"
#include "scanmerge/registration.h"
#include "scanmerge/scene_sim.h"
#include "scenes.h"
#include "synth_oracle.h"

using namespace scanmerge;

namespace {

using Clock = std::chrono::steady_clock;

double Since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void Report(int id, const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %d. %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(),
              o.detail.c_str());
  std::fflush(stdout);
}

template <typename... Args>
std::string Fmt(const char* fmt, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

double SimDistance(const Sim3Transform& a, const Sim3Transform& b, double* rot_deg,
                   double* scale_rel) {
  *rot_deg = a.rotation().AngleTo(b.rotation()) * 180.0 / M_PI;
  *scale_rel = std::abs(a.scale() / b.scale() - 1.0);
  return (a.translation() - b.translation()).norm();
}

// ---------------------------------------------------------------- 1

Outcome PlannerOracle() {
  const auto t0 = Clock::now();
  int scenes = 0, mismatches = 0;
  for (std::uint64_t seed = 1; seed <= 24; ++seed) {
    const int candidates = 4 + static_cast<int>(seed % 9);  // 4..12
    const GroundTruthBundle b = oracle::TwoRoomScene(100 + seed, candidates);
    const auto records = ComputeVisibilityRecords(b.mesh, b.stations, 200, 0.1);
    std::vector<std::vector<int>> facets;
    std::vector<double> scores;
    for (const auto& r : records) {
      facets.push_back(r.facets);
      scores.push_back(r.score);
    }
    for (double t_c : {0.125, 0.5, 1.0}) {
      PlanOptions opt;
      opt.coverage_threshold = t_c;
      if (PlanLocations(records, opt).selected != oracle::NaivePlan(facets, scores, t_c)) {
        ++mismatches;
      }
    }
    ++scenes;
  }
  const double secs = Since(t0);
  return {mismatches == 0 && scenes >= 20 && secs < 10.0,
          Fmt("%d scenes with 4..12 candidates, 3 thresholds each, %d mismatches, %.2f s",
              scenes, mismatches, secs)};
}

// ---------------------------------------------------------------- 2

Outcome PlannerPreference() {
  int hits = 0;
  std::string firsts;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const oracle::CoarseWallScene s = oracle::MakeCoarseWallScene(seed);
    const auto records =
        ComputeVisibilityRecords(s.bundle.mesh, s.candidates, kDefaultRayCount, 0.1);
    const PlanResult plan = PlanLocations(records);
    // Location scores recomputed with the exhaustive facet score.
    int best = 0;
    double best_score = -1.0;
    for (size_t i = 0; i < records.size(); ++i) {
      double sum = 0.0;
      for (int f : records[i].facets) sum += FacetScore(s.bundle.mesh, f, 0.1);
      const double a = records[i].facets.empty() ? 0.0 : sum / records[i].facets.size();
      if (a > best_score) {
        best_score = a;
        best = static_cast<int>(i);
      }
    }
    const int first = plan.selected.front();
    hits += (first == s.coarse_bay && best == s.coarse_bay) ? 1 : 0;
    firsts += std::to_string(first);
  }
  return {hits == 10, Fmt("first pick faces the coarse wall in %d/10 seeds (picks %s)", hits,
                          firsts.c_str())};
}

// ---------------------------------------------------------------- 3

Outcome CoverageTrend() {
  const GroundTruthBundle b = GenerateScene(SceneSpec());
  const auto records =
      ComputeVisibilityRecords(b.mesh, b.stations, kDefaultRayCount, kDefaultNeighborRadius);
  std::vector<int> counts;
  std::string list;
  for (double t_c : {1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2, 1.0}) {
    PlanOptions opt;
    opt.coverage_threshold = t_c;
    counts.push_back(PlanLocations(records, opt).num_selected());
    list += (list.empty() ? "" : ",") + std::to_string(counts.back());
  }
  bool monotone = true;
  for (size_t i = 1; i < counts.size(); ++i) monotone = monotone && counts[i] >= counts[i - 1];
  return {monotone, "scan counts over t_c = 1/16..1: " + list};
}

// ---------------------------------------------------------------- 4

Outcome Sim3Recovery() {
  std::mt19937_64 rng(4);
  double worst_exact = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Sim3Transform truth = oracle::RandomSim3(rng, 0.5, 2.0);
    const auto pairs = oracle::SyntheticPairs(rng, truth, 3 + trial % 30, 0.0, 0.0, 5.0, nullptr);
    double rot, scale;
    const double t = SimDistance(UmeyamaSim3(pairs), truth, &rot, &scale);
    worst_exact = std::max({worst_exact, t, rot * M_PI / 180.0,
                            std::abs(UmeyamaSim3(pairs).scale() - truth.scale())});
  }

  // RANSAC on the default scene's track points with 30% outliers.
  const GroundTruthBundle b = GenerateScene(SceneSpec());
  std::uniform_int_distribution<size_t> pick(0, b.points.size() - 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 0.01);
  double worst_t = 0.0, worst_r = 0.0, worst_s = 0.0;
  int failed = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Sim3Transform truth = oracle::RandomSim3(rng, 0.5, 2.0);
    std::vector<Correspondence3D> pairs;
    for (int i = 0; i < 300; ++i) {
      Correspondence3D c;
      c.source = b.points[pick(rng)];
      if (i < 90) {
        Point3 wrong;
        do {
          const double x = u01(rng), y = u01(rng), z = u01(rng);
          wrong = Point3(x, y, z).cwiseProduct(b.spec.size);
        } while ((wrong - c.source).norm() < 0.5);
        c.target = truth.Apply(wrong);
      } else {
        const double x = g(rng), y = g(rng), z = g(rng);
        c.target = truth.Apply(c.source) + Vector3(x, y, z);
      }
      pairs.push_back(c);
    }
    try {
      RansacOptions opt;  // 100 samples, 0.1 m
      opt.seed = trial;
      const RansacReport rep = RansacSim3(pairs, opt);
      double rot, scale;
      worst_t = std::max(worst_t, SimDistance(rep.transform, truth, &rot, &scale));
      worst_r = std::max(worst_r, rot);
      worst_s = std::max(worst_s, scale);
    } catch (const RegistrationFailed&) {
      ++failed;
    }
  }
  const bool pass = worst_exact < 1e-9 && failed == 0 && worst_t < 0.005 && worst_r < 0.1 &&
                    worst_s < 1e-3;
  return {pass, Fmt("exact worst %.2e over 1000; RANSAC 50 trials: %d failures, worst "
                    "%.2f mm / %.4f deg / %.2e scale",
                    worst_exact, failed, worst_t * 1000, worst_r, worst_s)};
}

// ---------------------------------------------------------------- 5

Eigen::Matrix<double, 6, 1> Unit6(int i, double h) {
  Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
  d(i) = h;
  return d;
}

double RelErr(const Eigen::MatrixXd& a, const Eigen::MatrixXd& n) {
  return (a - n).norm() / std::max(n.norm(), 1e-12);
}

double WorstJacobianError() {
  std::mt19937_64 rng(5);
  const double h = 1e-6;
  double worst = 0.0;
  CovarianceModel cov;
  for (int state = 0; state < 100; ++state) {
    CameraView cam;
    cam.intrinsics = CameraIntrinsics::Create(500, 500, 320, 240, 640, 480);
    cam.pose.rotation = oracle::RandomRotation(rng);
    cam.pose.translation = oracle::RandomPoint(rng, 3.0);
    const Point3 x = cam.pose.rotation.Inverse() * (Point3(0, 0, 5) - cam.pose.translation) +
                     oracle::RandomPoint(rng, 1.0);
    const Observation2D obs{0, 0, Vector2(300, 250), 1.5};
    const auto jac = ReprojectionJacobians(cam, x, obs, cov);
    Eigen::Matrix<double, 2, 6> np;
    Eigen::Matrix<double, 2, 3> nx;
    for (int i = 0; i < 6; ++i) {
      CameraView a = cam, b = cam;
      a.pose = RetractPose(cam.pose, Unit6(i, h));
      b.pose = RetractPose(cam.pose, Unit6(i, -h));
      np.col(i) = (*ReprojectionResidual(a, x, obs, cov) - *ReprojectionResidual(b, x, obs, cov)) /
                  (2 * h);
    }
    for (int i = 0; i < 3; ++i) {
      const Vector3 d = h * Vector3::Unit(i);
      nx.col(i) = (*ReprojectionResidual(cam, x + d, obs, cov) -
                   *ReprojectionResidual(cam, x - d, obs, cov)) / (2 * h);
    }
    worst = std::max({worst, RelErr(jac->pose, np), RelErr(jac->point, nx)});

    MergeProblem p;
    p.points = {oracle::RandomPoint(rng, 10.0)};
    const Sim3Transform t = oracle::RandomSim3(rng);
    p.scans = {{t.rotation(), t.translation()}};
    p.scale = t.scale();
    Observation3D o;
    o.laser_point = oracle::RandomPoint(rng, 10.0);
    o.point = 0;
    const SpaceJacobian sj = SpaceJacobians(p, o);
    Eigen::Matrix<double, 3, 6> ns;
    for (int i = 0; i < 6; ++i) {
      MergeProblem a = p, b = p;
      a.scans[0] = RetractScan(p.scans[0], Unit6(i, h));
      b.scans[0] = RetractScan(p.scans[0], Unit6(i, -h));
      ns.col(i) = (SpaceResidual(a, o) - SpaceResidual(b, o)) / (2 * h);
    }
    MergeProblem a = p, b = p;
    a.scale *= std::exp(h);
    b.scale *= std::exp(-h);
    const Vector3 nl = (SpaceResidual(a, o) - SpaceResidual(b, o)) / (2 * h);
    Eigen::Matrix3d npt;
    for (int i = 0; i < 3; ++i) {
      MergeProblem c = p, d = p;
      c.points[0] += h * Vector3::Unit(i);
      d.points[0] -= h * Vector3::Unit(i);
      npt.col(i) = (SpaceResidual(c, o) - SpaceResidual(d, o)) / (2 * h);
    }
    worst = std::max({worst, RelErr(sj.scan, ns), RelErr(sj.log_scale, nl), RelErr(sj.point, npt)});
  }
  return worst;
}

Outcome BundleAdjustment() {
  const double jac = WorstJacobianError();
  const GroundTruthBundle b = GenerateScene(SceneSpec());
  const MergeProblem truth = oracle::TruthProblem(b);
  MergeProblem p = truth;
  std::mt19937_64 rng(55);
  oracle::Perturb(p, rng, 1.0, 0.05, 1.02, 0.01);
  p.omega = ComputeOmega(p);
  const auto t0 = Clock::now();
  const SolveReport rep = Solve(p);
  const double secs = Since(t0);
  bool monotone = true;
  for (size_t i = 1; i < rep.cost_trace.size(); ++i) {
    monotone = monotone && rep.cost_trace[i] <= rep.cost_trace[i - 1];
  }
  double worst_center = 0.0;
  for (size_t c = 0; c < p.cameras.size(); ++c) {
    worst_center = std::max(worst_center, (p.cameras[c].Center() - truth.cameras[c].Center()).norm());
  }
  const double scale_err = std::abs(p.scale / truth.scale - 1.0);
  const bool pass = jac < 1e-4 && monotone && worst_center < 0.002 && scale_err < 1e-3 &&
                    secs < 60.0;
  return {pass, Fmt("Jacobian rel err %.1e; %zu cameras, %zu points, %zu scans; %d iterations "
                    "(%s), cost %s; worst center %.3f mm, scale err %.1e, %.1f s",
                    jac, p.cameras.size(), p.points.size(), p.scans.size(), rep.iterations,
                    rep.termination.c_str(), monotone ? "monotone" : "NOT monotone",
                    worst_center * 1000, scale_err, secs)};
}

// ---------------------------------------------------------------- 6, 7

struct NoisyScene {
  GroundTruthBundle bundle;
  CorrespondenceSet set;
  oracle::CoarseResult coarse;
};

NoisyScene MakeNoisyScene(std::uint64_t seed, double outlier_fraction) {
  SceneSpec spec;
  spec.seed = seed;
  spec.noise.outlier_fraction = outlier_fraction;
  NoisyScene s;
  s.bundle = GenerateScene(spec);
  std::vector<int> scans(s.bundle.stations.size());
  for (size_t i = 0; i < scans.size(); ++i) scans[i] = static_cast<int>(i);
  s.set = SimulateMatches(s.bundle, scans, spec.noise);
  s.coarse = oracle::CoarseRegister(s.set, 100 * seed);
  return s;
}

double FineRms(const NoisyScene& s, double exponent, double* rc = nullptr) {
  MergeProblem p = BuildMergeProblem(s.set, s.coarse.transforms, s.coarse.keep);
  p.omega = ScaledOmega(ComputeOmega(p), exponent);
  if (rc) {
    const CostBreakdown c = EvaluateCost(p);
    *rc = p.omega * c.space / c.reprojection;
  }
  Solve(p);
  std::vector<Sim3Transform> fine;
  for (size_t i = 0; i < p.scans.size(); ++i) fine.push_back(p.ScanTransform(static_cast<int>(i)));
  return RmsReferenceError(s.set.references, fine, &p.points);
}

Outcome OmegaSweep() {
  const NoisyScene s = MakeNoisyScene(1, 0.0);
  std::string curve;
  int best = 0;
  double best_rms = 1e300, rc_at_zero = 0.0;
  for (int e = -3; e <= 3; ++e) {
    double rc = 0.0;
    const double rms = FineRms(s, e, &rc);
    if (e == 0) rc_at_zero = rc;
    if (rms < best_rms) {
      best_rms = rms;
      best = e;
    }
    curve += Fmt("%s%+d:%.2f", curve.empty() ? "" : " ", e, rms * 1000);
  }
  const bool pass = best >= -1 && best <= 1 && std::abs(rc_at_zero - 1.0) < 1e-12;
  return {pass, Fmt("min at lg r_c = %+d; |r_c - 1| = %.1e after compute_omega; RMS mm %s",
                    best, std::abs(rc_at_zero - 1.0), curve.c_str())};
}

Outcome FineBeatsCoarse() {
  int ok = 0, total = 0;
  std::string list;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (double outliers : {0.0, 0.3}) {
      const NoisyScene s = MakeNoisyScene(seed, outliers);
      const double coarse = RmsReferenceError(s.set.references, s.coarse.transforms);
      const double fine = FineRms(s, 0.0);
      ++total;
      ok += fine <= coarse ? 1 : 0;
      list += Fmt("%s%.1f>%.1f", list.empty() ? "" : " ", coarse * 1000, fine * 1000);
    }
  }
  return {ok == total, Fmt("fine <= coarse on %d/%d scenes (5 seeds x {0, 30%%} outliers); "
                           "coarse>fine mm: %s",
                           ok, total, list.c_str())};
}

// ---------------------------------------------------------------- 8

Outcome Metrics() {
  std::mt19937_64 rng(8);
  int mismatches = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point3> gt, recon;
    const int n = 200 + 90 * trial;  // up to 1910 points
    for (int i = 0; i < n; ++i) gt.push_back(oracle::RandomPoint(rng, 1.0));
    for (int i = 0; i < n; ++i) recon.push_back(gt[i] + oracle::RandomPoint(rng, 0.08));
    const double tau = 0.03 + 0.005 * trial;
    const PrfReport got = PrecisionRecallFscore(recon, gt, tau);
    const PrfReport want = oracle::NaivePrf(recon, gt, tau);
    if (got.precision != want.precision || got.recall != want.recall ||
        std::abs(got.fscore - want.fscore) > 1e-12) {
      ++mismatches;
    }
  }
  std::vector<Point3> a, b;
  const double tau = 0.01;
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 30; ++j) {
      a.emplace_back((i + 0.25) * tau, (j + 0.25) * tau, 0.001);
      b.emplace_back((i + 0.25) * tau + 5.0, (j + 0.25) * tau, 0.001);
    }
  }
  std::vector<Point3> both = a;
  both.insert(both.end(), b.begin(), b.end());
  const PrfReport same = PrecisionRecallFscore(both, both, tau);
  const PrfReport half = PrecisionRecallFscore(a, both, tau);
  const bool pass = mismatches == 0 && same.fscore == 100.0 &&
                    std::abs(half.precision - 100.0) < 1e-6 &&
                    std::abs(half.recall - 50.0) < 1e-6 &&
                    std::abs(half.fscore - 200.0 / 3.0) < 1e-6;
  return {pass, Fmt("oracle mismatches %d/20; identical F = %.6f; half cloud (%.6f, %.6f, %.6f)",
                    mismatches, same.fscore, half.precision, half.recall, half.fscore)};
}

// ---------------------------------------------------------------- 9

Outcome ViewSynthesis() {
  const oracle::RoomScan room = oracle::MakeRoomScan(0.5);
  const oracle::FaceStats s =
      oracle::CheckCube(room, kDefaultCubeResolution, kDefaultGradientThreshold);
  const double masked = s.bad_pixels ? static_cast<double>(s.bad_masked) / s.bad_pixels : 1.0;
  const bool pass = s.seed_pixels > 0 && s.seed_recovered == s.seed_pixels && masked >= 0.95;
  return {pass, Fmt("seed pixels recovered %ld/%ld; mask catches %ld/%ld (%.1f%%) bad pixels; "
                    "depth within 2x spacing on %.2f%% of true pixels",
                    s.seed_recovered, s.seed_pixels, s.bad_masked, s.bad_pixels, 100 * masked,
                    100.0 * s.depth_ok / s.true_pixels)};
}

// ---------------------------------------------------------------- 10

Outcome EndToEnd() {
  PipelineConfig c;
  c.output_root = oracle::ScratchDir("acceptance_runs").string();
  const auto t0 = Clock::now();
  const RunResult run = RunPipeline(c);
  const Json& eval = run.records.back();
  const bool complete = run.records.size() == 8 && eval.value("stage", "") == "eval";
  const double merged = eval.at("prf").at("merged").at("fscore").get<double>();
  const double image = eval.at("prf").at("image_only").at("fscore").get<double>();
  return {complete && merged > image,
          Fmt("%zu stage records; F merged %.2f vs image-only %.2f at tau %.3f m; %.1f s",
              run.records.size() - 1, merged, image,
              eval.at("prf").at("merged").at("tau").get<double>(), Since(t0))};
}

}  // namespace

int main() {
  Report(1, "planner oracle equivalence", PlannerOracle);
  Report(2, "planner prefers the coarse region", PlannerPreference);
  Report(3, "scan count nondecreasing in t_c", CoverageTrend);
  Report(4, "Sim3 recovery", Sim3Recovery);
  Report(5, "bundle adjustment correctness", BundleAdjustment);
  Report(6, "omega sweep basin", OmegaSweep);
  Report(7, "fine beats coarse", FineBeatsCoarse);
  Report(8, "precision/recall/F-score", Metrics);
  Report(9, "view synthesis closure", ViewSynthesis);
  Report(10, "end to end F-score", EndToEnd);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
