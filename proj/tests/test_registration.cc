#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.h"
#include "scanmerge/errors.h"
#include "scanmerge/registration.h"

using namespace scanmerge;

namespace {

double PairRms(const Sim3Transform& t, const std::vector<Correspondence3D>& pairs) {
  double sq = 0.0;
  for (const auto& p : pairs) sq += (t.Apply(p.source) - p.target).squaredNorm();
  return std::sqrt(sq / pairs.size());
}

// Random-restart hill climbing over (log s, rotation vector, translation).
double RefinementOracleRms(const std::vector<Correspondence3D>& pairs, std::mt19937_64& rng,
                           int restarts, int steps) {
  std::normal_distribution<double> g(0.0, 1.0);
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    double log_s = 0.3 * g(rng);
    Rotation3 rot = oracle::RandomRotation(rng);
    Vector3 t = oracle::RandomPoint(rng, 3.0);
    double cur = PairRms(Sim3Transform(std::exp(log_s), rot, t), pairs);
    double step = 0.5;
    for (int k = 0; k < steps; ++k) {
      const double ls = log_s + step * 0.2 * g(rng);
      const Rotation3 rr = Rotation3::Exp(step * Vector3(g(rng), g(rng), g(rng))) * rot;
      const Vector3 tt = t + step * Vector3(g(rng), g(rng), g(rng));
      const double e = PairRms(Sim3Transform(std::exp(ls), rr, tt), pairs);
      if (e < cur) {
        cur = e;
        log_s = ls;
        rot = rr;
        t = tt;
      } else {
        step = std::max(1e-9, step * 0.97);
      }
    }
    best = std::min(best, cur);
  }
  return best;
}

void CheckClose(const Sim3Transform& a, const Sim3Transform& b, double tol) {
  CHECK(std::abs(a.scale() - b.scale()) < tol);
  CHECK(a.rotation().AngleTo(b.rotation()) < tol);
  CHECK((a.translation() - b.translation()).norm() < tol);
}

}  // namespace

TEST_CASE("umeyama_sim3 exact recovery") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const Sim3Transform truth = oracle::RandomSim3(rng);
    const auto pairs = oracle::SyntheticPairs(rng, truth, 3 + trial % 20, 0.0, 0.0, 5.0, nullptr);
    CheckClose(UmeyamaSim3(pairs), truth, 1e-9);
  }
  // Scale held at one when not estimated.
  const Sim3Transform rigid(1.0, oracle::RandomRotation(rng), Vector3(1, 2, 3));
  const auto pairs = oracle::SyntheticPairs(rng, rigid, 10, 0.0, 0.0, 5.0, nullptr);
  const Sim3Transform fit = UmeyamaSim3(pairs, false);
  CHECK(fit.scale() == 1.0);
  CheckClose(fit, rigid, 1e-9);
}

TEST_CASE("umeyama_sim3 is optimal under noise") {
  std::mt19937_64 rng(22);
  const Sim3Transform truth = oracle::RandomSim3(rng);
  const auto pairs = oracle::SyntheticPairs(rng, truth, 50, 0.0, 0.01, 5.0, nullptr);
  const double fit_rms = PairRms(UmeyamaSim3(pairs), pairs);
  // 50 restarts x 2000 steps = 1e5 evaluated samples.
  const double oracle_rms = RefinementOracleRms(pairs, rng, 50, 2000);
  CHECK(fit_rms <= oracle_rms + 1e-6);
  CHECK(fit_rms < 0.02);
}

TEST_CASE("umeyama_sim3 degenerate inputs") {
  std::vector<Correspondence3D> line(5);
  for (int i = 0; i < 5; ++i) {
    line[i].source = Point3(i, 2.0 * i, -i);
    line[i].target = Point3(i, 0, 0);
  }
  CHECK_THROWS_AS(UmeyamaSim3(line), RankDeficient);
  std::vector<Correspondence3D> same(4);
  CHECK_THROWS_AS(UmeyamaSim3(same), RankDeficient);
  CHECK_THROWS_AS(UmeyamaSim3(std::span<const Correspondence3D>(line.data(), 2)),
                  InvalidArgument);
  line[0].weight = 0.0;
  CHECK_THROWS_AS(UmeyamaSim3(line), InvalidArgument);
}

TEST_CASE("umeyama_sim3 weights act as duplication") {
  std::mt19937_64 rng(23);
  const Sim3Transform truth = oracle::RandomSim3(rng);
  auto pairs = oracle::SyntheticPairs(rng, truth, 12, 0.0, 0.05, 5.0, nullptr);
  auto weighted = pairs;
  auto duplicated = pairs;
  for (int i = 0; i < 4; ++i) {
    weighted[i].weight = 2.0;
    duplicated.push_back(pairs[i]);
  }
  CheckClose(UmeyamaSim3(weighted), UmeyamaSim3(duplicated), 1e-12);
  // Uniform weights change nothing.
  for (auto& p : pairs) p.weight = 3.5;
  auto unit = pairs;
  for (auto& p : unit) p.weight = 1.0;
  CheckClose(UmeyamaSim3(pairs), UmeyamaSim3(unit), 1e-12);
}

TEST_CASE("umeyama_sim3 is equivariant") {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 50; ++trial) {
    const Sim3Transform truth = oracle::RandomSim3(rng);
    const auto pairs = oracle::SyntheticPairs(rng, truth, 20, 0.0, 0.05, 5.0, nullptr);
    const Sim3Transform fit = UmeyamaSim3(pairs);
    const Sim3Transform g = oracle::RandomSim3(rng);
    auto moved = pairs;
    for (auto& p : moved) p.target = g.Apply(p.target);
    const Sim3Transform fit_moved = UmeyamaSim3(moved);
    CheckClose(fit_moved, ComposeSim3(g, fit), 1e-9);
  }
}

TEST_CASE("ransac_sim3 with clean data") {
  std::mt19937_64 rng(25);
  const Sim3Transform truth = oracle::RandomSim3(rng);
  const auto pairs = oracle::SyntheticPairs(rng, truth, 40, 0.0, 0.0, 5.0, nullptr);
  const RansacReport rep = RansacSim3(pairs);
  CHECK(rep.inliers.size() == 40);
  CheckClose(rep.transform, truth, 1e-9);
  CHECK(rep.iterations == kDefaultRansacSamples);
}

TEST_CASE("ransac_sim3 with 30 percent outliers") {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 10; ++trial) {
    const Sim3Transform truth = oracle::RandomSim3(rng);
    std::vector<bool> outlier;
    const auto pairs = oracle::SyntheticPairs(rng, truth, 100, 0.3, 0.0, 5.0, &outlier);
    RansacOptions opt;
    opt.seed = 100 + trial;
    const RansacReport rep = RansacSim3(pairs, opt);
    CheckClose(rep.transform, truth, 1e-6);
    std::vector<int> want;
    for (int i = 0; i < 100; ++i) {
      if (!outlier[i]) want.push_back(i);
    }
    // Exact inliers are all found; no outlier sits within the threshold.
    CHECK(rep.inliers == want);
    CHECK(rep.inlier_rms <= opt.threshold);
  }
}

TEST_CASE("ransac_sim3 small sets and determinism") {
  std::mt19937_64 rng(27);
  const Sim3Transform truth = oracle::RandomSim3(rng);
  const auto three = oracle::SyntheticPairs(rng, truth, 3, 0.0, 0.0, 5.0, nullptr);
  const RansacReport small = RansacSim3(three);
  CHECK(small.iterations == 1);
  CheckClose(small.transform, truth, 1e-9);

  const auto pairs = oracle::SyntheticPairs(rng, truth, 60, 0.3, 0.01, 5.0, nullptr);
  RansacOptions opt;
  opt.seed = 9;
  const RansacReport a = RansacSim3(pairs, opt);
  const RansacReport b = RansacSim3(pairs, opt);
  CHECK(a.inliers == b.inliers);
  CHECK(a.transform.translation() == b.transform.translation());
  CHECK(a.inlier_rms <= opt.threshold);
  for (int i : a.inliers) CHECK(TransferError(a.transform, pairs[i]) < opt.threshold);
}

TEST_CASE("ransac_sim3 failures") {
  std::vector<Correspondence3D> line(6);
  for (int i = 0; i < 6; ++i) {
    line[i].source = Point3(i, 0, 0);
    line[i].target = Point3(0, i, 0);
  }
  CHECK_THROWS_AS(RansacSim3(line), RegistrationFailed);
  RansacOptions bad;
  bad.threshold = 0.0;
  CHECK_THROWS_AS(RansacSim3(line, bad), InvalidArgument);
  CHECK_THROWS_AS(RansacSim3(std::span<const Correspondence3D>(line.data(), 2)),
                  InvalidArgument);
  CHECK(ParseChannel(ChannelName(Channel::kAerial)) == Channel::kAerial);
  CHECK_THROWS_AS(ParseChannel("sky"), InvalidArgument);
}
