#include <doctest.h>

#include <numeric>
#include <random>

#include "oracles.h"
#include "scenes.h"
#include "scanmerge/errors.h"
#include "scanmerge/planner.h"
#include "scanmerge/scene_sim.h"
#include "scanmerge/spatial_index.h"

using namespace scanmerge;

namespace {

TriMesh Icosahedron() {
  const double p = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Point3> v;
  for (double a : {-1.0, 1.0}) {
    for (double b : {-p, p}) {
      v.emplace_back(0, a, b);
      v.emplace_back(a, b, 0);
      v.emplace_back(b, 0, a);
    }
  }
  std::vector<Facet> f;
  const auto edge = [&](int i, int j) { return std::abs((v[i] - v[j]).norm() - 2.0) < 1e-9; };
  for (int i = 0; i < 12; ++i) {
    for (int j = i + 1; j < 12; ++j) {
      for (int k = j + 1; k < 12; ++k) {
        if (edge(i, j) && edge(j, k) && edge(i, k)) f.push_back({i, j, k});
      }
    }
  }
  return TriMesh(v, f);
}

// Square wall in the plane x = x0 split into 2 n^2 triangles.
void AddWall(std::vector<Point3>& v, std::vector<Facet>& f, double x0, double half, int n) {
  const int base = static_cast<int>(v.size());
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      v.emplace_back(x0, -half + 2 * half * i / n, -half + 2 * half * j / n);
    }
  }
  const auto id = [&](int i, int j) { return base + i * (n + 1) + j; };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
}

VisibilityRecord Record(int location, std::vector<int> facets, std::vector<double> scores) {
  VisibilityRecord r;
  r.location = location;
  r.facets = std::move(facets);
  r.facet_scores = std::move(scores);
  r.score = LocationScore(r.facet_scores);
  return r;
}

}  // namespace

TEST_CASE("sample_sphere_directions") {
  CHECK_THROWS_AS(SampleSphereDirections(0), InvalidArgument);
  const auto one = SampleSphereDirections(1);
  REQUIRE(one.size() == 1);
  CHECK(std::abs(one[0].norm() - 1.0) < 1e-12);

  const auto dirs = SampleSphereDirections(1000);
  REQUIRE(dirs.size() == 1000);
  Vector3 centroid = Vector3::Zero();
  std::array<int, 8> octant{};
  for (const auto& d : dirs) {
    CHECK(std::abs(d.norm() - 1.0) < 1e-12);
    centroid += d;
    octant[(d.x() > 0) + 2 * (d.y() > 0) + 4 * (d.z() > 0)]++;
  }
  CHECK((centroid / 1000.0).norm() < 0.05);
  for (int c : octant) {
    CHECK(c >= 100);
    CHECK(c <= 150);
  }
  CHECK(SampleSphereDirections(1000) == dirs);
}

TEST_CASE("cast_visibility inside an icosahedron sees every facet") {
  const TriMesh ico = Icosahedron();
  REQUIRE(ico.NumFacets() == 20);
  const MeshBvh bvh(ico);
  const auto dirs = SampleSphereDirections(1000);
  const auto facets = CastVisibility(bvh, Point3::Zero(), dirs);
  std::vector<int> all(20);
  std::iota(all.begin(), all.end(), 0);
  CHECK(facets == all);
  // Each facet subtends 1/20 of the sphere, so it should catch about 50 rays.
  std::vector<int> hits(20, 0);
  for (const auto& d : dirs) {
    const auto h = bvh.Intersect(Point3::Zero(), d);
    REQUIRE(h);
    hits[h->facet]++;
  }
  for (int h : hits) {
    CHECK(h >= 35);
    CHECK(h <= 65);
  }
}

TEST_CASE("cast_visibility keeps only the nearest wall") {
  std::vector<Point3> v;
  std::vector<Facet> f;
  AddWall(v, f, 1.0, 1.0, 6);
  const int near_count = static_cast<int>(f.size());
  AddWall(v, f, 3.0, 1.0, 6);
  const TriMesh mesh(v, f);
  const auto dirs = SampleSphereDirections(4000);
  const auto facets = CastVisibility(MeshBvh(mesh), Point3::Zero(), dirs);
  CHECK_FALSE(facets.empty());
  for (int id : facets) CHECK(id < near_count);
  // Exhaustive nearest-hit oracle per direction.
  std::set<int> want;
  for (const auto& d : dirs) {
    int best = -1;
    double best_t = 1e300;
    for (size_t k = 0; k < mesh.NumFacets(); ++k) {
      const auto t = oracle::PlaneBarycentricHit(Point3::Zero(), d, mesh.Corner(k, 0),
                                                 mesh.Corner(k, 1), mesh.Corner(k, 2));
      if (t && *t < best_t) {
        best_t = *t;
        best = static_cast<int>(k);
      }
    }
    if (best >= 0) want.insert(best);
  }
  CHECK(std::vector<int>(want.begin(), want.end()) == facets);

  // A location behind the walls' backs sees nothing on the far side.
  const auto behind = CastVisibility(MeshBvh(mesh), Point3(-5, 0, 0), dirs);
  for (int id : behind) CHECK(id < near_count);
}

TEST_CASE("facet_score") {
  // Isolated triangle: its own area.
  const TriMesh one({Point3(0, 0, 0), Point3(1, 0, 0), Point3(0, 1, 0)}, {{0, 1, 2}});
  CHECK(FacetScore(one, 0, 0.1) == doctest::Approx(0.5));
  CHECK_THROWS_AS(FacetScore(one, 1, 0.1), InvalidArgument);

  // Two identical triangles 0.05 apart.
  const TriMesh two({Point3(0, 0, 0), Point3(0.01, 0, 0), Point3(0, 0.01, 0), Point3(0.05, 0, 0),
                     Point3(0.06, 0, 0), Point3(0.05, 0.01, 0)},
                    {{0, 1, 2}, {3, 4, 5}});
  CHECK(FacetScore(two, 0, 0.1) == doctest::Approx(2 * two.areas()[0]));
  CHECK(FacetScore(two, 1, 0.1) == doctest::Approx(2 * two.areas()[1]));

  // Fan of 10 facets against the all-pairs sum.
  std::vector<Point3> v = {Point3::Zero()};
  std::vector<Facet> f;
  for (int i = 0; i <= 10; ++i) {
    const double a = 0.3 * i;
    v.emplace_back(0.08 * std::cos(a) * (1 + 0.1 * i), 0.08 * std::sin(a), 0.01 * i);
  }
  for (int i = 1; i <= 10; ++i) f.push_back({0, i, i + 1});
  const TriMesh fan(v, f);
  FacetScorer scorer(fan, 0.05);
  for (int m = 0; m < 10; ++m) {
    double want = fan.areas()[m];
    for (int k = 0; k < 10; ++k) {
      if (k != m && (fan.centers()[k] - fan.centers()[m]).norm() < 0.05) want += fan.areas()[k];
    }
    CHECK(FacetScore(fan, m, 0.05) == doctest::Approx(want).epsilon(1e-12));
    CHECK(scorer.Score(m) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("location_score and pairwise_iou") {
  const std::vector<double> half = {0.5};
  CHECK(LocationScore(half) == 0.5);
  const std::vector<double> s = {1, 2, 3};
  CHECK(LocationScore(s) == 2.0);
  CHECK(LocationScore({}) == 0.0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.01, 5.0);
  std::vector<double> r(77);
  for (double& x : r) x = u(rng);
  const double mean = std::accumulate(r.begin(), r.end(), 0.0) / r.size();
  CHECK(std::abs(LocationScore(r) - mean) <= 1e-12 * mean);

  const std::vector<int> a = {1, 2, 3}, b = {2, 3, 4}, c = {7, 8}, e = {};
  CHECK(PairwiseIou(a, a) == 1.0);
  CHECK(PairwiseIou(a, c) == 0.0);
  CHECK(PairwiseIou(a, b) == 0.5);
  CHECK(PairwiseIou(e, e) == 0.0);
}

TEST_CASE("plan_locations examples") {
  CHECK_THROWS_AS(PlanLocations({Record(0, {}, {})}), NoVisibility);
  PlanOptions opt;
  opt.coverage_threshold = 0.0;
  CHECK_THROWS_AS(PlanLocations({Record(0, {1}, {1.0})}, opt), InvalidArgument);

  opt.coverage_threshold = 1.0;
  const auto single = PlanLocations({Record(0, {1, 2}, {1.0, 1.0})}, opt);
  CHECK(single.selected == std::vector<int>{0});

  opt.coverage_threshold = 0.5;
  const auto dup =
      PlanLocations({Record(0, {1, 2}, {2.0, 2.0}), Record(1, {1, 2}, {1.0, 1.0})}, opt);
  CHECK(dup.selected == std::vector<int>{0});
  CHECK(dup.coverage == 1.0);

  // Empty records never go first; ties go to the lowest index.
  const auto ties = PlanLocations(
      {Record(0, {}, {}), Record(1, {1}, {1.0}), Record(2, {2}, {1.0})}, opt);
  CHECK(ties.selected.front() == 1);

  // Zero overlap outranks any finite ratio.
  opt.coverage_threshold = 0.7;
  const auto disjoint = PlanLocations({Record(0, {1, 2, 3}, {5, 5, 5}),
                                       Record(1, {1, 2, 4}, {9, 9, 9}),
                                       Record(2, {5}, {0.1})},
                                      opt);
  CHECK(disjoint.selected == std::vector<int>{1, 2});
}

TEST_CASE("plan_locations matches the step oracle on two-room scenes") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const GroundTruthBundle b = oracle::TwoRoomScene(seed, 8);
    const auto records = ComputeVisibilityRecords(b.mesh, b.stations, 300, 0.1);
    std::vector<std::vector<int>> facets;
    std::vector<double> scores;
    for (const auto& r : records) {
      facets.push_back(r.facets);
      scores.push_back(r.score);
    }
    for (double t_c : {0.125, 0.5, 0.9, 1.0}) {
      PlanOptions opt;
      opt.coverage_threshold = t_c;
      const PlanResult plan = PlanLocations(records, opt);
      CHECK(plan.selected == oracle::NaivePlan(facets, scores, t_c));
      // Coverage trace is monotone and the stop rule holds.
      for (size_t i = 1; i < plan.steps.size(); ++i) {
        CHECK(plan.steps[i].coverage >= plan.steps[i - 1].coverage);
      }
      if (!plan.exhausted) {
        CHECK(plan.coverage >= t_c);
        if (plan.steps.size() > 1) CHECK(plan.steps[plan.steps.size() - 2].coverage < t_c);
      }
      const int first = plan.selected.front();
      for (const auto& r : records) CHECK(r.score <= records[first].score);
      std::set<int> uni, cov;
      for (const auto& f : facets) uni.insert(f.begin(), f.end());
      for (int s : plan.selected) cov.insert(facets[s].begin(), facets[s].end());
      CHECK(plan.coverage == doctest::Approx(static_cast<double>(cov.size()) / uni.size()));
    }
  }
}

TEST_CASE("plan_locations in all-unselected overlap mode") {
  const GroundTruthBundle b = oracle::TwoRoomScene(9, 6);
  const auto records = ComputeVisibilityRecords(b.mesh, b.stations, 300, 0.1);
  PlanOptions opt;
  opt.coverage_threshold = 1.0;
  opt.overlap_mode = OverlapMode::kAllUnselected;
  const PlanResult plan = PlanLocations(records, opt);
  CHECK(plan.num_selected() >= 1);
  std::set<int> uniq(plan.selected.begin(), plan.selected.end());
  CHECK(uniq.size() == plan.selected.size());
}

TEST_CASE("planner is covariant under doubling the scene") {
  const GroundTruthBundle b = oracle::TwoRoomScene(5, 8);
  std::vector<Point3> v = b.mesh.vertices();
  for (auto& p : v) p *= 2.0;
  const TriMesh big(v, b.mesh.facets());
  std::vector<PotentialLocation> locs = b.stations;
  for (auto& l : locs) l.position *= 2.0;
  const auto small_rec = ComputeVisibilityRecords(b.mesh, b.stations, 300, 0.1);
  const auto big_rec = ComputeVisibilityRecords(big, locs, 300, 0.2);
  for (size_t i = 0; i < small_rec.size(); ++i) {
    CHECK(small_rec[i].facets == big_rec[i].facets);
    CHECK(big_rec[i].score == doctest::Approx(4.0 * small_rec[i].score).epsilon(1e-12));
  }
  PlanOptions opt;
  opt.coverage_threshold = 0.9;
  CHECK(PlanLocations(small_rec, opt).selected == PlanLocations(big_rec, opt).selected);
}
