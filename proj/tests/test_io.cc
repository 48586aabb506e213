#include <doctest.h>

#include <fstream>
#include <random>

#include "oracles.h"
#include "scanmerge/camera_io.h"
#include "scanmerge/errors.h"
#include "scanmerge/image_io.h"
#include "scanmerge/ply_io.h"
#include "scanmerge/table_io.h"

using namespace scanmerge;

TEST_CASE("PLY mesh round trip in both encodings") {
  const auto dir = oracle::ScratchDir("ply_mesh");
  const TriMesh mesh({Point3(0, 0, 0), Point3(1, 0, 0), Point3(0, 1, 0.5), Point3(1, 1, 1.0 / 3)},
                     {{0, 1, 2}, {1, 3, 2}});
  for (PlyFormat fmt : {PlyFormat::kBinaryLittleEndian, PlyFormat::kAscii}) {
    const std::string path = (dir / "m.ply").string();
    WritePlyMesh(path, mesh, fmt);
    const TriMesh back = ReadPlyMesh(path);
    REQUIRE(back.vertices().size() == 4);
    REQUIRE(back.facets() == mesh.facets());
    for (size_t i = 0; i < 4; ++i) CHECK(back.vertices()[i] == mesh.vertices()[i]);
  }
}

TEST_CASE("PLY cloud round trip with origin distance") {
  const auto dir = oracle::ScratchDir("ply_cloud");
  std::mt19937_64 rng(3);
  ColoredPointCloud cloud;
  for (int i = 0; i < 100; ++i) {
    cloud.points.push_back(oracle::RandomPoint(rng, 10.0));
    cloud.colors.push_back(Rgb{static_cast<std::uint8_t>(i), 7, 200});
  }
  cloud.origin_distance = std::vector<double>(100, 2.5);
  for (PlyFormat fmt : {PlyFormat::kBinaryLittleEndian, PlyFormat::kAscii}) {
    const std::string path = (dir / "c.ply").string();
    WritePlyCloud(path, cloud, fmt);
    const ColoredPointCloud back = ReadPlyCloud(path);
    REQUIRE(back.size() == 100);
    CHECK(back.colors == cloud.colors);
    REQUIRE(back.origin_distance);
    CHECK((*back.origin_distance)[5] == doctest::Approx(2.5));
    for (size_t i = 0; i < 100; ++i) CHECK((back.points[i] - cloud.points[i]).norm() < 1e-12);
  }
}

TEST_CASE("PLY reader rejects garbage") {
  const auto dir = oracle::ScratchDir("ply_bad");
  const std::string path = (dir / "bad.ply").string();
  std::ofstream(path) << "not a ply file\n";
  CHECK_THROWS_AS(ReadPlyMesh(path), IoError);
  CHECK_THROWS_AS(ReadPlyCloud((dir / "missing.ply").string()), IoError);
}

TEST_CASE("camera JSON round trip") {
  const auto dir = oracle::ScratchDir("cams");
  std::mt19937_64 rng(4);
  std::vector<CameraView> cams(3);
  for (auto& c : cams) {
    c.intrinsics = CameraIntrinsics::Create(510.5, 500.25, 320.0, 239.5, 640, 480);
    c.pose.rotation = oracle::RandomRotation(rng);
    c.pose.translation = oracle::RandomPoint(rng, 3.0);
  }
  cams[1].label = CameraLabel::kCapturedAerial;
  cams[2].label = CameraLabel::kVirtual;
  const std::string path = (dir / "cams.json").string();
  WriteCamerasJson(path, cams);
  const auto back = ReadCamerasJson(path);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back[i].label == cams[i].label);
    CHECK(back[i].intrinsics.fy == cams[i].intrinsics.fy);
    CHECK(back[i].pose.rotation.matrix() == cams[i].pose.rotation.matrix());
    CHECK(back[i].pose.translation == cams[i].pose.translation);
  }
  const Sim3Transform t = oracle::RandomSim3(rng);
  const Sim3Transform tb = Sim3FromJson(Sim3ToJson(t));
  CHECK(tb.scale() == t.scale());
  CHECK(tb.translation() == t.translation());
}

TEST_CASE("PFM round trip") {
  const auto dir = oracle::ScratchDir("pfm");
  std::vector<float> data(12);
  for (int i = 0; i < 12; ++i) data[i] = 0.5f * i;
  const std::string path = (dir / "d.pfm").string();
  WritePfm(path, 4, 3, data);
  int w = 0, h = 0;
  CHECK(ReadPfm(path, &w, &h) == data);
  CHECK(w == 4);
  CHECK(h == 3);
}

TEST_CASE("CSV tables round trip exactly") {
  const auto dir = oracle::ScratchDir("csv");
  std::mt19937_64 rng(5);
  std::vector<Observation2D> obs = {{0, 3, Vector2(1.0 / 3, 2.5), 1.25}, {2, 1, Vector2(-4, 7e-3), 2}};
  WriteTracksCsv((dir / "t.csv").string(), obs);
  const auto obs_back = ReadTracksCsv((dir / "t.csv").string());
  REQUIRE(obs_back.size() == 2);
  CHECK(obs_back[0].pixel == obs[0].pixel);
  CHECK(obs_back[1].feature_scale == 2.0);

  std::vector<Correspondence3D> pairs(2);
  pairs[0].source = oracle::RandomPoint(rng, 3.0);
  pairs[0].target = oracle::RandomPoint(rng, 3.0);
  pairs[1].channel = Channel::kAerial;
  pairs[1].scan = 1;
  pairs[1].track = 42;
  pairs[1].weight = 0.5;
  const std::vector<bool> flags = {true, false};
  WriteCorrespondencesCsv((dir / "c.csv").string(), pairs, &flags);
  std::vector<bool> flags_back;
  const auto back = ReadCorrespondencesCsv((dir / "c.csv").string(), &flags_back);
  CHECK(flags_back == flags);
  CHECK(back[0].source == pairs[0].source);
  CHECK(back[1].channel == Channel::kAerial);
  CHECK(back[1].track == 42);
  CHECK(back[1].weight == 0.5);

  std::vector<ReferencePair> refs(1);
  refs[0].region = Region::kIndoor;
  refs[0].laser_point = Point3(1, 2, 3);
  WriteReferencesCsv((dir / "r.csv").string(), refs);
  const auto refs_back = ReadReferencesCsv((dir / "r.csv").string());
  CHECK(refs_back[0].region == Region::kIndoor);
  CHECK(refs_back[0].laser_point == refs[0].laser_point);

  std::ofstream((dir / "bad.csv").string()) << "camera,point,u,v,feature_scale\n1,2,x,4,5\n";
  CHECK_THROWS_AS(ReadTracksCsv((dir / "bad.csv").string()), IoError);
}
