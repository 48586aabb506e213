#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scanmerge/camera_io.h"
#include "scanmerge/errors.h"
#include "scanmerge/merge_ba.h"
#include "scanmerge/metrics.h"
#include "scanmerge/planner.h"
#include "scanmerge/registration.h"
#include "scanmerge/scene_sim.h"
#include "scanmerge/view_synth.h"

namespace scanmerge {

// A stage that failed while running; carries the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage " + stage + ": " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Files used instead of the simulator when simulate is false. Paths are
// relative to the working directory.
struct PipelineInputs {
  std::string mesh;             // PLY triangle mesh
  std::string stations;         // stations JSON
  std::string cameras;          // cameras JSON (SfM estimate)
  std::string points;           // PLY cloud (SfM points, indexed by track)
  std::string tracks;           // tracks CSV
  std::string scans;            // scans JSON; cloud paths relative to it
  std::string correspondences;  // correspondences CSV
  std::string references;       // references CSV (optional)
  std::string ground_truth;     // PLY cloud for precision/recall (optional)
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::string output_root = "runs";

  bool simulate = true;
  SceneSpec scene;  // its seed follows the config seed
  MatchOptions matches;
  PipelineInputs inputs;

  int ray_count = kDefaultRayCount;
  double neighbor_radius = kDefaultNeighborRadius;
  double coverage_threshold = kDefaultCoverageThreshold;
  OverlapMode overlap_mode = OverlapMode::kCandidateOnly;

  double scan_step_deg = 0.5;

  int cube_resolution = kDefaultCubeResolution;
  int fill_radius = kDefaultFillRadius;
  double gradient_threshold = kDefaultGradientThreshold;
  int aerial_views = 5;

  int ransac_samples = kDefaultRansacSamples;
  double ransac_threshold = kDefaultRansacThreshold;

  std::optional<double> omega;  // empty: balance the initial costs
  double rc_exponent = 0.0;
  double huber_delta = 1.0;
  int max_iterations = 100;
  double function_tolerance = 1e-6;
  CovarianceModel covariance;

  double tau = kDefaultTau;
  double scene_scale = 10.0;  // evaluation distance is tau * scene_scale

  // Throws InvalidSpec.
  void Validate() const;
};

Json PipelineConfigToJson(const PipelineConfig& c);
// Missing keys keep their defaults; unknown keys are rejected. Throws
// InvalidSpec.
PipelineConfig PipelineConfigFromJson(const Json& j);
PipelineConfig LoadPipelineConfig(const std::string& path);

// Hex digest of the resolved config, output_root excluded.
std::string ConfigHash(const PipelineConfig& c);
std::filesystem::path RunDirectory(const PipelineConfig& c);

// Stages read their inputs from and write their outputs to a run
// directory, so running them one by one matches a full run. Each returns
// its report, also written to reports/<stage>.json. Failures are thrown as
// StageError.
Json StageSimulate(const PipelineConfig& c, const std::filesystem::path& dir);
Json StageImport(const PipelineConfig& c, const std::filesystem::path& dir);
Json StagePlan(const PipelineConfig& c, const std::filesystem::path& dir);
Json StageCapture(const PipelineConfig& c, const std::filesystem::path& dir);
Json StageSynth(const PipelineConfig& c, const std::filesystem::path& dir);
Json StageRegister(const PipelineConfig& c, const std::filesystem::path& dir);
Json StageMerge(const PipelineConfig& c, const std::filesystem::path& dir);
Json StageEval(const PipelineConfig& c, const std::filesystem::path& dir);

// Writes config.json and starts summary.jsonl with the config record.
Json BeginRun(const PipelineConfig& c, const std::filesystem::path& dir);
// Appends one record line to summary.jsonl.
void AppendRecord(const std::filesystem::path& dir, const Json& record);

struct RunResult {
  std::filesystem::path dir;
  std::vector<Json> records;  // config first, then one per stage
};

// All stages in order into RunDirectory(c) (or dir when given), writing
// config.json and one summary.jsonl line per record. Partial artifacts are
// kept when a stage fails.
RunResult RunPipeline(const PipelineConfig& c,
                      const std::optional<std::filesystem::path>& dir = std::nullopt);

// One run per value of a config key given as a dotted path ("merge.rc_exponent")
// or alias ("rc-exponent", "t_c"). Failed runs become rows with status
// "failed". Throws InvalidSpec for an unknown key.
struct SweepRow {
  std::string value;
  std::string status;
  std::string run_dir;
  int num_scans = 0;
  double coarse_rms = 0.0;
  double final_rms = 0.0;
  double fscore_merged = 0.0;
  double fscore_image_only = 0.0;
  std::string message;
};

std::vector<SweepRow> Sweep(const PipelineConfig& base, const std::string& parameter,
                            const std::vector<std::string>& values);
std::string SweepCsv(const std::string& parameter, const std::vector<SweepRow>& rows);

}  // namespace scanmerge
