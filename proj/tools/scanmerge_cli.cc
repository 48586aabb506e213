// Command-line front end: one subcommand per pipeline stage plus run and sweep.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scanmerge/pipeline.h"

namespace sm = scanmerge;
namespace fs = std::filesystem;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitStage = 3;

// Flag values that override the loaded config when given.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_root;
  std::optional<int> n_rays;
  std::optional<double> r_f;
  std::optional<double> t_c;
  std::optional<std::string> overlap_mode;
  std::optional<int> cube_res;
  std::optional<int> fill_radius;
  std::optional<double> grad_thresh;
  std::optional<int> samples;
  std::optional<double> thresh;
  std::optional<std::string> omega;
  std::optional<double> rc_exponent;
  std::optional<double> huber;
  std::optional<int> max_iters;
  std::optional<double> tol;
  std::optional<double> tau;
};

struct Common {
  std::string config;
  std::string dir;
  Overrides o;
};

// Base config: --config, else the config.json of an existing --dir, else
// defaults. Flags are applied on top.
sm::PipelineConfig ResolveConfig(const Common& c) {
  std::string base = c.config;
  if (base.empty() && !c.dir.empty() && fs::exists(fs::path(c.dir) / "config.json")) {
    base = (fs::path(c.dir) / "config.json").string();
  }
  sm::Json j = base.empty() ? sm::PipelineConfigToJson(sm::PipelineConfig{})
                            : sm::PipelineConfigToJson(sm::LoadPipelineConfig(base));
  const Overrides& o = c.o;
  if (o.seed) j["seed"] = *o.seed;
  if (o.output_root) j["output_root"] = *o.output_root;
  if (o.n_rays) j["plan"]["ray_count"] = *o.n_rays;
  if (o.r_f) j["plan"]["neighbor_radius"] = *o.r_f;
  if (o.t_c) j["plan"]["coverage_threshold"] = *o.t_c;
  if (o.overlap_mode) j["plan"]["overlap_mode"] = *o.overlap_mode;
  if (o.cube_res) j["synth"]["cube_resolution"] = *o.cube_res;
  if (o.fill_radius) j["synth"]["fill_radius"] = *o.fill_radius;
  if (o.grad_thresh) j["synth"]["gradient_threshold"] = *o.grad_thresh;
  if (o.samples) j["register"]["num_samples"] = *o.samples;
  if (o.thresh) j["register"]["threshold"] = *o.thresh;
  if (o.omega) {
    if (*o.omega == "auto") {
      j["merge"]["omega"] = "auto";
    } else {
      try {
        size_t used = 0;
        j["merge"]["omega"] = std::stod(*o.omega, &used);
        if (used != o.omega->size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw sm::InvalidSpec("--omega must be 'auto' or a number");
      }
    }
  }
  if (o.rc_exponent) j["merge"]["rc_exponent"] = *o.rc_exponent;
  if (o.huber) j["merge"]["huber_delta"] = *o.huber;
  if (o.max_iters) j["merge"]["max_iterations"] = *o.max_iters;
  if (o.tol) j["merge"]["function_tolerance"] = *o.tol;
  if (o.tau) j["eval"]["tau"] = *o.tau;
  return sm::PipelineConfigFromJson(j);
}

fs::path ResolveDir(const Common& c, const sm::PipelineConfig& cfg) {
  return c.dir.empty() ? sm::RunDirectory(cfg) : fs::path(c.dir);
}

void AddCommon(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "pipeline config JSON (defaults when omitted)");
  app->add_option("-d,--dir", c.dir, "run directory (default: <output_root>/<config hash>)");
  app->add_option("--seed", c.o.seed, "random seed");
  app->add_option("--output-root", c.o.output_root, "parent of content-addressed run directories");
}

void AddPlanFlags(CLI::App* app, Common& c) {
  app->add_option("--n-rays", c.o.n_rays, "rays cast per candidate location");
  app->add_option("--r-f", c.o.r_f, "facet neighbour radius in meters");
  app->add_option("--t-c", c.o.t_c, "coverage threshold in (0, 1]");
  app->add_option("--overlap-mode", c.o.overlap_mode, "candidate-only or all-unselected");
}

void AddSynthFlags(CLI::App* app, Common& c) {
  app->add_option("--cube-res", c.o.cube_res, "cube face resolution in pixels");
  app->add_option("--fill-radius", c.o.fill_radius, "hole filling radius in pixels");
  app->add_option("--grad-thresh", c.o.grad_thresh, "depth edge threshold in meters per pixel");
}

void AddRegisterFlags(CLI::App* app, Common& c) {
  app->add_option("--samples", c.o.samples, "RANSAC minimal samples");
  app->add_option("--thresh", c.o.thresh, "RANSAC inlier distance in meters");
}

void AddMergeFlags(CLI::App* app, Common& c) {
  app->add_option("--omega", c.o.omega, "space term weight: auto or a number");
  app->add_option("--rc-exponent", c.o.rc_exponent, "scale omega by 10^e");
  app->add_option("--huber", c.o.huber, "Huber threshold on whitened residual norms");
  app->add_option("--max-iters", c.o.max_iters, "maximum solver iterations");
  app->add_option("--tol", c.o.tol, "relative cost decrease tolerance");
}

void AddEvalFlags(CLI::App* app, Common& c) {
  app->add_option("--tau", c.o.tau, "evaluation distance before scene scaling, meters");
}

void PrintRecord(const sm::Json& record) {
  sm::Json brief = record;
  for (const char* bulky : {"records", "steps", "cost_trace", "scans"}) brief.erase(bulky);
  std::cout << brief.dump() << '\n';
}

// Runs a chain of stages on a run directory, appending to its summary.
int RunStages(const Common& common,
              const std::vector<sm::Json (*)(const sm::PipelineConfig&, const fs::path&)>& stages,
              bool begin) {
  const sm::PipelineConfig cfg = ResolveConfig(common);
  const fs::path dir = ResolveDir(common, cfg);
  if (begin) {
    sm::BeginRun(cfg, dir);
  } else if (!fs::exists(dir / "summary.jsonl")) {
    throw sm::StageError("setup", "run directory " + dir.string() +
                                      " has no summary; run the simulate subcommand first");
  }
  for (auto* stage : stages) {
    sm::Json record;
    try {
      record = stage(cfg, dir);
    } catch (const sm::StageError& e) {
      sm::AppendRecord(dir, sm::Json{{"stage", e.stage()}, {"error", e.what()}});
      throw;
    }
    sm::AppendRecord(dir, record);
    PrintRecord(record);
  }
  std::cout << "run directory: " << dir.string() << '\n';
  return 0;
}

std::vector<std::string> SplitValues(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plan laser scans, register them to an image reconstruction and merge both"};
  app.require_subcommand(1);

  Common common;
  std::string sweep_param, sweep_values, sweep_out;

  auto* simulate = app.add_subcommand(
      "simulate", "generate the synthetic scene, or import input files when simulate is false");
  AddCommon(simulate, common);

  auto* plan = app.add_subcommand(
      "plan", "choose scanning locations; in simulated runs also captures the chosen scans");
  AddCommon(plan, common);
  AddPlanFlags(plan, common);

  auto* synth = app.add_subcommand("synth", "render cube and aerial views from each scan");
  AddCommon(synth, common);
  AddSynthFlags(synth, common);

  auto* reg = app.add_subcommand("register", "coarse similarity alignment of each scan");
  AddCommon(reg, common);
  AddRegisterFlags(reg, common);

  auto* merge = app.add_subcommand("merge", "joint refinement of cameras, points and scans");
  AddCommon(merge, common);
  AddMergeFlags(merge, common);

  auto* eval = app.add_subcommand("eval", "reference error and precision/recall/F-score");
  AddCommon(eval, common);
  AddEvalFlags(eval, common);

  auto* run = app.add_subcommand("run", "all stages in order");
  AddCommon(run, common);
  AddPlanFlags(run, common);
  AddSynthFlags(run, common);
  AddRegisterFlags(run, common);
  AddMergeFlags(run, common);
  AddEvalFlags(run, common);

  auto* sweep = app.add_subcommand("sweep", "one full run per value of a config key");
  AddCommon(sweep, common);
  AddPlanFlags(sweep, common);
  AddSynthFlags(sweep, common);
  AddRegisterFlags(sweep, common);
  AddMergeFlags(sweep, common);
  AddEvalFlags(sweep, common);
  sweep->add_option("-p,--param", sweep_param,
                    "dotted config key (merge.rc_exponent) or alias (rc-exponent, t_c)")
      ->required();
  sweep->add_option("-v,--values", sweep_values, "comma separated values; a/b fractions allowed");
  sweep->add_option("-o,--out", sweep_out, "CSV output path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*simulate) {
      const sm::PipelineConfig cfg = ResolveConfig(common);
      return RunStages(common, {cfg.simulate ? sm::StageSimulate : sm::StageImport}, true);
    }
    if (*plan) {
      const sm::PipelineConfig cfg = ResolveConfig(common);
      if (cfg.simulate) return RunStages(common, {sm::StagePlan, sm::StageCapture}, false);
      return RunStages(common, {sm::StagePlan}, false);
    }
    if (*synth) return RunStages(common, {sm::StageSynth}, false);
    if (*reg) return RunStages(common, {sm::StageRegister}, false);
    if (*merge) return RunStages(common, {sm::StageMerge}, false);
    if (*eval) return RunStages(common, {sm::StageEval}, false);
    if (*run) {
      const sm::PipelineConfig cfg = ResolveConfig(common);
      std::optional<fs::path> dir;
      if (!common.dir.empty()) dir = common.dir;
      const sm::RunResult r = sm::RunPipeline(cfg, dir);
      for (size_t i = 1; i < r.records.size(); ++i) PrintRecord(r.records[i]);
      std::cout << "run directory: " << r.dir.string() << '\n';
      return 0;
    }
    if (*sweep) {
      const sm::PipelineConfig cfg = ResolveConfig(common);
      const auto rows = sm::Sweep(cfg, sweep_param, SplitValues(sweep_values));
      const std::string csv = sm::SweepCsv(sweep_param, rows);
      if (sweep_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream out(sweep_out, std::ios::binary);
        if (!out) throw sm::InvalidSpec("cannot write " + sweep_out);
        out << csv;
      }
      return 0;
    }
  } catch (const sm::InvalidSpec& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const sm::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return kExitInvalid;
}
