#include "hiloc/cli.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "hiloc/error.h"
#include "hiloc/eval.h"
#include "hiloc/jacobian_check.h"

namespace hiloc {

namespace {

namespace fs = std::filesystem;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

void AddCommon(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "key=value configuration file");
  cmd->add_option("--set", o.overrides, "override a configuration entry (K=V)");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--seed", o.seed, "random seed");
}

Config LoadConfig(const CommonOptions& o) {
  Config cfg;
  if (!o.config_path.empty()) cfg = Config::Load(o.config_path);
  for (const std::string& kv : o.overrides) cfg.ApplyOverride(kv);
  if (o.seed) cfg.Set("seed", std::to_string(*o.seed));
  return cfg;
}

int ExitFor(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidArgument:
      return kExitConfig;
    case ErrorCode::kIo:
      return kExitIo;
    default:
      return kExitData;
  }
}

void EnsureDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir + ": " + ec.message());
}

int CmdSynth(const CommonOptions& o, std::ostream& out) {
  const Config cfg = LoadConfig(o);
  const SynthSettings settings = SynthSettings::FromConfig(cfg);
  const std::string dir = o.out_dir.empty() ? cfg.GetString("out", "dataset") : o.out_dir;
  const SynthDataset data = GenerateDataset(settings);
  WriteDataset(dir, settings, data);
  out << "wrote " << data.sequence.frames.size() << " frames, "
      << data.prior.points().size() << " prior points to " << dir << '\n';
  return kExitOk;
}

int CmdRun(const CommonOptions& o, std::ostream& out) {
  const Config cfg = LoadConfig(o);
  const std::string mode = cfg.GetString("mode", "odometry");
  if (mode != "odometry" && mode != "hierarchical") {
    throw Error(ErrorCode::kConfig,
                "key 'mode': expected odometry or hierarchical, got '" + mode + "'");
  }
  const std::string dataset_path = cfg.RequireString("dataset");
  const std::string prior_path = cfg.GetString("prior_map", "");
  if (mode == "hierarchical" && prior_path.empty()) {
    throw Error(ErrorCode::kConfig, "hierarchical mode requires key 'prior_map'");
  }
  const Dataset dataset = OpenDataset(dataset_path);
  const PipelineConfig pc = MakePipelineConfig(cfg, dataset);
  std::shared_ptr<const VisualMap> prior;
  if (mode == "hierarchical") {
    prior = std::make_shared<const VisualMap>(LoadMap(prior_path));
  }

  Localizer localizer(pc, prior);
  for (int i = 0; i < dataset.frame_count; ++i) localizer.ProcessFrame(LoadFrame(dataset, i));
  localizer.Finish();

  const std::string dir = o.out_dir.empty() ? "." : o.out_dir;
  EnsureDir(dir);
  SaveTum((fs::path(dir) / "est.tum").string(), localizer.trajectory());
  const std::string status_path = (fs::path(dir) / "status.csv").string();
  std::ofstream status(status_path);
  if (!status) throw Error(ErrorCode::kIo, "cannot write " + status_path);
  WriteStatusCsv(status, localizer.records());
  if (!status) throw Error(ErrorCode::kIo, "write failed for " + status_path);

  const PipelineStats& s = localizer.stats();
  out << "frames " << dataset.frame_count << " keyframes " << s.keyframes << " merges "
      << s.merges_applied << " alignment_failures " << s.alignment_failures << '\n';
  return kExitOk;
}

int CmdEval(const std::string& est_path, const std::string& gt_path, int delta,
            double max_dt, const std::string& out_dir, std::ostream& out) {
  if (delta < 1) throw Error(ErrorCode::kConfig, "--delta must be >= 1");
  if (!(max_dt > 0.0)) throw Error(ErrorCode::kConfig, "--max-dt must be positive");
  const Trajectory est = LoadTum(est_path);
  const Trajectory gt = LoadTum(gt_path);
  const auto pairs = Associate(est, gt, max_dt);
  const ErrorStats ate = AbsoluteTrajectoryError(pairs);
  const ErrorStats rpe = RelativePoseError(pairs, delta);
  WriteMetricsCsv(out, ate, rpe);
  if (!out_dir.empty()) {
    EnsureDir(out_dir);
    const std::string path = (fs::path(out_dir) / "metrics.csv").string();
    std::ofstream f(path);
    if (!f) throw Error(ErrorCode::kIo, "cannot write " + path);
    WriteMetricsCsv(f, ate, rpe);
  }
  return kExitOk;
}

int CmdCheckJacobians(std::uint64_t seed, int trials, bool inject_fault, std::ostream& out) {
  if (trials < 1) throw Error(ErrorCode::kConfig, "--trials must be >= 1");
  const JacobianCheckReport r = CheckJacobians(seed, trials, 1e-5, inject_fault);
  out << std::setprecision(3);
  for (const auto& e : r.entries) {
    out << e.name << " trials " << e.trials << " max_rel_error " << e.max_relative_error
        << '\n';
  }
  out << (r.passed ? "PASS" : "FAIL") << " max_rel_error " << r.max_relative_error
      << " tolerance 1e-05\n";
  return r.passed ? kExitOk : kExitCheckFailed;
}

}  // namespace

PipelineConfig MakePipelineConfig(const Config& run, const Dataset& dataset) {
  PipelineConfig pc;
  pc.intrinsics = dataset.camera;
  pc.baseline = dataset.baseline;
  pc.initial_pose = dataset.initial_pose;
  pc.min_track_inliers = run.GetInt("min_track_inliers", pc.min_track_inliers);
  pc.track_window_radius = run.GetDouble("track_window_radius", pc.track_window_radius);
  pc.recent_keyframes = run.GetInt("recent_keyframes", pc.recent_keyframes);
  pc.pose.pixel_sigma = run.GetDouble("pixel_sigma", pc.pose.pixel_sigma);
  pc.max_stereo_depth = run.GetDouble("max_stereo_depth", pc.max_stereo_depth);
  pc.keyframes.max_translation = run.GetDouble("keyframe_translation",
                                               pc.keyframes.max_translation);
  pc.keyframes.max_rotation_deg = run.GetDouble("keyframe_rotation_deg",
                                                pc.keyframes.max_rotation_deg);
  pc.keyframes.min_tracked_ratio = run.GetDouble("keyframe_tracked_ratio",
                                                 pc.keyframes.min_tracked_ratio);
  pc.align_every = run.GetInt("align_every", pc.align_every);
  pc.window_size = run.GetInt("window_size", pc.window_size);
  pc.fixed_size = run.GetInt("fixed_size", pc.fixed_size);
  pc.hba_iterations = run.GetInt("hba_iterations", pc.hba_iterations);
  pc.align.rounds = run.GetInt("align_rounds", pc.align.rounds);
  pc.align.match.window_radius = run.GetDouble("align_window_radius",
                                               pc.align.match.window_radius);
  pc.align.match.prior_frame_radius = run.GetDouble("prior_frame_radius",
                                                    pc.align.match.prior_frame_radius);
  pc.align.min_prior_matches = run.GetInt("min_prior_matches", pc.align.min_prior_matches);
  pc.max_correction_translation = run.GetDouble("max_correction_translation",
                                                pc.max_correction_translation);
  pc.deterministic_merge = run.GetBool("deterministic_merge", pc.deterministic_merge);
  if (pc.min_track_inliers < 4 || pc.window_size < 1 || pc.fixed_size < 0 ||
      pc.align_every < 1 || pc.hba_iterations < 1 || pc.recent_keyframes < 1 ||
      !(pc.track_window_radius > 0.0)) {
    throw Error(ErrorCode::kConfig, "pipeline settings out of range");
  }
  return pc;
}

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"hiloc: hierarchical visual localization"};
  app.require_subcommand(1);

  CommonOptions synth_opts, run_opts;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  AddCommon(synth, synth_opts);
  CLI::App* run = app.add_subcommand("run", "localize a dataset");
  AddCommon(run, run_opts);

  std::string est_path, gt_path, eval_out;
  int delta = 1;
  double max_dt = 0.02;
  CLI::App* eval = app.add_subcommand("eval", "ATE and RPE of a trajectory");
  eval->add_option("--est", est_path, "estimated trajectory (TUM)")->required();
  eval->add_option("--gt", gt_path, "ground-truth trajectory (TUM)")->required();
  eval->add_option("--delta", delta, "RPE frame offset");
  eval->add_option("--max-dt", max_dt, "association window in seconds");
  eval->add_option("--out", eval_out, "directory for metrics.csv");

  std::uint64_t check_seed = 0;
  int trials = 1000;
  bool inject_fault = false;
  CLI::App* check = app.add_subcommand("check-jacobians", "finite-difference Jacobian gate");
  check->add_option("--seed", check_seed, "random seed");
  check->add_option("--trials", trials, "configurations per Jacobian");
  check->add_flag("--inject-fault", inject_fault)->group("");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (synth->parsed()) return CmdSynth(synth_opts, out);
    if (run->parsed()) return CmdRun(run_opts, out);
    if (eval->parsed()) return CmdEval(est_path, gt_path, delta, max_dt, eval_out, out);
    if (check->parsed()) return CmdCheckJacobians(check_seed, trials, inject_fault, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return ExitFor(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitConfig;
}

}  // namespace hiloc
