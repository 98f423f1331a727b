// splatflow: run / synth / eval / render / sweep front end.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "splatflow/eval.hpp"
#include "splatflow/flow.hpp"
#include "splatflow/io.hpp"
#include "splatflow/pipeline.hpp"
#include "splatflow/renderer.hpp"
#include "splatflow/synthetic.hpp"

namespace fs = std::filesystem;
using namespace splatflow;

namespace {

enum Exit { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags shared by run and sweep.
struct RunArgs {
  std::string config;
  std::string input;
  std::string tracker;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string depth_dir;
  std::string flow_dir;
  int downscale = 1;
};

void add_run_flags(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--config", a.config, "key = value config file");
  cmd->add_option("--input", a.input, "tum:DIR or synth:SPEC")->required();
  cmd->add_option("--tracker", a.tracker, "ff | ff-nolgr | iter");
  cmd->add_option("--set", a.overrides, "extra key=value settings (win over the file)");
  cmd->add_option("--seed", a.seed, "random seed");
  cmd->add_option("--depth", a.depth_dir, "pseudo-depth PNG directory (<rgb stem>.png)");
  cmd->add_option("--flow", a.flow_dir, "precomputed flow directory (<src>__<tgt>.flw)");
  cmd->add_option("--downscale", a.downscale, "point-subsample TUM images by this factor")->check(CLI::PositiveNumber);
}

Config build_config(const RunArgs& a) {
  Config cfg;
  try {
    if (!a.config.empty()) {
      if (!fs::exists(a.config)) throw IoError("config file not found: " + a.config);
      cfg = load_config(a.config);
    }
    if (!a.tracker.empty()) cfg.set("tracker", a.tracker);
    if (a.seed) cfg.seed = *a.seed;
    for (const std::string& kv : a.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.pipeline.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

// Owns whatever a run reads from.
struct Input {
  std::unique_ptr<FrameSource> source;
  std::unique_ptr<DepthProvider> depth;
  std::unique_ptr<FlowProvider> flow;
};

Input open_input(const RunArgs& a, const Config& cfg) {
  Input in;
  const auto colon = a.input.find(':');
  if (colon == std::string::npos) throw UsageError("--input must be tum:DIR or synth:SPEC");
  const std::string kind = a.input.substr(0, colon);
  const std::string rest = a.input.substr(colon + 1);
  if (kind == "synth") {
    SyntheticSpec spec;
    try {
      spec = parse_synthetic_spec(rest);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    auto src = std::make_unique<SyntheticSource>(spec);
    SyntheticProviders p = make_synthetic_providers(cfg, *src);
    in.depth = std::move(p.depth);
    in.flow = std::move(p.flow);
    in.source = std::move(src);
  } else if (kind == "tum") {
    if (!fs::is_directory(rest)) throw IoError("input directory not found: " + rest);
    in.source = std::make_unique<TumSource>(rest, std::nullopt, a.downscale);
    in.depth = std::make_unique<FileDepthProvider>();
    if (!a.flow_dir.empty()) in.flow = std::make_unique<FileFlowProvider>(a.flow_dir);
  } else {
    throw UsageError("unknown input kind '" + kind + "'");
  }
  if (!a.depth_dir.empty()) {
    if (!fs::is_directory(a.depth_dir)) throw IoError("depth directory not found: " + a.depth_dir);
    in.depth = std::make_unique<FileDepthProvider>(a.depth_dir);
  }
  if (!a.flow_dir.empty()) {
    if (!fs::is_directory(a.flow_dir)) throw IoError("flow directory not found: " + a.flow_dir);
    in.flow = std::make_unique<FileFlowProvider>(a.flow_dir);
  }
  if (cfg.pipeline.tracker != TrackerKind::iterative && !in.flow) {
    throw UsageError("feed-forward tracking needs --flow for tum input");
  }
  return in;
}

void check_finite(const Trajectory& t) {
  for (const TimedPose& p : t) {
    if (!p.pose.translation().allFinite() || !p.pose.rotation().coeffs().allFinite()) {
      throw NumericError("non-finite pose at t=" + std::to_string(p.timestamp));
    }
  }
}

void write_timings(const fs::path& path, const std::vector<StepDiagnostics>& d) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "frame,track_s,map_s\n";
  char buf[96];
  for (const StepDiagnostics& s : d) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", s.frame, s.track_s, s.map_s);
    out << buf;
  }
}

void dump_graph(const fs::path& dir, int frame, const std::vector<GraphNode>& graph) {
  const fs::path d = dir / frame_key(frame);
  fs::create_directories(d);
  std::ofstream poses(d / "poses.txt");
  poses << "# node real coverage tx ty tz qx qy qz qw\n";
  for (std::size_t n = 0; n < graph.size(); ++n) {
    const GraphNode& g = graph[n];
    const std::string stem = "node" + std::to_string(n);
    write_png_rgb(d / (stem + "_color.png"), g.color);
    write_png_depth(d / (stem + "_depth.png"), g.depth);
    const std::string line = format_tum_line({0.0, g.pose});
    poses << n << ' ' << (g.real ? 1 : 0) << ' ' << g.coverage << line.substr(line.find(' ')) << '\n';
  }
}

int cmd_run(const RunArgs& a, const std::string& out_dir, bool clouds, const std::string& graph_dir) {
  Config cfg = build_config(a);
  Input in = open_input(a, cfg);
  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  if (clouds) fs::create_directories(out / "clouds");

  const RunReport report = run(cfg, *in.source, *in.depth, in.flow.get(), [&](const FrameInput& f, const StepResult& r) {
    if (clouds) export_ply(r.cloud, out / "clouds" / (frame_key(f.index) + ".ply"));
    if (!graph_dir.empty() && !r.graph.empty()) dump_graph(graph_dir, f.index, r.graph);
    if (r.diagnostics.fallback) std::fprintf(stderr, "frame %d: tracker fell back to inertia prediction\n", f.index);
  });

  export_trajectory(report.trajectory, out / "trajectory.txt");
  write_timings(out / "timings.csv", report.diagnostics);
  export_map(report.map, out / "map.ply");
  {
    std::ofstream c(out / "config.txt");
    c << cfg.dump();
  }
  check_finite(report.trajectory);

  std::printf("frames %zu\n", report.trajectory.size());
  std::printf("gaussians %zu\n", report.map.size());
  if (auto gt = in.source->groundtruth(); gt && report.trajectory.size() >= 3) {
    std::printf("ate_rmse_cm %.6f\n", ate_rmse(report.trajectory, *gt));
  }
  return kOk;
}

int cmd_synth(const std::string& spec_text, int frames, const std::string& out_dir) {
  SyntheticSpec spec;
  try {
    spec = parse_synthetic_spec(spec_text);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  SyntheticSource src(spec);
  // --frames keeps the path's shape and writes its first N frames.
  const std::size_t n = frames > 0 ? std::min<std::size_t>(static_cast<std::size_t>(frames), src.size()) : src.size();
  Trajectory truth = *src.groundtruth();
  truth.resize(n);
  std::vector<Frame> out;
  for (std::size_t i = 0; i < n; ++i) {
    FrameInput in = src.load(i);
    out.push_back(Frame{in.index, in.timestamp, std::move(in.rgb), std::move(*in.gt_depth), src.intrinsics()});
  }
  write_tum_sequence(out_dir, out, truth, src.intrinsics());
  std::printf("frames %zu\n", out.size());
  return kOk;
}

int cmd_eval(const std::string& est, const std::string& gt, const std::string& metric, bool scale) {
  for (const std::string& p : {est, gt}) {
    if (!fs::exists(p)) throw IoError("file not found: " + p);
  }
  if (metric == "ate") {
    const Trajectory e = read_trajectory(est);
    const Trajectory g = read_trajectory(gt);
    const AteReport r = ate(e, g, scale);
    std::printf("pairs %zu\n", r.alignment.pairs);
    std::printf("ate_rmse_cm %.6f\n", r.rmse_cm);
    if (scale) std::printf("scale %.6f\n", r.alignment.scale);
    if (r.alignment.degenerate) std::printf("degenerate 1\n");
    return kOk;
  }
  if (metric == "psnr" || metric == "ssim") {
    const ColorImage a = read_png_rgb(est);
    const ColorImage b = read_png_rgb(gt);
    if (metric == "psnr") std::printf("psnr %.6f\n", psnr(a, b));
    else std::printf("ssim %.6f\n", ssim(a, b));
    return kOk;
  }
  if (metric == "depthl1") {
    std::printf("depth_l1 %.6f\n", depth_l1(read_png_depth(est), read_png_depth(gt)));
    return kOk;
  }
  throw UsageError("unknown metric '" + metric + "'");
}

int cmd_render(const std::string& map_path, const std::string& pose_line, const std::string& out_png,
               const std::string& intrinsics, const std::string& depth_png) {
  if (!fs::exists(map_path)) throw IoError("map not found: " + map_path);
  Pose pose;
  try {
    std::istringstream s(pose_line);
    std::vector<double> v;
    for (double x; s >> x;) v.push_back(x);
    if (!s.eof()) throw std::invalid_argument("non-numeric field");
    // Seven numbers are a pose without a timestamp.
    pose = parse_tum_line(v.size() == 7 ? "0 " + pose_line : pose_line).pose;
  } catch (const std::exception& e) {
    throw UsageError(std::string("bad --pose: ") + e.what());
  }
  Intrinsics k = standard_intrinsics();
  if (!intrinsics.empty()) {
    try {
      k = parse_intrinsics(intrinsics);
    } catch (const std::exception& e) {
      throw UsageError(std::string("bad --intrinsics: ") + e.what());
    }
  }
  const GaussianMap map = load_map(map_path);
  const RenderOutput out = render(map, pose, k);
  write_png_rgb(out_png, out.color);
  if (!depth_png.empty()) write_png_depth(depth_png, out.depth_map());
  std::printf("gaussians %zu\n", map.size());
  return kOk;
}

std::string param_key(const std::string& p) {
  if (p == "N") return "sampling.nodes";
  if (p == "alpha") return "sampling.alpha";
  if (p == "theta") return "sampling.theta_deg";
  throw UsageError("--param must be N, alpha or theta");
}

int cmd_sweep(const RunArgs& a, const std::string& param, const std::vector<std::string>& raw_values,
              const std::string& out_csv, bool benchmark, int trials) {
  std::vector<std::string> values;
  for (const std::string& v : raw_values) {
    if (!v.empty()) values.push_back(v);
  }
  if (values.empty()) throw UsageError("--values needs at least one entry");
  const std::string key = param_key(param);
  std::ostringstream csv;
  if (benchmark) {
    // Seeded single-frame trials with outlier flow; errors are medians.
    csv << "value,median_translation_cm,median_rotation_deg\n";
    for (const std::string& v : values) {
      Config cfg = build_config(a);
      try {
        cfg.set(key, v);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      LgrBenchmark bench;
      bench.trials = trials;
      bench.seed = cfg.seed;
      bench.tracker = cfg.pipeline.feedforward;
      const ErrorSummary s = summarize(run_lgr_benchmark(bench));
      char buf[128];
      std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f\n", v.c_str(), s.median_translation * 100.0,
                    s.median_rotation * 180.0 / 3.14159265358979323846);
      csv << buf;
    }
  } else {
    csv << "value,ate_rmse,psnr,ssim\n";
    for (const std::string& v : values) {
      RunArgs run_args = a;
      run_args.overrides.push_back(key + "=" + v);
      Config cfg = build_config(run_args);
      Input in = open_input(run_args, cfg);
      const RunReport report = run(cfg, *in.source, *in.depth, in.flow.get());
      check_finite(report.trajectory);
      const auto gt = in.source->groundtruth();
      const double ate_cm = gt ? ate_rmse(report.trajectory, *gt) : std::nan("");
      const RenderQuality q = render_quality(report.map, *in.source, report.trajectory, 10, cfg.pipeline.render);
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f\n", v.c_str(), ate_cm, q.psnr, q.ssim);
      csv << buf;
    }
  }
  if (out_csv.empty() || out_csv == "-") {
    std::cout << csv.str();
  } else {
    std::ofstream f(out_csv);
    if (!f) throw IoError("cannot write " + out_csv);
    f << csv.str();
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-splatting SLAM with feed-forward pose tracking"};
  app.require_subcommand(1);

  RunArgs run_args;
  std::string run_out;
  bool run_clouds = false;
  std::string graph_dir;
  auto* run_cmd = app.add_subcommand("run", "stream a sequence through the pipeline");
  add_run_flags(run_cmd, run_args);
  run_cmd->add_option("--out", run_out, "output directory")->required();
  run_cmd->add_flag("--clouds", run_clouds, "write per-frame point clouds");
  run_cmd->add_option("--dump-graph", graph_dir, "write local graph nodes per frame (debug)");

  std::string synth_spec = "orbit";
  int synth_frames = 0;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic sequence in TUM layout");
  synth_cmd->add_option("--spec", synth_spec, "e.g. orbit,frames=100,seed=3");
  synth_cmd->add_option("--frames", synth_frames, "write only the first N frames")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--out", synth_out, "output directory")->required();

  std::string est, gt, metric = "ate";
  bool with_scale = false;
  auto* eval_cmd = app.add_subcommand("eval", "compare an estimate against ground truth");
  eval_cmd->add_option("--est", est, "estimated trajectory or image")->required();
  eval_cmd->add_option("--gt", gt, "reference trajectory or image")->required();
  eval_cmd->add_option("--metric", metric, "ate | psnr | ssim | depthl1")
      ->check(CLI::IsMember({"ate", "psnr", "ssim", "depthl1"}));
  eval_cmd->add_flag("--scale", with_scale, "allow a similarity alignment for ATE");

  std::string map_path, pose_line, render_out, intrinsics, depth_out;
  auto* render_cmd = app.add_subcommand("render", "splat a saved map at a pose");
  render_cmd->add_option("--map", map_path, "map.ply (with .meta sidecar)")->required();
  render_cmd->add_option("--pose", pose_line, "[timestamp] tx ty tz qx qy qz qw")->required();
  render_cmd->add_option("--out", render_out, "color PNG")->required();
  render_cmd->add_option("--intrinsics", intrinsics, "\"fx fy cx cy width height\"");
  render_cmd->add_option("--depth-out", depth_out, "16-bit depth PNG");

  RunArgs sweep_args;
  std::string param, sweep_out;
  std::vector<std::string> values;
  bool benchmark = false;
  int trials = 20;
  auto* sweep_cmd = app.add_subcommand("sweep", "repeat a run over values of one sampling parameter");
  add_run_flags(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--param", param, "N | alpha | theta")->required();
  sweep_cmd->add_option("--values", values, "comma-separated values")->delimiter(',')->required();
  sweep_cmd->add_option("--out", sweep_out, "CSV path (default stdout)");
  sweep_cmd->add_flag("--benchmark", benchmark, "single-frame outlier-flow trials instead of full runs");
  sweep_cmd->add_option("--trials", trials, "trials per value in benchmark mode")->check(CLI::PositiveNumber);
  // Benchmark mode builds its own scene.
  sweep_cmd->get_option("--input")->required(false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run_args, run_out, run_clouds, graph_dir);
    if (*synth_cmd) return cmd_synth(synth_spec, synth_frames, synth_out);
    if (*eval_cmd) return cmd_eval(est, gt, metric, with_scale);
    if (*render_cmd) return cmd_render(map_path, pose_line, render_out, intrinsics, depth_out);
    if (*sweep_cmd) {
      if (!benchmark && sweep_args.input.empty()) throw UsageError("--input is required unless --benchmark");
      return cmd_sweep(sweep_args, param, values, sweep_out, benchmark, trials);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumeric;
  } catch (const EvalError& e) {
    std::fprintf(stderr, "evaluation failed: %s\n", e.what());
    return kNumeric;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const FlowFormatError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumeric;
  }
  return kUsage;
}
