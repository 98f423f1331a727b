#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "splatflow/eval.hpp"
#include "splatflow/flow.hpp"
#include "splatflow/frame.hpp"
#include "splatflow/gaussian_map.hpp"
#include "splatflow/io.hpp"
#include "splatflow/local_graph.hpp"
#include "splatflow/optimizer.hpp"
#include "splatflow/synthetic.hpp"

namespace splatflow {

enum class TrackerKind { feedforward, feedforward_no_lgr, iterative };

/// Accepts ff / ff-nolgr / iter and the long names.
TrackerKind parse_tracker(const std::string& name);
const char* to_string(TrackerKind kind);

struct PipelineSettings {
  TrackerKind tracker = TrackerKind::feedforward;
  TrackerSettings feedforward;
  OptimSettings optim;
  MapSettings map;
  RenderSettings render;

  int keyframe_every = 5;
  int keyframe_window = 8;
  /// Run the mapping step every this many frames.
  int mapping_every = 1;
  /// Feed-forward solves with a larger weighted mean residual fall back to
  /// the inertia prediction [px^2].
  double divergence_px2 = 25.0;
  int cloud_stride = 1;
  bool keep_clouds = false;

  void validate() const;
};

struct DepthNoise {
  /// Standard deviation of the multiplicative log-normal factor.
  double sigma = 0.02;
  /// Fraction of valid pixels scaled by a uniform factor in [0.5, 2].
  double outlier_fraction = 0.0;
};

/// Everything a run needs besides its input.
struct Config {
  PipelineSettings pipeline;
  OracleNoise flow_noise{.sigma_px = 0.5};
  DepthNoise depth_noise;
  std::uint64_t seed = 0;

  /// Sets one `key = value` entry; throws std::invalid_argument on unknown
  /// keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Sorted `key = value` lines for every key `set` understands.
  std::string dump() const;
};

/// Reads `key = value` lines ('#' starts a comment) on top of `base`.
Config load_config(const std::filesystem::path& path, Config base = {});
Config parse_config(const std::string& text, Config base = {}, const std::string& origin = "<config>");

/// One raw input frame before pseudo-depth is attached.
struct FrameInput {
  int index = 0;
  double timestamp = 0.0;
  ColorImage rgb;
  /// Exact depth for synthetic inputs.
  std::optional<DepthMap> gt_depth;
  std::filesystem::path rgb_path;
  std::filesystem::path depth_path;
};

class DepthProvider {
 public:
  virtual ~DepthProvider() = default;
  /// Depth for a frame; valid entries are positive.
  virtual DepthMap depth(const FrameInput& input) const = 0;
};

/// Ground-truth depth corrupted by per-pixel log-normal noise and outliers.
class OracleDepthProvider : public DepthProvider {
 public:
  OracleDepthProvider(DepthNoise noise, std::uint64_t seed) : noise_(noise), seed_(seed) {}
  DepthMap depth(const FrameInput& input) const override;

 private:
  DepthNoise noise_;
  std::uint64_t seed_;
};

/// 16-bit PNG depth; either the frame's own depth path or
/// `<directory>/<rgb file stem>.png`.
class FileDepthProvider : public DepthProvider {
 public:
  explicit FileDepthProvider(std::filesystem::path directory = {}, double counts_per_meter = kTumDepthScale)
      : dir_(std::move(directory)), scale_(counts_per_meter) {}
  DepthMap depth(const FrameInput& input) const override;

 private:
  std::filesystem::path dir_;
  double scale_;
};

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::size_t size() const = 0;
  virtual FrameInput load(std::size_t i) const = 0;
  virtual const Intrinsics& intrinsics() const = 0;
  /// Ground-truth trajectory when known.
  virtual std::optional<Trajectory> groundtruth() const { return std::nullopt; }
};

class SyntheticSource : public FrameSource {
 public:
  explicit SyntheticSource(const SyntheticSpec& spec, Intrinsics k = standard_intrinsics());

  std::size_t size() const override { return poses_.size(); }
  FrameInput load(std::size_t i) const override;
  const Intrinsics& intrinsics() const override { return k_; }
  std::optional<Trajectory> groundtruth() const override;

  const SyntheticScene& scene() const { return scene_; }
  const std::vector<Pose>& poses() const { return poses_; }
  double timestamp(std::size_t i) const;

 private:
  SyntheticSpec spec_;
  SyntheticScene scene_;
  std::vector<Pose> poses_;
  Intrinsics k_;
};

class TumSource : public FrameSource {
 public:
  /// Intrinsics come from calibration.txt unless given explicitly. Images are
  /// point-subsampled by `downscale` (depth files follow in FileDepthProvider).
  explicit TumSource(const std::filesystem::path& dir, std::optional<Intrinsics> k = std::nullopt,
                     int downscale = 1);

  std::size_t size() const override { return seq_.frames.size(); }
  FrameInput load(std::size_t i) const override;
  const Intrinsics& intrinsics() const override { return k_; }
  std::optional<Trajectory> groundtruth() const override;
  const TumSequence& sequence() const { return seq_; }

 private:
  TumSequence seq_;
  int downscale_ = 1;
  Intrinsics full_;
  Intrinsics k_;
};

struct StepDiagnostics {
  int frame = 0;
  double track_s = 0.0;
  double map_s = 0.0;
  bool fallback = false;
  DbaStatus dba_status = DbaStatus::converged;
  double dba_mean_residual = 0.0;
  int graph_nodes = 0;
  int graph_edges = 0;
  std::size_t gaussians_added = 0;
  std::size_t map_size = 0;
  double mapping_loss = 0.0;
};

struct StepResult {
  Pose pose;
  PointCloud cloud;
  StepDiagnostics diagnostics;
  /// Local graph of a feed-forward step, for debugging dumps.
  std::vector<GraphNode> graph;
};

/// World-frame points of valid depth pixels on a stride grid, with colors.
PointCloud emit_pointcloud(const Frame& frame, const Pose& pose, int stride = 1);

class Pipeline {
 public:
  /// `flow` may be null for the iterative tracker.
  Pipeline(PipelineSettings settings, Intrinsics k, const DepthProvider& depth, const FlowProvider* flow,
           std::uint64_t seed = 0);

  StepResult step(const FrameInput& input);

  const GaussianMap& map() const { return map_; }
  const Trajectory& trajectory() const { return trajectory_; }
  const std::vector<StepDiagnostics>& diagnostics() const { return diagnostics_; }
  const PipelineSettings& settings() const { return settings_; }

 private:
  Pose track(const Frame& frame, StepResult& result);
  void update_map(const Frame& frame, const Pose& pose, StepResult& result);

  PipelineSettings settings_;
  Intrinsics k_;
  const DepthProvider& depth_;
  const FlowProvider* flow_;
  std::uint64_t seed_;

  GaussianMap map_;
  Trajectory trajectory_;
  KeyframeWindow window_;
  std::vector<Keyframe> recent_;  // last two posed frames
  std::vector<StepDiagnostics> diagnostics_;
};

struct RunReport {
  Trajectory trajectory;
  std::vector<StepDiagnostics> diagnostics;
  GaussianMap map;
  std::vector<PointCloud> clouds;
};

using StepObserver = std::function<void(const FrameInput&, const StepResult&)>;

/// Streams every frame of `source` through a fresh pipeline.
RunReport run(const Config& config, const FrameSource& source, const DepthProvider& depth, const FlowProvider* flow,
              const StepObserver& observer = {});

/// Providers matching a synthetic source: oracle depth and oracle flow.
struct SyntheticProviders {
  std::unique_ptr<DepthProvider> depth;
  std::unique_ptr<FlowProvider> flow;
};
SyntheticProviders make_synthetic_providers(const Config& config, const SyntheticSource& source);

/// Mean PSNR / SSIM of the map rendered at the estimated poses against the
/// input images, over every `every`-th frame.
struct RenderQuality {
  double psnr = 0.0;
  double ssim = 0.0;
  int frames = 0;
};
RenderQuality render_quality(const GaussianMap& map, const FrameSource& source, const Trajectory& trajectory,
                             int every = 10, const RenderSettings& render_settings = {});

/// Seeded single-frame tracking trials on the synthetic room: a map built
/// from exact depth of the preceding frames, a constant-velocity target and
/// noisy oracle flow with outliers.
struct LgrBenchmark {
  int trials = 50;
  std::uint64_t seed = 1;
  OracleNoise flow_noise{.sigma_px = 0.5, .outlier_fraction = 0.1, .outlier_confidence = 1.0};
  TrackerSettings tracker;
  double step_translation = 0.03;
  double step_rotation_deg = 0.5;
  /// Initial error of the inertia prediction.
  double init_translation = 0.02;
  double init_rotation_deg = 1.0;
  int map_stride = 2;
};

struct LgrTrial {
  double translation_error = 0.0;  // m
  double rotation_error = 0.0;     // rad
  int nodes = 0;
};

std::vector<LgrTrial> run_lgr_benchmark(const LgrBenchmark& bench);

struct ErrorSummary {
  double median_translation = 0.0;
  double median_rotation = 0.0;
};
ErrorSummary summarize(const std::vector<LgrTrial>& trials);

}  // namespace splatflow
