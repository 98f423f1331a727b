#include "splatflow/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace splatflow {

TrackerKind parse_tracker(const std::string& name) {
  if (name == "ff" || name == "feedforward") return TrackerKind::feedforward;
  if (name == "ff-nolgr" || name == "feedforward_no_lgr") return TrackerKind::feedforward_no_lgr;
  if (name == "iter" || name == "iterative") return TrackerKind::iterative;
  throw std::invalid_argument("unknown tracker '" + name + "' (ff, ff-nolgr, iter)");
}

const char* to_string(TrackerKind kind) {
  switch (kind) {
    case TrackerKind::feedforward: return "ff";
    case TrackerKind::feedforward_no_lgr: return "ff-nolgr";
    case TrackerKind::iterative: return "iter";
  }
  return "unknown";
}

void PipelineSettings::validate() const {
  feedforward.sampling.validate();
  optim.validate();
  const int d = feedforward.flow_divisor;
  if (d != 1 && d != 2 && d != 4 && d != 8) throw std::invalid_argument("flow divisor must be 1, 2, 4 or 8");
  if (keyframe_every < 1 || keyframe_window < 1 || mapping_every < 1 || cloud_stride < 1 || map.stride < 1) {
    throw std::invalid_argument("keyframe, mapping and stride settings must be positive");
  }
  if (feedforward.outer_rounds < 1 || feedforward.dba.max_iterations < 1) {
    throw std::invalid_argument("solver round and iteration counts must be positive");
  }
}

// --- configuration --------------------------------------------------------

namespace {

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double x = std::stod(v, &used);
  if (used != v.size() || !std::isfinite(x)) throw std::invalid_argument("not a number: '" + v + "'");
  return x;
}

long long to_int(const std::string& v) {
  std::size_t used = 0;
  const long long x = std::stoll(v, &used);
  if (used != v.size()) throw std::invalid_argument("not an integer: '" + v + "'");
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw std::invalid_argument("not a boolean: '" + v + "'");
}

// Shortest text that reads back to the same double.
std::string fmt(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

struct Key {
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

template <typename Access>
Key real_key(Access access) {
  return {[access](Config& c, const std::string& v) { access(c) = to_double(v); },
          [access](const Config& c) { return fmt(access(const_cast<Config&>(c))); }};
}

template <typename Access>
Key int_key(Access access) {
  return {[access](Config& c, const std::string& v) { access(c) = static_cast<int>(to_int(v)); },
          [access](const Config& c) { return std::to_string(access(const_cast<Config&>(c))); }};
}

template <typename Access>
Key bool_key(Access access) {
  return {[access](Config& c, const std::string& v) { access(c) = to_bool(v); },
          [access](const Config& c) { return std::string(access(const_cast<Config&>(c)) ? "true" : "false"); }};
}

#define SF_REAL(name, field) {name, real_key([](Config& c) -> double& { return c.field; })}
#define SF_INT(name, field) {name, int_key([](Config& c) -> int& { return c.field; })}
#define SF_BOOL(name, field) {name, bool_key([](Config& c) -> bool& { return c.field; })}

const std::map<std::string, Key>& keys() {
  static const std::map<std::string, Key> table = {
      {"tracker", {[](Config& c, const std::string& v) { c.pipeline.tracker = parse_tracker(v); },
                   [](const Config& c) { return std::string(to_string(c.pipeline.tracker)); }}},
      {"seed", {[](Config& c, const std::string& v) {
                  std::size_t used = 0;
                  c.seed = std::stoull(v, &used);
                  if (used != v.size()) throw std::invalid_argument("not an unsigned integer: '" + v + "'");
                },
                [](const Config& c) { return std::to_string(c.seed); }}},
      SF_INT("sampling.nodes", pipeline.feedforward.sampling.nodes),
      SF_REAL("sampling.alpha", pipeline.feedforward.sampling.alpha),
      SF_REAL("sampling.theta_deg", pipeline.feedforward.sampling.theta_deg),
      SF_REAL("sampling.min_radius", pipeline.feedforward.sampling.min_radius),
      SF_BOOL("sampling.literal_offsets", pipeline.feedforward.sampling.literal_offsets),
      SF_REAL("graph.min_coverage", pipeline.feedforward.graph.min_coverage),
      SF_REAL("graph.coverage_silhouette", pipeline.feedforward.graph.coverage_silhouette),
      SF_REAL("graph.depth_silhouette", pipeline.feedforward.graph.depth_silhouette),
      SF_REAL("graph.max_mixing", pipeline.feedforward.graph.max_mixing),
      SF_INT("flow.divisor", pipeline.feedforward.flow_divisor),
      SF_REAL("flow.sigma_px", flow_noise.sigma_px),
      SF_REAL("flow.outlier_fraction", flow_noise.outlier_fraction),
      SF_REAL("flow.outlier_confidence", flow_noise.outlier_confidence),
      SF_INT("dba.max_iterations", pipeline.feedforward.dba.max_iterations),
      SF_REAL("dba.lambda0", pipeline.feedforward.dba.lambda0),
      SF_REAL("dba.tolerance", pipeline.feedforward.dba.tangent_tolerance),
      SF_BOOL("dba.huber", pipeline.feedforward.dba.huber),
      SF_REAL("dba.huber_threshold_px", pipeline.feedforward.dba.huber_threshold_px),
      SF_INT("dba.outer_rounds", pipeline.feedforward.outer_rounds),
      {"dba.direction",
       {[](Config& c, const std::string& v) {
          if (v == "neighbor_to_target") c.pipeline.feedforward.direction = EdgeDirection::neighbor_to_target;
          else if (v == "target_to_neighbor") c.pipeline.feedforward.direction = EdgeDirection::target_to_neighbor;
          else throw std::invalid_argument("dba.direction must be neighbor_to_target or target_to_neighbor");
        },
        [](const Config& c) {
          return std::string(c.pipeline.feedforward.direction == EdgeDirection::neighbor_to_target
                                 ? "neighbor_to_target"
                                 : "target_to_neighbor");
        }}},
      SF_REAL("track.divergence_px2", pipeline.divergence_px2),
      SF_INT("optim.mapping_iterations", pipeline.optim.mapping_iterations),
      SF_INT("optim.tracking_iterations", pipeline.optim.tracking_iterations),
      SF_REAL("optim.lr_center", pipeline.optim.lr_center),
      SF_REAL("optim.lr_radius", pipeline.optim.lr_radius),
      SF_REAL("optim.lr_opacity", pipeline.optim.lr_opacity),
      SF_REAL("optim.lr_color", pipeline.optim.lr_color),
      SF_REAL("optim.lr_pose_rotation", pipeline.optim.lr_pose_rotation),
      SF_REAL("optim.lr_pose_translation", pipeline.optim.lr_pose_translation),
      SF_REAL("optim.color_weight", pipeline.optim.color_weight),
      SF_REAL("optim.depth_weight", pipeline.optim.depth_weight),
      SF_REAL("optim.tracking_silhouette", pipeline.optim.tracking_silhouette),
      SF_BOOL("optim.adaptive", pipeline.optim.adaptive_steps),
      SF_REAL("map.initial_opacity", pipeline.map.initial_opacity),
      SF_REAL("map.initial_scale", pipeline.map.initial_scale),
      SF_REAL("map.silhouette_threshold", pipeline.map.silhouette_threshold),
      SF_REAL("map.depth_error_threshold", pipeline.map.depth_error_threshold),
      SF_REAL("map.prune_opacity", pipeline.map.prune_opacity),
      SF_INT("map.stride", pipeline.map.stride),
      SF_INT("keyframe.every", pipeline.keyframe_every),
      SF_INT("keyframe.window", pipeline.keyframe_window),
      SF_INT("mapping.every", pipeline.mapping_every),
      SF_REAL("depth.sigma", depth_noise.sigma),
      SF_REAL("depth.outlier_fraction", depth_noise.outlier_fraction),
      SF_INT("cloud.stride", pipeline.cloud_stride),
  };
  return table;
}

#undef SF_REAL
#undef SF_INT
#undef SF_BOOL

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
  const auto it = keys().find(key);
  if (it == keys().end()) throw std::invalid_argument("unknown config key '" + key + "'");
  try {
    it->second.set(*this, value);
  } catch (const std::out_of_range&) {
    throw std::invalid_argument(key + ": value out of range");
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(key + ": " + e.what());
  }
}

std::string Config::dump() const {
  std::string out;
  for (const auto& [name, key] : keys()) out += name + " = " + key.get(*this) + "\n";
  return out;
}

Config parse_config(const std::string& text, Config base, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    try {
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return base;
}

Config load_config(const std::filesystem::path& path, Config base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), std::move(base), path.string());
}

// --- providers and sources ------------------------------------------------

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

DepthMap OracleDepthProvider::depth(const FrameInput& input) const {
  if (!input.gt_depth) throw std::runtime_error("oracle depth: frame " + std::to_string(input.index) + " has no ground truth");
  DepthMap out = *input.gt_depth;
  std::mt19937_64 rng(mix(seed_, static_cast<std::uint64_t>(input.index)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::size_t> valid;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (!out.valid(x, y)) continue;
      out.set(x, y, out(x, y) * std::exp(noise_.sigma * gauss(rng)));
      valid.push_back(static_cast<std::size_t>(y) * out.width() + x);
    }
  }
  if (noise_.outlier_fraction > 0 && !valid.empty()) {
    std::shuffle(valid.begin(), valid.end(), rng);
    const auto n = static_cast<std::size_t>(
        std::lround(std::clamp(noise_.outlier_fraction, 0.0, 1.0) * static_cast<double>(valid.size())));
    std::uniform_real_distribution<double> factor(0.5, 2.0);
    for (std::size_t i = 0; i < n; ++i) {
      const int x = static_cast<int>(valid[i] % out.width());
      const int y = static_cast<int>(valid[i] / out.width());
      out.set(x, y, out(x, y) * factor(rng));
    }
  }
  return out;
}

DepthMap FileDepthProvider::depth(const FrameInput& input) const {
  std::filesystem::path path = input.depth_path;
  if (!dir_.empty()) path = dir_ / (input.rgb_path.stem().string() + ".png");
  if (path.empty()) throw IoError("no depth file for frame " + std::to_string(input.index));
  DepthMap d = read_png_depth(path, scale_);
  // Downscaled sources keep full-size depth files on disk.
  const int w = input.rgb.width();
  if (w > 0 && d.width() != w && d.width() % w == 0) {
    const int s = d.width() / w;
    if (subsampled_extent(d.height(), s) == input.rgb.height()) d = d.subsampled(s);
  }
  return d;
}

SyntheticSource::SyntheticSource(const SyntheticSpec& spec, Intrinsics k)
    : spec_(spec),
      scene_(SyntheticScene::standard(spec.scene_seed, spec.spheres)),
      poses_(make_trajectory(spec.trajectory)),
      k_(k) {
  k_.validate();
}

double SyntheticSource::timestamp(std::size_t i) const { return static_cast<double>(i) / spec_.trajectory.fps; }

FrameInput SyntheticSource::load(std::size_t i) const {
  if (i >= poses_.size()) throw std::out_of_range("synthetic frame index out of range");
  SyntheticView view = render_synthetic(scene_, poses_[i], k_);
  FrameInput in;
  in.index = static_cast<int>(i);
  in.timestamp = timestamp(i);
  in.rgb = std::move(view.rgb);
  in.gt_depth = std::move(view.depth);
  return in;
}

std::optional<Trajectory> SyntheticSource::groundtruth() const {
  Trajectory t;
  for (std::size_t i = 0; i < poses_.size(); ++i) t.push_back({timestamp(i), poses_[i]});
  return t;
}

TumSource::TumSource(const std::filesystem::path& dir, std::optional<Intrinsics> k, int downscale)
    : seq_(load_tum(dir)), downscale_(downscale) {
  if (downscale < 1) throw std::invalid_argument("downscale must be at least 1");
  if (k) {
    full_ = *k;
  } else if (seq_.intrinsics) {
    full_ = *seq_.intrinsics;
  } else {
    throw IoError("no intrinsics for " + dir.string() + " (add calibration.txt: fx fy cx cy width height)");
  }
  full_.validate();
  k_ = full_.subsampled(downscale);
}

FrameInput TumSource::load(std::size_t i) const {
  const TumEntry& e = seq_.frames.at(i);
  FrameInput in;
  in.index = static_cast<int>(i);
  in.timestamp = e.timestamp;
  in.rgb = read_png_rgb(e.rgb);
  in.rgb_path = e.rgb;
  in.depth_path = e.depth;
  if (in.rgb.width() != full_.width || in.rgb.height() != full_.height) {
    throw DimensionMismatch("image " + e.rgb.string() + " does not match the calibration size");
  }
  if (downscale_ > 1) in.rgb = subsample(in.rgb, downscale_);
  return in;
}

std::optional<Trajectory> TumSource::groundtruth() const {
  if (seq_.groundtruth.empty()) return std::nullopt;
  return seq_.groundtruth;
}

// --- pipeline -------------------------------------------------------------

PointCloud emit_pointcloud(const Frame& frame, const Pose& pose, int stride) {
  stride = std::max(1, stride);
  PointCloud cloud;
  const Intrinsics& k = frame.intrinsics;
  for (int y = 0; y < frame.depth.height(); y += stride) {
    for (int x = 0; x < frame.depth.width(); x += stride) {
      if (!frame.depth.valid(x, y)) continue;
      cloud.points.push_back(pose * backproject({x, y}, frame.depth(x, y), k));
      cloud.colors.push_back(frame.rgb(x, y));
    }
  }
  return cloud;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool finite(const Pose& p) { return p.translation().allFinite() && p.rotation().coeffs().allFinite(); }

}  // namespace

Pipeline::Pipeline(PipelineSettings settings, Intrinsics k, const DepthProvider& depth, const FlowProvider* flow,
                   std::uint64_t seed)
    : settings_(std::move(settings)),
      k_(k),
      depth_(depth),
      flow_(flow),
      seed_(seed),
      window_(static_cast<std::size_t>(std::max(1, settings_.keyframe_window))) {
  settings_.validate();
  k_.validate();
  if (settings_.tracker != TrackerKind::iterative && flow_ == nullptr) {
    throw std::invalid_argument("feed-forward tracking needs a flow provider");
  }
}

StepResult Pipeline::step(const FrameInput& input) {
  StepResult result;
  Frame frame{input.index, input.timestamp, input.rgb, depth_.depth(input), k_};
  frame.validate();
  result.diagnostics.frame = input.index;

  const auto t0 = Clock::now();
  result.pose = trajectory_.empty() ? Pose::identity() : track(frame, result);
  result.diagnostics.track_s = seconds_since(t0);

  const auto t1 = Clock::now();
  update_map(frame, result.pose, result);
  result.diagnostics.map_s = seconds_since(t1);

  result.cloud = emit_pointcloud(frame, result.pose, settings_.cloud_stride);
  result.diagnostics.map_size = map_.size();
  trajectory_.push_back({input.timestamp, result.pose});
  recent_.push_back({std::move(frame), result.pose});
  if (recent_.size() > 2) recent_.erase(recent_.begin());
  diagnostics_.push_back(result.diagnostics);
  return result;
}

Pose Pipeline::track(const Frame& frame, StepResult& result) {
  const Pose& prev = recent_.back().pose;
  if (settings_.tracker == TrackerKind::iterative) {
    Pose init = prev;
    // Constant velocity in both rotation and translation.
    if (recent_.size() >= 2) init = compose(prev, compose(inverse(recent_.front().pose), prev));
    const TrackingResult tr = track_iterative(map_, frame, init, settings_.optim, settings_.render);
    return finite(tr.pose) ? tr.pose : init;
  }

  TrackerSettings ts = settings_.feedforward;
  ts.sampling.seed = mix(seed_, ts.sampling.seed);
  if (settings_.tracker == TrackerKind::feedforward_no_lgr) ts.sampling.nodes = 1;
  std::vector<PosedFrame> history;
  for (const Keyframe& kf : recent_) history.push_back({&kf.frame, kf.pose});

  FeedforwardResult ff = feedforward_track(map_, history, frame, *flow_, ts);
  StepDiagnostics& d = result.diagnostics;
  d.dba_status = ff.solution.status;
  d.dba_mean_residual = ff.solution.mean_residual;
  d.graph_nodes = ff.nodes;
  d.graph_edges = ff.edges;
  d.fallback = ff.solution.status == DbaStatus::singular || ff.solution.status == DbaStatus::no_constraints ||
               ff.solution.mean_residual > settings_.divergence_px2 || !finite(ff.pose);
  result.graph = std::move(ff.graph);
  return d.fallback ? ff.initial : ff.pose;
}

void Pipeline::update_map(const Frame& frame, const Pose& pose, StepResult& result) {
  const int t = static_cast<int>(trajectory_.size());
  if (map_.empty()) {
    const NewGaussians init = init_from_depth(frame, pose, {}, settings_.map);
    map_.append(init);
    result.diagnostics.gaussians_added = init.size();
  } else {
    const RenderOutput out = render(map_, pose, k_, settings_.render);
    result.diagnostics.gaussians_added = densify(map_, frame, pose, out.silhouette, out.depth, settings_.map);
  }

  const bool keyframe = t % settings_.keyframe_every == 0;
  if (keyframe) window_.push({frame, pose});
  if (t % settings_.mapping_every == 0) {
    std::vector<const Keyframe*> frames;
    for (const Keyframe& kf : window_) frames.push_back(&kf);
    Keyframe current{frame, pose};
    if (!keyframe) frames.push_back(&current);
    const MappingReport rep = mapping_step(map_, frames, settings_.optim, settings_.render);
    result.diagnostics.mapping_loss = rep.final_loss;
  }
  prune(map_, settings_.map);
}

RunReport run(const Config& config, const FrameSource& source, const DepthProvider& depth, const FlowProvider* flow,
              const StepObserver& observer) {
  Pipeline pipeline(config.pipeline, source.intrinsics(), depth, flow, config.seed);
  RunReport report;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const FrameInput input = source.load(i);
    StepResult r = pipeline.step(input);
    if (observer) observer(input, r);
    if (config.pipeline.keep_clouds) report.clouds.push_back(std::move(r.cloud));
  }
  report.trajectory = pipeline.trajectory();
  report.diagnostics = pipeline.diagnostics();
  report.map = pipeline.map();
  return report;
}

SyntheticProviders make_synthetic_providers(const Config& config, const SyntheticSource& source) {
  SyntheticProviders p;
  p.depth = std::make_unique<OracleDepthProvider>(config.depth_noise, mix(config.seed, 0xD1));
  p.flow = std::make_unique<OracleFlowProvider>(source.scene(), source.poses(), source.intrinsics(),
                                                config.flow_noise, mix(config.seed, 0xF1));
  return p;
}

RenderQuality render_quality(const GaussianMap& map, const FrameSource& source, const Trajectory& trajectory,
                             int every, const RenderSettings& render_settings) {
  RenderQuality q;
  every = std::max(1, every);
  const std::size_t n = std::min(source.size(), trajectory.size());
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(every)) {
    const FrameInput in = source.load(i);
    const RenderOutput out = render(map, trajectory[i].pose, source.intrinsics(), render_settings);
    q.psnr += psnr(out.color, in.rgb);
    q.ssim += ssim(out.color, in.rgb);
    ++q.frames;
  }
  if (q.frames) {
    q.psnr /= q.frames;
    q.ssim /= q.frames;
  }
  return q;
}

// --- local graph benchmark ------------------------------------------------

namespace {

Eigen::Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(g(rng), g(rng), g(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

Tangent rotation_step(const Eigen::Vector3d& axis, double deg) {
  Tangent xi = Tangent::Zero();
  xi.head<3>() = axis * deg * std::numbers::pi / 180.0;
  return xi;
}

}  // namespace

std::vector<LgrTrial> run_lgr_benchmark(const LgrBenchmark& bench) {
  const SyntheticScene scene = SyntheticScene::standard(1);
  const Intrinsics k = standard_intrinsics();
  MapSettings map_settings;
  map_settings.stride = bench.map_stride;
  map_settings.initial_scale = bench.map_stride;

  std::vector<LgrTrial> trials;
  for (int trial = 0; trial < bench.trials; ++trial) {
    std::mt19937_64 rng(mix(bench.seed, static_cast<std::uint64_t>(trial)));
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    const Eigen::Vector3d eye(-1.0 + 2.0 * uni(rng), -0.5 + 0.6 * uni(rng), -1.0 + 2.0 * uni(rng));
    const double yaw = 2.0 * std::numbers::pi * uni(rng);
    const Eigen::Vector3d target = eye + 2.0 * Eigen::Vector3d(std::cos(yaw), 0.0, std::sin(yaw)) +
                                   Eigen::Vector3d(0.0, 0.1, 0.0);
    const Pose p0 = look_at(eye, target);
    const Eigen::Vector3d v = bench.step_translation * random_unit(rng);
    const Tangent w = rotation_step(random_unit(rng), bench.step_rotation_deg);
    const Pose p1(compose(p0, exp(w)).rotation(), p0.translation() + v);
    const Tangent dw = rotation_step(random_unit(rng), bench.init_rotation_deg);
    const Eigen::Vector3d dt = bench.init_translation * random_unit(rng);
    const Pose p2(compose(compose(p1, exp(w)), exp(dw)).rotation(), p1.translation() + v + dt);
    const std::vector<Pose> gt{p0, p1, p2};

    std::vector<Frame> frames;
    for (int i = 0; i < 3; ++i) {
      SyntheticView view = render_synthetic(scene, gt[static_cast<std::size_t>(i)], k);
      frames.push_back(Frame{i, i / 30.0, std::move(view.rgb), std::move(view.depth), k});
    }
    GaussianMap map;
    map.append(init_from_depth(frames[0], p0, {}, map_settings));
    const RenderOutput seen = render(map, p1, k);
    densify(map, frames[1], p1, seen.silhouette, seen.depth, map_settings);

    const OracleFlowProvider flow(scene, gt, k, bench.flow_noise, mix(bench.seed, 1000 + static_cast<std::uint64_t>(trial)));
    TrackerSettings ts = bench.tracker;
    ts.sampling.seed = mix(bench.seed, 2000 + static_cast<std::uint64_t>(trial));
    const std::vector<PosedFrame> history{{&frames[0], p0}, {&frames[1], p1}};
    const FeedforwardResult r = feedforward_track(map, history, frames[2], flow, ts);

    trials.push_back({translation_distance(r.pose, p2), rotation_distance(r.pose, p2), r.nodes});
  }
  return trials;
}

ErrorSummary summarize(const std::vector<LgrTrial>& trials) {
  auto median = [](std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  };
  std::vector<double> t, r;
  for (const LgrTrial& x : trials) {
    t.push_back(x.translation_error);
    r.push_back(x.rotation_error);
  }
  return {median(t), median(r)};
}

}  // namespace splatflow
