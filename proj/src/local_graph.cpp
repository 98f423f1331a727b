#include "splatflow/local_graph.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

namespace splatflow {

void SamplingSettings::validate() const {
  if (nodes < 1) throw std::invalid_argument("sampling: node count must be at least 1");
  if (!(alpha > 0.0)) throw std::invalid_argument("sampling: alpha must be positive");
  if (!(theta_deg >= 0.0 && theta_deg <= 90.0)) throw std::invalid_argument("sampling: theta must lie in [0, 90]");
  if (!(min_radius > 0.0)) throw std::invalid_argument("sampling: minimum radius must be positive");
}

Pose inertia_extrapolate(const Pose& prev, const Pose& prev2) {
  return Pose(prev.rotation(), 2.0 * prev.translation() - prev2.translation());
}

std::vector<Pose> spherical_sample(const Pose& prev, const Pose& prev2, const SamplingSettings& settings) {
  std::mt19937_64 rng(settings.seed);
  std::uniform_real_distribution<double> uni(0.0, 2.0 * std::numbers::pi);
  return spherical_sample(prev, prev2, settings, uni(rng));
}

std::vector<Pose> spherical_sample(const Pose& prev, const Pose& prev2, const SamplingSettings& settings,
                                   double phase) {
  settings.validate();
  const Eigen::Vector3d delta = prev.translation() - prev2.translation();
  double rho = settings.alpha * delta.norm();
  Eigen::Vector3d u;
  if (delta.norm() < 1e-9) {
    rho = settings.min_radius;
    u = prev.rotation() * Eigen::Vector3d::UnitZ();
  } else {
    u = delta.normalized();
  }

  // Any axis not parallel to u seeds the orthonormal frame.
  Eigen::Vector3d helper = Eigen::Vector3d::Unit(0);
  if (std::abs(u.y()) < std::abs(u[0]) && std::abs(u.y()) <= std::abs(u.z())) helper = Eigen::Vector3d::UnitY();
  else if (std::abs(u.z()) < std::abs(u[0])) helper = Eigen::Vector3d::UnitZ();
  const Eigen::Vector3d e1 = u.cross(helper).normalized();
  const Eigen::Vector3d e2 = u.cross(e1);

  const double theta = settings.theta_deg * std::numbers::pi / 180.0;
  const int count = settings.nodes - 1;
  std::vector<Pose> samples;
  samples.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int k = 0; k < count; ++k) {
    const double phi = phase + 2.0 * std::numbers::pi * k / count;
    const Eigen::Vector3d v =
        std::cos(theta) * u + std::sin(theta) * (std::cos(phi) * e1 + std::sin(phi) * e2);
    const Eigen::Vector3d t = settings.literal_offsets ? Eigen::Vector3d(rho * v) : Eigen::Vector3d(prev.translation() + rho * v);
    samples.emplace_back(prev.rotation(), t);
  }
  return samples;
}

std::vector<GraphNode> build_graph(const GaussianMap& map, const Frame& prev_frame, const Pose& prev_pose,
                                   const std::vector<Pose>& samples, const GraphSettings& settings) {
  if (map.empty() && !samples.empty()) throw std::invalid_argument("build_graph: empty map");
  std::vector<GraphNode> nodes;
  GraphNode real;
  real.pose = prev_pose;
  real.color = prev_frame.rgb;
  real.depth = prev_frame.depth;
  real.silhouette = ScalarImage(prev_frame.rgb.width(), prev_frame.rgb.height(), 1.0);
  real.real = true;
  real.frame = prev_frame.index;
  nodes.push_back(std::move(real));

  const Intrinsics& k = prev_frame.intrinsics;
  for (const Pose& pose : samples) {
    RenderOutput out = render(map, pose, k, settings.render);
    const std::size_t n = out.silhouette.size();
    std::size_t covered = 0;
    for (std::size_t i = 0; i < n; ++i) covered += out.silhouette[i] > settings.coverage_silhouette ? 1 : 0;
    const double coverage = n ? static_cast<double>(covered) / static_cast<double>(n) : 0.0;
    if (coverage < settings.min_coverage) continue;

    GraphNode node;
    node.pose = pose;
    node.coverage = coverage;
    node.depth = DepthMap(k.width, k.height);
    node.origins.resize(n);
    const auto& provenance = map.provenance();
    const Pose camera_from_world = inverse(pose);
    for (int y = 0; y < k.height; ++y) {
      for (int x = 0; x < k.width; ++x) {
        if (!(out.silhouette(x, y) > settings.depth_silhouette)) continue;
        const int g = out.dominant_gaussian(x, y);
        if (g < 0) continue;
        const double z = (camera_from_world * map[static_cast<std::size_t>(g)].center).z();
        const double d = out.depth(x, y);
        if (z <= kMinDepth || !std::isfinite(d)) continue;
        // Composites that straddle a depth edge match neither surface.
        if (settings.max_mixing > 0.0 && std::abs(d - z) > settings.max_mixing * z) continue;
        node.depth.set(x, y, d);
        // The pixel shows the surface near the dominant Gaussian: take the
        // ray point at that Gaussian's depth and trace it into its source view.
        const Provenance& p = provenance[static_cast<std::size_t>(g)];
        const Eigen::Vector3d world = pose * backproject({x, y}, z, k);
        const Eigen::Vector3d in_origin = inverse(p.camera) * world;
        if (in_origin.z() <= kMinDepth) continue;
        node.origins[static_cast<std::size_t>(y) * k.width + x] = PixelOrigin{p.frame, project(in_origin, k), in_origin.z()};
      }
    }
    node.color = std::move(out.color);
    node.silhouette = std::move(out.silhouette);
    nodes.push_back(std::move(node));
  }
  return nodes;
}

std::string frame_key(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

namespace {

std::uint64_t frame_seed(std::uint64_t seed, int index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::vector<PixelOrigin> subsample_origins(const std::vector<PixelOrigin>& full, int width, int height, int divisor) {
  const int w = subsampled_extent(width, divisor);
  const int h = subsampled_extent(height, divisor);
  std::vector<PixelOrigin> out(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out[static_cast<std::size_t>(y) * w + x] = full[static_cast<std::size_t>(y * divisor) * width + x * divisor];
    }
  }
  return out;
}

}  // namespace

FeedforwardResult feedforward_track(const GaussianMap& map, const std::vector<PosedFrame>& history,
                                    const Frame& target, const FlowProvider& flow, const TrackerSettings& settings) {
  if (history.empty() || history.back().frame == nullptr) {
    throw std::invalid_argument("feedforward_track: needs at least one posed frame");
  }
  target.validate();
  const PosedFrame& prev = history.back();
  // A single prior frame means identity motion.
  const Pose prev2 = history.size() >= 2 ? history[history.size() - 2].pose : prev.pose;

  FeedforwardResult result;
  result.initial = inertia_extrapolate(prev.pose, prev2);
  result.pose = result.initial;

  SamplingSettings sampling = settings.sampling;
  sampling.seed = frame_seed(settings.sampling.seed, target.index);
  const std::vector<Pose> samples =
      map.empty() ? std::vector<Pose>{} : spherical_sample(prev.pose, prev2, sampling);
  result.graph = build_graph(map, *prev.frame, prev.pose, samples, settings.graph);
  result.nodes = static_cast<int>(result.graph.size());

  const int s = settings.flow_divisor;
  const Intrinsics kc = target.intrinsics.subsampled(s);
  const DepthMap target_depth = target.depth.subsampled(s);
  const ColorImage target_rgb = subsample(target.rgb, s);

  struct NodeData {
    DepthMap depth;
    ColorImage color;
    std::vector<PixelOrigin> origins;
    std::string key;
  };
  std::vector<NodeData> data;
  for (std::size_t n = 0; n < result.graph.size(); ++n) {
    const GraphNode& node = result.graph[n];
    NodeData d{node.depth.subsampled(s), subsample(node.color, s), {}, {}};
    if (node.real) {
      d.key = frame_key(node.frame);
    } else {
      d.origins = subsample_origins(node.origins, node.color.width(), node.color.height(), s);
      d.key = frame_key(target.index) + "_node" + std::to_string(n);
    }
    data.push_back(std::move(d));
  }

  const std::string target_key = frame_key(target.index);
  const bool to_target = settings.direction == EdgeDirection::neighbor_to_target;
  const int rounds = std::max(1, settings.outer_rounds);
  for (int round = 0; round < rounds; ++round) {
    DbaProblem problem;
    problem.initial = result.pose;
    problem.intrinsics = kc;
    problem.settings = settings.dba;
    for (std::size_t n = 0; n < result.graph.size(); ++n) {
      const GraphNode& node = result.graph[n];
      const NodeData& d = data[n];
      FlowRequest req;
      req.divisor = s;
      if (to_target) {
        req.source_key = d.key;
        req.target_key = target_key;
        req.source_frame = node.frame;
        req.target_frame = target.index;
        req.source_image = &d.color;
        req.target_image = &target_rgb;
        req.source_origins = d.origins;
        req.prior = correspondence_field(d.depth, node.pose, result.pose, kc);
      } else {
        // The target is the source; its pixels are its own observations.
        if (!node.real) continue;
        req.source_key = target_key;
        req.target_key = d.key;
        req.source_frame = target.index;
        req.target_frame = node.frame;
        req.source_image = &target_rgb;
        req.target_image = &d.color;
        req.prior = correspondence_field(target_depth, result.pose, node.pose, kc);
      }
      FlowField field;
      try {
        field = flow.estimate(req);
      } catch (const FlowUnavailable&) {
        continue;
      }
      problem.edges.push_back(
          make_edge(node.pose, settings.direction, to_target ? d.depth : target_depth, req.prior, field));
    }
    result.edges = static_cast<int>(problem.edges.size());
    if (problem.edges.empty()) {
      result.solution = DbaSolution{};
      result.solution.pose = result.pose;
      result.solution.status = DbaStatus::no_constraints;
      break;
    }
    result.solution = solve(problem);
    if (result.solution.status == DbaStatus::singular || result.solution.status == DbaStatus::no_constraints) break;
    result.pose = result.solution.pose;
  }
  return result;
}

}  // namespace splatflow
