#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splatflow/dba.hpp"
#include "splatflow/flow.hpp"
#include "splatflow/frame.hpp"
#include "splatflow/gaussian_map.hpp"
#include "splatflow/renderer.hpp"

namespace splatflow {

struct SamplingSettings {
  /// Graph size: one real edge plus nodes - 1 rendered ones.
  int nodes = 6;
  double alpha = 5.0;
  double theta_deg = 30.0;
  std::uint64_t seed = 0;
  /// Sampling radius used when the last two positions coincide [m].
  double min_radius = 0.01;
  /// Use the sampled offset itself as the translation instead of adding it
  /// to the previous position.
  bool literal_offsets = false;

  void validate() const;
};

/// Rotation of the previous pose, translation extrapolated at constant velocity.
Pose inertia_extrapolate(const Pose& prev, const Pose& prev2);

/// nodes - 1 poses with the previous rotation whose translations sit on a
/// cone of half-angle theta around the motion direction, at distance
/// alpha * |T_prev - T_prev2| from T_prev. The azimuth phase is drawn from
/// the seed.
std::vector<Pose> spherical_sample(const Pose& prev, const Pose& prev2, const SamplingSettings& settings);
std::vector<Pose> spherical_sample(const Pose& prev, const Pose& prev2, const SamplingSettings& settings,
                                   double phase);

struct GraphSettings {
  /// Rendered nodes whose coverage falls below this fraction are dropped.
  double min_coverage = 0.2;
  double coverage_silhouette = 0.5;
  /// Rendered depth is trusted only where the silhouette exceeds this.
  double depth_silhouette = 0.9;
  /// Rendered depth is dropped where it differs from the dominant Gaussian's
  /// depth by more than this fraction; 0 disables the check.
  double max_mixing = 0.02;
  RenderSettings render;
};

struct GraphNode {
  Pose pose;
  ColorImage color;
  DepthMap depth;
  ScalarImage silhouette;
  bool real = false;
  /// Frame index for the real node, -1 for renders.
  int frame = -1;
  double coverage = 1.0;
  /// Per-pixel observation each rendered pixel stems from; empty for the real node.
  std::vector<PixelOrigin> origins;
};

/// Node 0 is the previous frame; further nodes are renders of the map at
/// the sampled poses that keep enough coverage.
std::vector<GraphNode> build_graph(const GaussianMap& map, const Frame& prev_frame, const Pose& prev_pose,
                                   const std::vector<Pose>& samples, const GraphSettings& settings = {});

struct TrackerSettings {
  SamplingSettings sampling;
  GraphSettings graph;
  DbaSettings dba;
  int flow_divisor = 8;
  int outer_rounds = 3;
  EdgeDirection direction = EdgeDirection::neighbor_to_target;
};

struct PosedFrame {
  const Frame* frame = nullptr;
  Pose pose;
};

struct FeedforwardResult {
  Pose pose;
  /// Inertia prediction the solve started from.
  Pose initial;
  DbaSolution solution;
  int nodes = 0;
  int edges = 0;
  std::vector<GraphNode> graph;
};

std::string frame_key(int index);

/// Inertia prediction, local graph rendering, flow queries and the fixed-depth
/// pose solve, re-linearized for `outer_rounds` rounds. `history` holds the
/// posed frames before the target, oldest first.
FeedforwardResult feedforward_track(const GaussianMap& map, const std::vector<PosedFrame>& history,
                                    const Frame& target, const FlowProvider& flow, const TrackerSettings& settings);

}  // namespace splatflow
