#pragma once

#include <vector>

#include <Eigen/Core>

#include "splatflow/flow.hpp"
#include "splatflow/geometry.hpp"
#include "splatflow/image.hpp"

namespace splatflow {

enum class EdgeDirection {
  /// Pixels of the neighbor (with neighbor depth) land in the target.
  neighbor_to_target,
  /// Pixels of the target (with target depth) land in the neighbor.
  target_to_neighbor,
};

struct DbaEdge {
  Pose neighbor_pose;
  EdgeDirection direction = EdgeDirection::neighbor_to_target;
  /// Depth of the source view on the coarse grid.
  DepthMap depth;
  /// Corrected correspondences p* in the destination view.
  PixelField corrected;
  /// Per-axis confidences, one per pixel.
  std::vector<Eigen::Vector2d> weights;

  /// Throws DimensionMismatch unless all grids agree.
  void validate() const;
};

/// Builds an edge from a flow answer: p* = prior + r, weights = confidences.
DbaEdge make_edge(const Pose& neighbor_pose, EdgeDirection direction, DepthMap depth, const PixelField& prior,
                  const FlowField& flow);

struct DbaSettings {
  int max_iterations = 10;
  double lambda0 = 1e-4;
  double lambda_grow = 10.0;
  double lambda_shrink = 0.5;
  double lambda_max = 1e12;
  double tangent_tolerance = 1e-8;
  bool huber = false;
  double huber_threshold_px = 4.0;
};

struct DbaProblem {
  std::vector<DbaEdge> edges;
  Pose initial;
  Intrinsics intrinsics;  // coarse grid
  DbaSettings settings;
};

enum class DbaStatus { converged, max_iterations, singular, no_constraints };

const char* to_string(DbaStatus s);

struct DbaSolution {
  Pose pose;
  /// Sum of w * r^2 over all residual rows at `pose` [px^2].
  double weighted_residual = 0.0;
  /// weighted_residual divided by the total weight.
  double mean_residual = 0.0;
  int iterations = 0;
  DbaStatus status = DbaStatus::max_iterations;
  bool converged() const { return status == DbaStatus::converged; }
  /// Cost after every accepted step, starting with the initial cost.
  std::vector<double> history;
};

using Jacobian26 = Eigen::Matrix<double, 2, 6>;

struct EdgeLinearization {
  std::vector<std::size_t> pixels;
  std::vector<Eigen::Vector2d> residuals;
  std::vector<Jacobian26> jacobians;
  std::vector<Eigen::Vector2d> weights;
};

/// Residuals r = p* - proj(Y) and dr/dxi for the right perturbation
/// G_t <- G_t * exp(xi). Pixels landing behind the camera get zero weight.
EdgeLinearization residuals_and_jacobian(const DbaEdge& edge, const Pose& target_pose, const Intrinsics& k);

/// Weighted squared residual of all edges at `target_pose`.
double dba_cost(const std::vector<DbaEdge>& edges, const Pose& target_pose, const Intrinsics& k,
                const DbaSettings& settings = {}, double* total_weight = nullptr);

/// Levenberg-damped Gauss-Newton over the single unknown target pose.
DbaSolution solve(const DbaProblem& problem);

}  // namespace splatflow
