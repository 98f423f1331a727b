#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "splatflow/gaussian_map.hpp"
#include "splatflow/geometry.hpp"
#include "splatflow/image.hpp"

namespace splatflow {

struct RenderSettings {
  /// Footprint truncation in units of the projected standard deviation.
  double cutoff_sigma = 3.0;
  double max_alpha = 0.999;
  /// Compositing of a pixel stops once transmittance drops below this.
  double min_transmittance = 1e-4;
  int tile_size = 8;
};

/// Screen-space footprint of one Gaussian.
struct Splat {
  std::uint32_t gaussian = 0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius_px = 0.0;
  double depth = 0.0;
  Eigen::Vector3d camera_point = Eigen::Vector3d::Zero();
};

/// Returns nullopt when the Gaussian is behind the camera or its truncated
/// footprint misses the image rectangle.
std::optional<Splat> project_splat(const Gaussian& g, const Pose& world_from_camera, const Intrinsics& k,
                                   double cutoff_sigma = 3.0);

/// One composited splat at one pixel.
struct Contribution {
  std::uint32_t splat = 0;  // index into RenderOutput::splats
  bool clipped = false;
  double alpha = 0.0;
  double transmittance = 0.0;  // before this splat
};

struct RenderOutput {
  ColorImage color;
  ScalarImage depth;       // alpha-weighted mean depth; 0 where undefined
  ScalarImage silhouette;  // accumulated opacity
  /// Unnormalized depth sum, kept for the backward pass.
  ScalarImage depth_sum;
  std::vector<Splat> splats;  // sorted front to back
  std::vector<std::uint32_t> offsets;  // pixel i owns contributions[offsets[i], offsets[i+1])
  std::vector<Contribution> contributions;

  int width() const { return color.width(); }
  int height() const { return color.height(); }
  bool depth_defined(std::size_t i) const { return silhouette[i] > 0.0; }
  /// Depth map view: valid where the silhouette is positive.
  DepthMap depth_map() const;
  /// Gaussian with the largest compositing weight at a pixel, or -1.
  int dominant_gaussian(int x, int y) const;
};

RenderOutput render(const GaussianMap& map, const Pose& world_from_camera, const Intrinsics& k,
                    const RenderSettings& settings = {});

/// Weighted L1 photometric and depth loss against targets.
struct LossSpec {
  const ColorImage* color_target = nullptr;
  double color_weight = 0.5;
  const DepthMap* depth_target = nullptr;
  double depth_weight = 1.0;
  /// Pixels whose rendered silhouette is <= this value are ignored;
  /// negative disables the mask.
  double silhouette_mask = -1.0;
};

double compute_loss(const RenderOutput& out, const LossSpec& loss);

struct RenderGradients {
  std::vector<Eigen::Vector3d> center;
  std::vector<double> radius;
  std::vector<double> opacity;
  std::vector<Eigen::Vector3d> color;
  /// Gradient w.r.t. a camera-frame increment: camera <- camera * exp(xi).
  Tangent pose = Tangent::Zero();

  void resize(std::size_t n);
};

struct GradientRequest {
  bool gaussians = true;
  bool pose = true;
};

struct LossAndGradients {
  double loss = 0.0;
  RenderGradients gradients;
};

/// Analytic gradients of compute_loss(out, loss) for a render produced by
/// render(map, camera, k).
LossAndGradients backward(const RenderOutput& out, const GaussianMap& map, const Pose& world_from_camera,
                          const Intrinsics& k, const LossSpec& loss, const GradientRequest& request = {});

LossAndGradients render_with_gradients(const GaussianMap& map, const Pose& world_from_camera, const Intrinsics& k,
                                       const LossSpec& loss, const RenderSettings& settings = {},
                                       const GradientRequest& request = {});

}  // namespace splatflow
