#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "splatflow/frame.hpp"
#include "splatflow/geometry.hpp"
#include "splatflow/image.hpp"

namespace splatflow {

/// Isotropic 3D Gaussian: o * exp(-|x - center|^2 / (2 r^2)).
struct Gaussian {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.01;
  double opacity = 0.5;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
};

double eval_gaussian(const Gaussian& g, const Eigen::Vector3d& x);

/// Which observation created a Gaussian. The pixel is in full-resolution
/// coordinates of frame `frame`, seen from `camera` (world-from-camera).
struct Provenance {
  int frame = -1;
  double timestamp = 0.0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  Pose camera;
};

struct MapSettings {
  double initial_opacity = 0.5;
  /// Initial radius in units of the one-pixel footprint d / fx.
  double initial_scale = 1.0;
  double silhouette_threshold = 0.5;
  double depth_error_threshold = 0.05;
  double prune_opacity = 0.005;
  double min_radius = 1e-4;
  double max_radius = 1.0;
  int stride = 1;
};

struct NewGaussians {
  std::vector<Gaussian> gaussians;
  std::vector<Provenance> provenance;
  std::size_t size() const { return gaussians.size(); }
};

/// Growable set of Gaussians; per-element provenance travels with each entry.
class GaussianMap {
 public:
  std::size_t size() const { return gaussians_.size(); }
  bool empty() const { return gaussians_.empty(); }

  const std::vector<Gaussian>& gaussians() const { return gaussians_; }
  std::vector<Gaussian>& gaussians() { return gaussians_; }
  const std::vector<Provenance>& provenance() const { return provenance_; }
  const Gaussian& operator[](std::size_t i) const { return gaussians_[i]; }

  void add(const Gaussian& g, const Provenance& origin = {});
  void append(const NewGaussians& batch);
  /// Restores per-field invariants (radius > 0, opacity and color in [0, 1]).
  void clamp(double min_radius, double max_radius);

  /// Keeps elements for which keep(g) is true; returns the number removed.
  template <typename Pred>
  std::size_t retain(Pred keep) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < gaussians_.size(); ++i) {
      if (!keep(gaussians_[i])) continue;
      gaussians_[out] = gaussians_[i];
      provenance_[out] = provenance_[i];
      ++out;
    }
    const std::size_t removed = gaussians_.size() - out;
    gaussians_.resize(out);
    provenance_.resize(out);
    return removed;
  }

 private:
  std::vector<Gaussian> gaussians_;
  std::vector<Provenance> provenance_;
};

/// Lifts masked, valid depth pixels on a stride grid into world-frame
/// Gaussians. An empty mask selects every pixel.
NewGaussians init_from_depth(const Frame& frame, const Pose& world_from_camera, const Mask& mask,
                             const MapSettings& settings);

/// Pixels not yet explained by the map: silhouette below threshold, or valid
/// depth whose rendered value disagrees by more than the relative threshold.
Mask densify_mask(const DepthMap& depth, const ScalarImage& silhouette, const ScalarImage& rendered_depth,
                  const MapSettings& settings);

/// Appends Gaussians for unexplained pixels; returns how many were added.
std::size_t densify(GaussianMap& map, const Frame& frame, const Pose& world_from_camera,
                    const ScalarImage& silhouette, const ScalarImage& rendered_depth, const MapSettings& settings);

/// Drops Gaussians with opacity below the prune threshold or radius outside
/// [min_radius, max_radius]; returns the number removed.
std::size_t prune(GaussianMap& map, const MapSettings& settings);

}  // namespace splatflow
