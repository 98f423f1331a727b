#include "splatflow/gaussian_map.hpp"

#include <algorithm>
#include <cmath>

namespace splatflow {

double eval_gaussian(const Gaussian& g, const Eigen::Vector3d& x) {
  return g.opacity * std::exp(-(x - g.center).squaredNorm() / (2.0 * g.radius * g.radius));
}

void GaussianMap::add(const Gaussian& g, const Provenance& origin) {
  gaussians_.push_back(g);
  provenance_.push_back(origin);
}

void GaussianMap::append(const NewGaussians& batch) {
  gaussians_.insert(gaussians_.end(), batch.gaussians.begin(), batch.gaussians.end());
  provenance_.insert(provenance_.end(), batch.provenance.begin(), batch.provenance.end());
}

void GaussianMap::clamp(double min_radius, double max_radius) {
  for (auto& g : gaussians_) {
    g.radius = std::clamp(g.radius, min_radius, max_radius);
    g.opacity = std::clamp(g.opacity, 0.0, 1.0);
    g.color = g.color.cwiseMax(0.0).cwiseMin(1.0);
  }
}

NewGaussians init_from_depth(const Frame& frame, const Pose& world_from_camera, const Mask& mask,
                             const MapSettings& settings) {
  const Intrinsics& k = frame.intrinsics;
  if (frame.depth.width() != k.width || frame.depth.height() != k.height) {
    throw DimensionMismatch("init_from_depth: depth does not match intrinsics");
  }
  if (!mask.empty()) require_same_size(mask, frame.depth.validity(), "init_from_depth mask");
  const int stride = std::max(1, settings.stride);

  NewGaussians out;
  for (int y = 0; y < k.height; y += stride) {
    for (int x = 0; x < k.width; x += stride) {
      if (!mask.empty() && !mask(x, y)) continue;
      if (!frame.depth.valid(x, y)) continue;
      const double d = frame.depth(x, y);
      Gaussian g;
      g.center = world_from_camera * backproject({x, y}, d, k);
      g.radius = d / k.fx * settings.initial_scale;
      g.opacity = settings.initial_opacity;
      g.color = frame.rgb(x, y).cwiseMax(0.0).cwiseMin(1.0);
      out.gaussians.push_back(g);
      out.provenance.push_back({frame.index, frame.timestamp, Eigen::Vector2d(x, y), world_from_camera});
    }
  }
  return out;
}

Mask densify_mask(const DepthMap& depth, const ScalarImage& silhouette, const ScalarImage& rendered_depth,
                  const MapSettings& settings) {
  require_same_size(silhouette, depth.values(), "densify silhouette");
  require_same_size(rendered_depth, depth.values(), "densify depth");
  Mask mask(depth.width(), depth.height(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!depth.valid(i)) continue;
    const bool unseen = silhouette[i] < settings.silhouette_threshold;
    const bool wrong_depth = std::abs(rendered_depth[i] - depth[i]) > settings.depth_error_threshold * depth[i];
    mask[i] = (unseen || wrong_depth) ? 1 : 0;
  }
  return mask;
}

std::size_t densify(GaussianMap& map, const Frame& frame, const Pose& world_from_camera,
                    const ScalarImage& silhouette, const ScalarImage& rendered_depth, const MapSettings& settings) {
  const Mask mask = densify_mask(frame.depth, silhouette, rendered_depth, settings);
  const NewGaussians added = init_from_depth(frame, world_from_camera, mask, settings);
  map.append(added);
  return added.size();
}

std::size_t prune(GaussianMap& map, const MapSettings& settings) {
  return map.retain([&](const Gaussian& g) {
    return g.opacity >= settings.prune_opacity && g.radius >= settings.min_radius && g.radius <= settings.max_radius;
  });
}

}  // namespace splatflow
