#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include "splatflow/frame.hpp"
#include "splatflow/gaussian_map.hpp"
#include "splatflow/renderer.hpp"

namespace splatflow {

struct OptimSettings {
  int mapping_iterations = 60;
  int tracking_iterations = 40;

  double lr_center = 1e-4;
  double lr_radius = 1e-3;
  double lr_opacity = 5e-2;
  double lr_color = 2.5e-3;
  double lr_pose_rotation = 2e-3;
  double lr_pose_translation = 1e-3;

  double color_weight = 0.5;
  double depth_weight = 1.0;
  /// Tracking only looks at pixels the map already explains.
  double tracking_silhouette = 0.99;

  /// Per-parameter moment normalization of the step (Adam); when false the
  /// update is plain gradient descent with the same rates.
  bool adaptive_steps = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  double min_radius = 1e-4;
  double max_radius = 1.0;

  /// Throws std::invalid_argument unless every rate and count is positive.
  void validate() const;
};

struct Keyframe {
  Frame frame;
  Pose pose;
};

/// Recent posed frames driving map refinement; oldest entries are evicted.
class KeyframeWindow {
 public:
  explicit KeyframeWindow(std::size_t capacity = 8) : capacity_(capacity == 0 ? 1 : capacity) {}

  void push(Keyframe kf);
  std::size_t size() const { return frames_.size(); }
  bool empty() const { return frames_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const Keyframe& operator[](std::size_t i) const { return frames_[i]; }
  const Keyframe& latest() const { return frames_.back(); }
  auto begin() const { return frames_.begin(); }
  auto end() const { return frames_.end(); }

 private:
  std::size_t capacity_;
  std::deque<Keyframe> frames_;
};

struct MappingReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
};

/// Sum of weighted L1 color + depth losses of the map over the window.
double window_loss(const GaussianMap& map, const std::vector<const Keyframe*>& frames, const OptimSettings& settings,
                   const RenderSettings& render_settings = {});

/// Refines Gaussian parameters with poses held fixed. The map is left at the
/// lowest-loss iterate, so final_loss <= initial_loss.
MappingReport mapping_step(GaussianMap& map, const std::vector<const Keyframe*>& frames, const OptimSettings& settings,
                           const RenderSettings& render_settings = {});
MappingReport mapping_step(GaussianMap& map, const KeyframeWindow& window, const OptimSettings& settings,
                           const RenderSettings& render_settings = {});

struct TrackingResult {
  Pose pose;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  int iterations = 0;
};

/// Render-and-compare pose refinement starting at `init`; returns the
/// lowest-loss pose encountered.
TrackingResult track_iterative(const GaussianMap& map, const Frame& frame, const Pose& init,
                               const OptimSettings& settings, const RenderSettings& render_settings = {});

}  // namespace splatflow
