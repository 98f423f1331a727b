#include "splatflow/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace splatflow {

void OptimSettings::validate() const {
  const bool ok = mapping_iterations > 0 && tracking_iterations > 0 && lr_center > 0 && lr_radius > 0 &&
                  lr_opacity > 0 && lr_color > 0 && lr_pose_rotation > 0 && lr_pose_translation > 0 &&
                  color_weight >= 0 && depth_weight >= 0 && min_radius > 0 && max_radius > min_radius;
  if (!ok) throw std::invalid_argument("optimizer settings: rates and iteration counts must be positive");
}

void KeyframeWindow::push(Keyframe kf) {
  frames_.push_back(std::move(kf));
  while (frames_.size() > capacity_) frames_.pop_front();
}

namespace {

LossSpec loss_for(const Frame& frame, const OptimSettings& s, double silhouette_mask) {
  LossSpec loss;
  loss.color_target = &frame.rgb;
  loss.color_weight = s.color_weight;
  loss.depth_target = &frame.depth;
  loss.depth_weight = s.depth_weight;
  loss.silhouette_mask = silhouette_mask;
  return loss;
}

/// First and second moment estimates for one scalar parameter block.
struct Moments {
  std::vector<double> m;
  std::vector<double> v;

  explicit Moments(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  double step(std::size_t i, double grad, double lr, int t, const OptimSettings& s) {
    if (!s.adaptive_steps) return lr * grad;
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * grad;
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * grad * grad;
    const double mhat = m[i] / (1.0 - std::pow(s.beta1, t));
    const double vhat = v[i] / (1.0 - std::pow(s.beta2, t));
    return lr * mhat / (std::sqrt(vhat) + s.epsilon);
  }
};

}  // namespace

double window_loss(const GaussianMap& map, const std::vector<const Keyframe*>& frames, const OptimSettings& settings,
                   const RenderSettings& render_settings) {
  double total = 0.0;
  for (const Keyframe* kf : frames) {
    const RenderOutput out = render(map, kf->pose, kf->frame.intrinsics, render_settings);
    total += compute_loss(out, loss_for(kf->frame, settings, -1.0));
  }
  return total;
}

MappingReport mapping_step(GaussianMap& map, const std::vector<const Keyframe*>& frames, const OptimSettings& settings,
                           const RenderSettings& render_settings) {
  if (frames.empty()) throw std::invalid_argument("mapping_step: empty keyframe window");
  MappingReport report;
  const std::size_t n = map.size();
  if (n == 0) return report;

  Moments m_center(3 * n), m_radius(n), m_opacity(n), m_color(3 * n);
  RenderGradients total;
  std::vector<Gaussian> best = map.gaussians();
  double best_loss = 0.0;

  for (int it = 0; it < settings.mapping_iterations; ++it) {
    total.resize(n);
    double loss = 0.0;
    for (const Keyframe* kf : frames) {
      const auto lg = render_with_gradients(map, kf->pose, kf->frame.intrinsics, loss_for(kf->frame, settings, -1.0),
                                            render_settings, {.gaussians = true, .pose = false});
      loss += lg.loss;
      for (std::size_t i = 0; i < n; ++i) {
        total.center[i] += lg.gradients.center[i];
        total.radius[i] += lg.gradients.radius[i];
        total.opacity[i] += lg.gradients.opacity[i];
        total.color[i] += lg.gradients.color[i];
      }
    }
    if (it == 0) {
      report.initial_loss = loss;
      best_loss = loss;
    } else if (loss < best_loss) {
      best_loss = loss;
      best = map.gaussians();
    }

    const int t = it + 1;
    auto& gs = map.gaussians();
    for (std::size_t i = 0; i < n; ++i) {
      Gaussian& g = gs[i];
      for (int a = 0; a < 3; ++a) {
        g.center[a] -= m_center.step(3 * i + a, total.center[i][a], settings.lr_center, t, settings);
        g.color[a] -= m_color.step(3 * i + a, total.color[i][a], settings.lr_color, t, settings);
      }
      g.radius -= m_radius.step(i, total.radius[i], settings.lr_radius, t, settings);
      g.opacity -= m_opacity.step(i, total.opacity[i], settings.lr_opacity, t, settings);
    }
    map.clamp(settings.min_radius, settings.max_radius);
    report.iterations = t;
  }

  const double final_loss = window_loss(map, frames, settings, render_settings);
  if (final_loss <= best_loss) {
    report.final_loss = final_loss;
  } else {
    map.gaussians() = std::move(best);
    report.final_loss = best_loss;
  }
  return report;
}

MappingReport mapping_step(GaussianMap& map, const KeyframeWindow& window, const OptimSettings& settings,
                           const RenderSettings& render_settings) {
  std::vector<const Keyframe*> frames;
  for (const auto& kf : window) frames.push_back(&kf);
  return mapping_step(map, frames, settings, render_settings);
}

TrackingResult track_iterative(const GaussianMap& map, const Frame& frame, const Pose& init,
                               const OptimSettings& settings, const RenderSettings& render_settings) {
  if (map.empty()) throw std::invalid_argument("track_iterative: empty map");
  const LossSpec loss = loss_for(frame, settings, settings.tracking_silhouette);

  TrackingResult result;
  result.pose = init;
  Pose current = init;
  Moments moments(6);
  for (int it = 0; it < settings.tracking_iterations; ++it) {
    const auto lg = render_with_gradients(map, current, frame.intrinsics, loss, render_settings,
                                          {.gaussians = false, .pose = true});
    if (it == 0) {
      result.initial_loss = lg.loss;
      result.best_loss = lg.loss;
    } else if (lg.loss < result.best_loss) {
      result.best_loss = lg.loss;
      result.pose = current;
    }
    Tangent step;
    for (int a = 0; a < 6; ++a) {
      const double lr = a < 3 ? settings.lr_pose_rotation : settings.lr_pose_translation;
      const double g = std::isfinite(lg.gradients.pose[a]) ? lg.gradients.pose[a] : 0.0;
      step[a] = -moments.step(a, g, lr, it + 1, settings);
    }
    current = compose(current, exp(step));
    result.iterations = it + 1;
  }
  const double final_loss = compute_loss(render(map, current, frame.intrinsics, render_settings), loss);
  if (final_loss < result.best_loss) {
    result.best_loss = final_loss;
    result.pose = current;
  }
  return result;
}

}  // namespace splatflow
