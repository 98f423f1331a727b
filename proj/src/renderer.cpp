#include "splatflow/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace splatflow {

namespace {

constexpr double kSilhouetteFloor = 1e-12;

double sign(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }

}  // namespace

std::optional<Splat> project_splat(const Gaussian& g, const Pose& world_from_camera, const Intrinsics& k,
                                   double cutoff_sigma) {
  const Eigen::Vector3d x = world_from_camera.rotation().conjugate() * (g.center - world_from_camera.translation());
  if (x.z() <= kMinDepth) return std::nullopt;
  Splat s;
  s.center = Eigen::Vector2d(k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy);
  s.radius_px = g.radius * k.mean_focal() / x.z();
  s.depth = x.z();
  s.camera_point = x;

  const double dx = std::max({-0.5 - s.center.x(), 0.0, s.center.x() - (k.width - 0.5)});
  const double dy = std::max({-0.5 - s.center.y(), 0.0, s.center.y() - (k.height - 0.5)});
  if (std::hypot(dx, dy) > cutoff_sigma * s.radius_px) return std::nullopt;
  return s;
}

DepthMap RenderOutput::depth_map() const {
  DepthMap d(depth.width(), depth.height());
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x)
      if (silhouette(x, y) > 0.0) d.set(x, y, depth(x, y));
  return d;
}

int RenderOutput::dominant_gaussian(int x, int y) const {
  const std::size_t i = static_cast<std::size_t>(y) * width() + x;
  int best = -1;
  double best_w = 0.0;
  for (std::uint32_t c = offsets[i]; c < offsets[i + 1]; ++c) {
    const double w = contributions[c].alpha * contributions[c].transmittance;
    if (w > best_w) {
      best_w = w;
      best = static_cast<int>(splats[contributions[c].splat].gaussian);
    }
  }
  return best;
}

RenderOutput render(const GaussianMap& map, const Pose& world_from_camera, const Intrinsics& k,
                    const RenderSettings& settings) {
  const int W = k.width;
  const int H = k.height;
  RenderOutput out;
  out.color = ColorImage(W, H, Eigen::Vector3d::Zero());
  out.depth = ScalarImage(W, H, 0.0);
  out.silhouette = ScalarImage(W, H, 0.0);
  out.depth_sum = ScalarImage(W, H, 0.0);
  out.offsets.assign(static_cast<std::size_t>(W) * H + 1, 0);

  const auto& gs = map.gaussians();
  out.splats.reserve(gs.size());
  for (std::size_t i = 0; i < gs.size(); ++i) {
    if (auto s = project_splat(gs[i], world_from_camera, k, settings.cutoff_sigma)) {
      s->gaussian = static_cast<std::uint32_t>(i);
      out.splats.push_back(*s);
    }
  }
  std::sort(out.splats.begin(), out.splats.end(), [](const Splat& a, const Splat& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.gaussian < b.gaussian);
  });

  // Bin splats into tiles; each tile list inherits the front-to-back order.
  const int ts = std::max(1, settings.tile_size);
  const int tiles_x = (W + ts - 1) / ts;
  const int tiles_y = (H + ts - 1) / ts;
  std::vector<std::vector<std::uint32_t>> tiles(static_cast<std::size_t>(tiles_x) * tiles_y);
  for (std::uint32_t s = 0; s < out.splats.size(); ++s) {
    const Splat& sp = out.splats[s];
    const double reach = settings.cutoff_sigma * sp.radius_px;
    const int x0 = std::max(0, static_cast<int>(std::ceil(sp.center.x() - reach)));
    const int x1 = std::min(W - 1, static_cast<int>(std::floor(sp.center.x() + reach)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(sp.center.y() - reach)));
    const int y1 = std::min(H - 1, static_cast<int>(std::floor(sp.center.y() + reach)));
    if (x0 > x1 || y0 > y1) continue;
    for (int ty = y0 / ts; ty <= y1 / ts; ++ty)
      for (int tx = x0 / ts; tx <= x1 / ts; ++tx) tiles[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(s);
  }

  const double cutoff2 = settings.cutoff_sigma * settings.cutoff_sigma;
  out.contributions.reserve(static_cast<std::size_t>(W) * H * 8);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * W + x;
      out.offsets[pix] = static_cast<std::uint32_t>(out.contributions.size());
      const auto& list = tiles[static_cast<std::size_t>(y / ts) * tiles_x + x / ts];
      double T = 1.0;
      Eigen::Vector3d c = Eigen::Vector3d::Zero();
      double sil = 0.0;
      double zsum = 0.0;
      for (std::uint32_t s : list) {
        const Splat& sp = out.splats[s];
        const double dx = x - sp.center.x();
        const double dy = y - sp.center.y();
        const double d2 = dx * dx + dy * dy;
        const double r2 = sp.radius_px * sp.radius_px;
        if (d2 > cutoff2 * r2) continue;
        double alpha = gs[sp.gaussian].opacity * std::exp(-0.5 * d2 / r2);
        const bool clipped = alpha > settings.max_alpha;
        if (clipped) alpha = settings.max_alpha;
        const double w = alpha * T;
        c += w * gs[sp.gaussian].color;
        sil += w;
        zsum += w * sp.depth;
        out.contributions.push_back({s, clipped, alpha, T});
        T *= 1.0 - alpha;
        if (T < settings.min_transmittance) break;
      }
      out.color[pix] = c;
      out.silhouette[pix] = sil;
      out.depth_sum[pix] = zsum;
      out.depth[pix] = sil > 0.0 ? zsum / std::max(sil, kSilhouetteFloor) : 0.0;
    }
  }
  out.offsets.back() = static_cast<std::uint32_t>(out.contributions.size());
  return out;
}

namespace {

bool pixel_active(const RenderOutput& out, const LossSpec& loss, std::size_t i) {
  return !(loss.silhouette_mask >= 0.0 && out.silhouette[i] <= loss.silhouette_mask);
}

bool depth_term_active(const RenderOutput& out, const LossSpec& loss, std::size_t i) {
  return loss.depth_target != nullptr && loss.depth_weight != 0.0 && loss.depth_target->valid(i) &&
         out.silhouette[i] > kSilhouetteFloor;
}

void check_targets(const RenderOutput& out, const LossSpec& loss) {
  if (loss.color_target) require_same_size(*loss.color_target, out.color, "loss color target");
  if (loss.depth_target) require_same_size(loss.depth_target->values(), out.depth, "loss depth target");
}

}  // namespace

double compute_loss(const RenderOutput& out, const LossSpec& loss) {
  check_targets(out, loss);
  double total = 0.0;
  for (std::size_t i = 0; i < out.color.size(); ++i) {
    if (!pixel_active(out, loss, i)) continue;
    if (loss.color_target && loss.color_weight != 0.0) {
      total += loss.color_weight * (out.color[i] - (*loss.color_target)[i]).cwiseAbs().sum();
    }
    if (depth_term_active(out, loss, i)) {
      total += loss.depth_weight * std::abs(out.depth[i] - (*loss.depth_target)[i]);
    }
  }
  return total;
}

void RenderGradients::resize(std::size_t n) {
  center.assign(n, Eigen::Vector3d::Zero());
  radius.assign(n, 0.0);
  opacity.assign(n, 0.0);
  color.assign(n, Eigen::Vector3d::Zero());
  pose.setZero();
}

LossAndGradients backward(const RenderOutput& out, const GaussianMap& map, const Pose& world_from_camera,
                          const Intrinsics& k, const LossSpec& loss, const GradientRequest& request) {
  check_targets(out, loss);
  const auto& gs = map.gaussians();
  const std::size_t n_splats = out.splats.size();

  // Per-splat accumulators in screen space.
  std::vector<Eigen::Vector2d> g_center(n_splats, Eigen::Vector2d::Zero());
  std::vector<double> g_rho(n_splats, 0.0);
  std::vector<double> g_depth(n_splats, 0.0);
  std::vector<double> g_opacity(n_splats, 0.0);
  std::vector<Eigen::Vector3d> g_color(n_splats, Eigen::Vector3d::Zero());

  LossAndGradients result;
  const int W = out.width();
  for (std::size_t i = 0; i < out.color.size(); ++i) {
    if (!pixel_active(out, loss, i)) continue;
    Eigen::Vector3d gC = Eigen::Vector3d::Zero();
    double gS = 0.0;
    double gZ = 0.0;
    if (loss.color_target && loss.color_weight != 0.0) {
      const Eigen::Vector3d r = out.color[i] - (*loss.color_target)[i];
      result.loss += loss.color_weight * r.cwiseAbs().sum();
      gC = loss.color_weight * Eigen::Vector3d(sign(r.x()), sign(r.y()), sign(r.z()));
    }
    if (depth_term_active(out, loss, i)) {
      const double r = out.depth[i] - (*loss.depth_target)[i];
      result.loss += loss.depth_weight * std::abs(r);
      const double gD = loss.depth_weight * sign(r);
      const double S = out.silhouette[i];
      gZ = gD / S;
      gS = -gD * out.depth_sum[i] / (S * S);
    }
    if (gC.isZero() && gS == 0.0 && gZ == 0.0) continue;

    const double px = static_cast<double>(i % W);
    const double py = static_cast<double>(i / W);
    // Sums over splats behind the current one of feature * alpha * T.
    Eigen::Vector3d acc_c = Eigen::Vector3d::Zero();
    double acc_s = 0.0;
    double acc_z = 0.0;
    for (std::uint32_t c = out.offsets[i + 1]; c-- > out.offsets[i];) {
      const Contribution& ct = out.contributions[c];
      const Splat& sp = out.splats[ct.splat];
      const Gaussian& g = gs[sp.gaussian];
      const double a = ct.alpha;
      const double T = ct.transmittance;
      const double w = a * T;
      const double inv = 1.0 / (1.0 - a);

      g_color[ct.splat] += w * gC;
      g_depth[ct.splat] += w * gZ;

      const double dL_da = gC.dot(g.color * T - acc_c * inv) + gS * (T - acc_s * inv) + gZ * (sp.depth * T - acc_z * inv);
      acc_c += w * g.color;
      acc_s += w;
      acc_z += w * sp.depth;
      if (ct.clipped) continue;

      const double dx = px - sp.center.x();
      const double dy = py - sp.center.y();
      const double r2 = sp.radius_px * sp.radius_px;
      const double gauss = g.opacity > 0.0 ? a / g.opacity : std::exp(-0.5 * (dx * dx + dy * dy) / r2);
      g_opacity[ct.splat] += dL_da * gauss;
      g_center[ct.splat] += dL_da * a / r2 * Eigen::Vector2d(dx, dy);
      g_rho[ct.splat] += dL_da * a * (dx * dx + dy * dy) / (r2 * sp.radius_px);
    }
  }

  RenderGradients& grads = result.gradients;
  if (request.gaussians) grads.resize(gs.size());
  const Eigen::Matrix3d R = world_from_camera.rotation_matrix();
  const double fbar = k.mean_focal();
  for (std::size_t s = 0; s < n_splats; ++s) {
    const Splat& sp = out.splats[s];
    const Eigen::Vector3d& X = sp.camera_point;
    const double iz = 1.0 / X.z();
    const double gu = g_center[s].x();
    const double gv = g_center[s].y();
    Eigen::Vector3d gX;
    gX.x() = gu * k.fx * iz;
    gX.y() = gv * k.fy * iz;
    gX.z() = -gu * k.fx * X.x() * iz * iz - gv * k.fy * X.y() * iz * iz - g_rho[s] * sp.radius_px * iz + g_depth[s];

    if (request.gaussians) {
      const std::uint32_t gi = sp.gaussian;
      grads.center[gi] = R * gX;
      grads.radius[gi] = g_rho[s] * fbar * iz;
      grads.opacity[gi] = g_opacity[s];
      grads.color[gi] = g_color[s];
    }
    if (request.pose) {
      grads.pose.head<3>() += gX.cross(X);
      grads.pose.tail<3>() -= gX;
    }
  }
  return result;
}

LossAndGradients render_with_gradients(const GaussianMap& map, const Pose& world_from_camera, const Intrinsics& k,
                                       const LossSpec& loss, const RenderSettings& settings,
                                       const GradientRequest& request) {
  const RenderOutput out = render(map, world_from_camera, k, settings);
  return backward(out, map, world_from_camera, k, loss, request);
}

}  // namespace splatflow
