#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "splatflow/geometry.hpp"
#include "splatflow/image.hpp"

namespace splatflow {

struct Sphere {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.1;
  Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);
};

struct RayHit {
  double t = 0.0;  // ray parameter; equals camera z-depth for rays with unit z
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  int surface = -1;  // 0..5 room faces, 6+ spheres
};

/// Textured axis-aligned room with colored spheres; world y points down.
class SyntheticScene {
 public:
  SyntheticScene(Eigen::Vector3d room_min, Eigen::Vector3d room_max, std::vector<Sphere> spheres,
                 std::uint64_t texture_seed, double cell_size = 0.3);

  /// 5x3x5 m room, spheres clustered at the center and along the walls,
  /// clear of the default orbit ring.
  static SyntheticScene standard(std::uint64_t seed = 1, int n_spheres = 20);

  /// Nearest hit along origin + t * dir, t > 0. The camera must be inside the room.
  std::optional<RayHit> intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const;
  Eigen::Vector3d shade(const RayHit& hit) const;

  const Eigen::Vector3d& room_min() const { return min_; }
  const Eigen::Vector3d& room_max() const { return max_; }
  const std::vector<Sphere>& spheres() const { return spheres_; }
  std::uint64_t texture_seed() const { return seed_; }

 private:
  Eigen::Vector3d min_;
  Eigen::Vector3d max_;
  std::vector<Sphere> spheres_;
  std::uint64_t seed_;
  double cell_;
};

/// 160x120, fx = fy = 120.
Intrinsics standard_intrinsics();

struct SyntheticView {
  ColorImage rgb;
  DepthMap depth;
};

SyntheticView render_synthetic(const SyntheticScene& scene, const Pose& world_from_camera, const Intrinsics& k);

/// Exact z-depth along the ray through a (sub)pixel; nullopt on a miss.
std::optional<double> ray_depth(const SyntheticScene& scene, const Pose& world_from_camera, const Intrinsics& k,
                                const Eigen::Vector2d& pixel);

struct GroundTruthFlow {
  PixelField correspondences;
  Mask visible;  // in bounds and not occluded in view j
};

/// Exact correspondences i -> j from scene geometry; occlusion is a 1%
/// relative depth test against the analytic depth of view j.
GroundTruthFlow gt_flow(const SyntheticScene& scene, const Pose& world_from_i, const Pose& world_from_j,
                        const Intrinsics& k);

/// Visibility of a world point in a view (in bounds, in front, unoccluded).
bool point_visible(const SyntheticScene& scene, const Pose& world_from_camera, const Intrinsics& k,
                   const Eigen::Vector3d& world_point, Eigen::Vector2d* pixel = nullptr, double tolerance = 0.01);

/// Camera at `eye` looking at `target`; image y follows world `down`.
Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
             const Eigen::Vector3d& down = Eigen::Vector3d::UnitY());

enum class TrajectoryKind { orbit, constant_velocity, random_walk, still };

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::orbit;
  int frames = 100;
  double fps = 30.0;
  std::uint64_t seed = 1;

  // orbit
  double orbit_radius = 1.2;
  double orbit_arc_deg = 120.0;
  double orbit_height = -0.3;
  double start_angle_deg = 0.0;
  Eigen::Vector3d look_target = Eigen::Vector3d(0.0, 0.1, 0.0);

  // constant velocity / random walk: per-frame motion magnitudes
  double step_translation = 0.02;
  double step_rotation_deg = 0.5;
};

std::vector<Pose> make_trajectory(const TrajectorySpec& spec);

/// Scene plus camera path of a generated sequence.
struct SyntheticSpec {
  TrajectorySpec trajectory;
  std::uint64_t scene_seed = 1;
  int spheres = 20;
};

/// Parses "orbit,frames=100,seed=3,arc=120" style descriptions. The first
/// bare token names the trajectory kind (orbit, cv, walk, still).
SyntheticSpec parse_synthetic_spec(const std::string& text);

}  // namespace splatflow
