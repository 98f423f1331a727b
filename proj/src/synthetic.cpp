#include "splatflow/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace splatflow {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t hash_cell(std::uint64_t seed, int face, std::int64_t i, std::int64_t j) {
  std::uint64_t h = splitmix(seed ^ (static_cast<std::uint64_t>(face) * 0x632BE59BD9B4E019ull));
  h = splitmix(h ^ static_cast<std::uint64_t>(i));
  return splitmix(h ^ (static_cast<std::uint64_t>(j) << 1));
}

double unit_from(std::uint64_t h, int lane) {
  return static_cast<double>((h >> (lane * 16)) & 0xFFFF) / 65535.0;
}

}  // namespace

SyntheticScene::SyntheticScene(Eigen::Vector3d room_min, Eigen::Vector3d room_max, std::vector<Sphere> spheres,
                               std::uint64_t texture_seed, double cell_size)
    : min_(std::move(room_min)), max_(std::move(room_max)), spheres_(std::move(spheres)), seed_(texture_seed),
      cell_(cell_size) {}

SyntheticScene SyntheticScene::standard(std::uint64_t seed, int n_spheres) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };

  std::vector<Sphere> spheres;
  const int central = n_spheres / 2;
  for (int s = 0; s < n_spheres; ++s) {
    Sphere sp;
    const double phi = uni(0.0, 2.0 * std::numbers::pi);
    if (s < central) {
      const double rho = 0.55 * std::sqrt(u01(rng));
      sp.center = {rho * std::cos(phi), uni(-0.3, 0.9), rho * std::sin(phi)};
      sp.radius = uni(0.08, 0.22);
    } else {
      const double rho = uni(1.85, 2.2);
      sp.center = {rho * std::cos(phi), uni(-1.2, 1.2), rho * std::sin(phi)};
      sp.radius = uni(0.1, 0.22);
    }
    sp.color = {uni(0.15, 0.95), uni(0.15, 0.95), uni(0.15, 0.95)};
    spheres.push_back(sp);
  }
  return {Eigen::Vector3d(-2.5, -1.5, -2.5), Eigen::Vector3d(2.5, 1.5, 2.5), std::move(spheres), seed, 0.3};
}

std::optional<RayHit> SyntheticScene::intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const {
  RayHit best;
  best.t = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) continue;
    const double bound = dir[a] > 0.0 ? max_[a] : min_[a];
    const double t = (bound - origin[a]) / dir[a];
    if (t > 0.0 && t < best.t) {
      best.t = t;
      best.surface = 2 * a + (dir[a] > 0.0 ? 1 : 0);
    }
  }
  const double dd = dir.squaredNorm();
  for (std::size_t s = 0; s < spheres_.size(); ++s) {
    const Eigen::Vector3d oc = origin - spheres_[s].center;
    const double b = oc.dot(dir);
    const double c = oc.squaredNorm() - spheres_[s].radius * spheres_[s].radius;
    const double disc = b * b - dd * c;
    if (disc < 0.0) continue;
    const double sq = std::sqrt(disc);
    double t = (-b - sq) / dd;
    if (t <= 0.0) t = (-b + sq) / dd;
    if (t > 0.0 && t < best.t) {
      best.t = t;
      best.surface = 6 + static_cast<int>(s);
    }
  }
  if (best.surface < 0) return std::nullopt;
  best.point = origin + best.t * dir;
  return best;
}

Eigen::Vector3d SyntheticScene::shade(const RayHit& hit) const {
  if (hit.surface >= 6) {
    const Sphere& sp = spheres_[static_cast<std::size_t>(hit.surface - 6)];
    const Eigen::Vector3d n = (hit.point - sp.center) / sp.radius;
    const double lon = std::atan2(n.z(), n.x());
    const double lat = std::asin(std::clamp(n.y(), -1.0, 1.0));
    const auto i = static_cast<std::int64_t>(std::floor(lon / (std::numbers::pi / 4.0)));
    const auto j = static_cast<std::int64_t>(std::floor(lat / (std::numbers::pi / 6.0)));
    const double scale = ((i + j) & 1) ? 0.6 : 1.0;
    return (sp.color * scale).cwiseMin(1.0);
  }
  const int axis = hit.surface / 2;
  const int ua = (axis + 1) % 3;
  const int va = (axis + 2) % 3;
  const double a = hit.point[ua];
  const double b = hit.point[va];
  const auto i = static_cast<std::int64_t>(std::floor(a / cell_));
  const auto j = static_cast<std::int64_t>(std::floor(b / cell_));
  const std::uint64_t h = hash_cell(seed_, hit.surface, i, j);
  Eigen::Vector3d base(0.25 + 0.7 * unit_from(h, 0), 0.25 + 0.7 * unit_from(h, 1), 0.25 + 0.7 * unit_from(h, 2));
  const double parity = ((i + j) & 1) ? 0.55 : 1.0;
  const double ripple = 0.08 * std::sin(2.0 * std::numbers::pi * a / (0.5 * cell_)) *
                        std::sin(2.0 * std::numbers::pi * b / (0.5 * cell_));
  return (base * parity + Eigen::Vector3d::Constant(ripple)).cwiseMax(0.0).cwiseMin(1.0);
}

Intrinsics standard_intrinsics() { return {120.0, 120.0, 79.5, 59.5, 160, 120}; }

namespace {

Eigen::Vector3d ray_direction(const Pose& world_from_camera, const Intrinsics& k, const Eigen::Vector2d& pixel) {
  const Eigen::Vector3d d_cam((pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0);
  return world_from_camera.rotation() * d_cam;
}

}  // namespace

std::optional<double> ray_depth(const SyntheticScene& scene, const Pose& world_from_camera, const Intrinsics& k,
                                const Eigen::Vector2d& pixel) {
  const auto hit = scene.intersect(world_from_camera.translation(), ray_direction(world_from_camera, k, pixel));
  if (!hit) return std::nullopt;
  return hit->t;
}

SyntheticView render_synthetic(const SyntheticScene& scene, const Pose& world_from_camera, const Intrinsics& k) {
  SyntheticView view{ColorImage(k.width, k.height, Eigen::Vector3d::Zero()), DepthMap(k.width, k.height)};
  const Eigen::Vector3d origin = world_from_camera.translation();
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const auto hit = scene.intersect(origin, ray_direction(world_from_camera, k, {x, y}));
      if (!hit) continue;
      view.rgb(x, y) = scene.shade(*hit);
      view.depth.set(x, y, hit->t);
    }
  }
  return view;
}

bool point_visible(const SyntheticScene& scene, const Pose& world_from_camera, const Intrinsics& k,
                   const Eigen::Vector3d& world_point, Eigen::Vector2d* pixel, double tolerance) {
  const Eigen::Vector3d y = inverse(world_from_camera) * world_point;
  if (y.z() <= kMinDepth) return false;
  const Eigen::Vector2d p = project(y, k);
  if (pixel) *pixel = p;
  if (!k.contains(p)) return false;
  const auto d = ray_depth(scene, world_from_camera, k, p);
  return d && std::abs(y.z() - *d) <= tolerance * *d;
}

GroundTruthFlow gt_flow(const SyntheticScene& scene, const Pose& world_from_i, const Pose& world_from_j,
                        const Intrinsics& k) {
  GroundTruthFlow out{PixelField(k.width, k.height), Mask(k.width, k.height, 0)};
  const Pose j_from_world = inverse(world_from_j);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const std::size_t idx = out.correspondences.index(x, y);
      out.correspondences.coords[idx] = Eigen::Vector2d(x, y);
      const auto d = ray_depth(scene, world_from_i, k, {x, y});
      if (!d) continue;
      const Eigen::Vector3d world = world_from_i * backproject({x, y}, *d, k);
      const Eigen::Vector3d yj = j_from_world * world;
      if (yj.z() <= kMinDepth) continue;
      const Eigen::Vector2d p = project(yj, k);
      out.correspondences.coords[idx] = p;
      out.correspondences.valid[idx] = 1;
      out.correspondences.in_bounds[idx] = k.contains(p) ? 1 : 0;
      if (!k.contains(p)) continue;
      const auto dj = ray_depth(scene, world_from_j, k, p);
      out.visible[idx] = (dj && std::abs(yj.z() - *dj) <= 0.01 * *dj) ? 1 : 0;
    }
  }
  return out;
}

Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& down) {
  const Eigen::Vector3d z = (target - eye).normalized();
  const Eigen::Vector3d x = down.cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d R;
  R.col(0) = x;
  R.col(1) = y;
  R.col(2) = z;
  return {R, eye};
}

std::vector<Pose> make_trajectory(const TrajectorySpec& spec) {
  std::vector<Pose> poses;
  if (spec.frames <= 0) return poses;
  poses.reserve(static_cast<std::size_t>(spec.frames));
  const double deg = std::numbers::pi / 180.0;
  auto ring_pose = [&](double angle) {
    const Eigen::Vector3d eye(spec.orbit_radius * std::cos(angle), spec.orbit_height, spec.orbit_radius * std::sin(angle));
    return look_at(eye, spec.look_target);
  };

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  switch (spec.kind) {
    case TrajectoryKind::orbit: {
      for (int f = 0; f < spec.frames; ++f) {
        const double frac = spec.frames > 1 ? static_cast<double>(f) / (spec.frames - 1) : 0.0;
        poses.push_back(ring_pose((spec.start_angle_deg + spec.orbit_arc_deg * frac) * deg));
      }
      break;
    }
    case TrajectoryKind::constant_velocity: {
      const Pose start = ring_pose(spec.start_angle_deg * deg);
      const double side = u01(rng) < 0.5 ? -1.0 : 1.0;
      const Eigen::Vector3d dir = Eigen::Vector3d(side, 0.4 * (u01(rng) - 0.5), u01(rng) - 0.5).normalized();
      Tangent xi;
      xi.head<3>() = Eigen::Vector3d(0.0, -side * spec.step_rotation_deg * deg, 0.0);
      xi.tail<3>() = spec.step_translation * dir;
      const Pose step = exp(xi);
      Pose p = start;
      for (int f = 0; f < spec.frames; ++f) {
        poses.push_back(p);
        p = compose(p, step);
      }
      break;
    }
    case TrajectoryKind::random_walk: {
      std::normal_distribution<double> n01(0.0, 1.0);
      Pose p = ring_pose(spec.start_angle_deg * deg);
      Tangent velocity = Tangent::Zero();
      for (int f = 0; f < spec.frames; ++f) {
        poses.push_back(p);
        Tangent kick;
        for (int a = 0; a < 6; ++a) kick[a] = n01(rng);
        kick.head<3>() *= 0.3 * spec.step_rotation_deg * deg;
        kick.tail<3>() *= 0.3 * spec.step_translation;
        velocity = 0.8 * velocity + kick;
        p = compose(p, exp(velocity));
      }
      break;
    }
    case TrajectoryKind::still: {
      poses.assign(static_cast<std::size_t>(spec.frames), ring_pose(spec.start_angle_deg * deg));
      break;
    }
  }
  return poses;
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  SyntheticSpec spec;
  std::stringstream ss(text);
  std::string token;
  bool first = true;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    const auto eq = token.find('=');
    if (eq == std::string::npos) {
      if (!first) throw std::invalid_argument("synthetic spec: unexpected token '" + token + "'");
      if (token == "orbit") spec.trajectory.kind = TrajectoryKind::orbit;
      else if (token == "cv") spec.trajectory.kind = TrajectoryKind::constant_velocity;
      else if (token == "walk") spec.trajectory.kind = TrajectoryKind::random_walk;
      else if (token == "still") spec.trajectory.kind = TrajectoryKind::still;
      else throw std::invalid_argument("synthetic spec: unknown trajectory '" + token + "'");
      first = false;
      continue;
    }
    first = false;
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    auto number = [&](auto parse) {
      try {
        std::size_t used = 0;
        auto v = parse(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return v;
      } catch (const std::exception&) {
        throw std::invalid_argument("synthetic spec: bad value for '" + key + "': " + value);
      }
    };
    auto as_int = [&] { return number([](const std::string& v, std::size_t* n) { return std::stoi(v, n); }); };
    auto as_u64 = [&] { return number([](const std::string& v, std::size_t* n) { return std::stoull(v, n); }); };
    auto as_double = [&] { return number([](const std::string& v, std::size_t* n) { return std::stod(v, n); }); };

    TrajectorySpec& t = spec.trajectory;
    if (key == "frames") t.frames = as_int();
    else if (key == "fps") t.fps = as_double();
    else if (key == "seed") t.seed = as_u64();
    else if (key == "radius") t.orbit_radius = as_double();
    else if (key == "arc") t.orbit_arc_deg = as_double();
    else if (key == "height") t.orbit_height = as_double();
    else if (key == "start") t.start_angle_deg = as_double();
    else if (key == "step") t.step_translation = as_double();
    else if (key == "turn") t.step_rotation_deg = as_double();
    else if (key == "scene_seed") spec.scene_seed = as_u64();
    else if (key == "spheres") spec.spheres = as_int();
    else throw std::invalid_argument("synthetic spec: unknown key '" + key + "'");
  }
  if (spec.trajectory.frames < 0) throw std::invalid_argument("synthetic spec: negative frame count");
  if (spec.spheres < 0 || spec.spheres > 50) throw std::invalid_argument("synthetic spec: spheres must be in [0, 50]");
  return spec;
}

}  // namespace splatflow
