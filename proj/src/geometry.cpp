#include "splatflow/geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace splatflow {

Pose::Pose(const Eigen::Quaterniond& rotation, const Eigen::Vector3d& translation)
    : q_(rotation.normalized()), t_(translation) {}

Pose::Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
    : q_(Eigen::Quaterniond(rotation).normalized()), t_(translation) {}

Pose Pose::from_translation(const Eigen::Vector3d& t) { return {Eigen::Quaterniond::Identity(), t}; }

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_matrix();
  m.topRightCorner<3, 1>() = t_;
  return m;
}

Pose Pose::operator*(const Pose& other) const { return compose(*this, other); }

Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation()};
}

Pose inverse(const Pose& p) {
  const Eigen::Quaterniond qi = p.rotation().conjugate();
  return {qi, -(qi * p.translation())};
}

Pose relative(const Pose& world_from_i, const Pose& world_from_j) {
  return compose(inverse(world_from_j), world_from_i);
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

namespace {

// Coefficients of the left Jacobian V = I + b[w] + c[w]^2.
void so3_coefficients(double theta, double& b, double& c) {
  const double t2 = theta * theta;
  if (theta < 1e-4) {
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
    c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  } else {
    b = (1.0 - std::cos(theta)) / t2;
    c = (theta - std::sin(theta)) / (t2 * theta);
  }
}

}  // namespace

Pose exp(const Tangent& xi) {
  const Eigen::Vector3d w = xi.head<3>();
  const Eigen::Vector3d v = xi.tail<3>();
  const double theta = w.norm();

  const double half = 0.5 * theta;
  const double k = theta < 1e-4 ? 0.5 - theta * theta / 48.0 : std::sin(half) / theta;
  const Eigen::Quaterniond q(std::cos(half), k * w.x(), k * w.y(), k * w.z());

  double b = 0.0;
  double c = 0.0;
  so3_coefficients(theta, b, c);
  const Eigen::Matrix3d W = skew(w);
  const Eigen::Matrix3d V = Eigen::Matrix3d::Identity() + b * W + c * W * W;
  return {q, V * v};
}

Tangent log(const Pose& p) {
  Eigen::Quaterniond q = p.rotation();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Eigen::Vector3d qv = q.vec();
  const double n = qv.norm();
  const double theta = 2.0 * std::atan2(n, q.w());
  if (theta > std::numbers::pi - 1e-6) {
    throw DegenerateRotation("log: rotation angle " + std::to_string(theta) + " is too close to pi");
  }

  double scale = 0.0;
  if (n < 1e-8) {
    scale = 2.0 / q.w() * (1.0 - n * n / (3.0 * q.w() * q.w()));
  } else {
    scale = theta / n;
  }
  const Eigen::Vector3d w = scale * qv;

  // V^-1 = I - 1/2 [w] + d [w]^2
  double d = 0.0;
  if (theta < 1e-4) {
    d = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    const double half = 0.5 * theta;
    d = (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
  }
  const Eigen::Matrix3d W = skew(w);
  const Eigen::Matrix3d v_inv = Eigen::Matrix3d::Identity() - 0.5 * W + d * W * W;

  Tangent xi;
  xi.head<3>() = w;
  xi.tail<3>() = v_inv * p.translation();
  return xi;
}

double rotation_angle(const Pose& p) {
  const Eigen::Quaterniond& q = p.rotation();
  return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w()));
}

double rotation_distance(const Pose& a, const Pose& b) { return rotation_angle(compose(inverse(a), b)); }

double translation_distance(const Pose& a, const Pose& b) { return (a.translation() - b.translation()).norm(); }

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw std::invalid_argument("intrinsics: principal point outside the image");
  }
}

Intrinsics Intrinsics::subsampled(int divisor) const {
  if (divisor < 1) throw std::invalid_argument("subsample divisor must be >= 1");
  const double s = divisor;
  return {fx / s, fy / s, cx / s, cy / s, subsampled_extent(width, divisor), subsampled_extent(height, divisor)};
}

Eigen::Vector2d project(const Eigen::Vector3d& x_cam, const Intrinsics& k) {
  if (!(x_cam.z() > kMinDepth)) throw BehindCamera("project: point at z=" + std::to_string(x_cam.z()));
  return {k.fx * x_cam.x() / x_cam.z() + k.cx, k.fy * x_cam.y() / x_cam.z() + k.cy};
}

Eigen::Vector3d backproject(const Eigen::Vector2d& pixel, double depth, const Intrinsics& k) {
  if (!(depth > 0.0) || !std::isfinite(depth)) throw InvalidDepth("backproject: depth " + std::to_string(depth));
  return {(pixel.x() - k.cx) * depth / k.fx, (pixel.y() - k.cy) * depth / k.fy, depth};
}

std::size_t PixelField::valid_count() const {
  std::size_t n = 0;
  for (auto v : valid) n += v != 0;
  return n;
}

PixelField correspondence_field(const DepthMap& depth_i, const Pose& world_from_i, const Pose& world_from_j,
                                const Intrinsics& k) {
  if (depth_i.width() != k.width || depth_i.height() != k.height) {
    throw DimensionMismatch("correspondence_field: depth map does not match intrinsics");
  }
  // j_from_i = G_j^-1 * G_i with world-from-camera poses.
  const Pose j_from_i = relative(world_from_i, world_from_j);
  const Eigen::Matrix3d R = j_from_i.rotation_matrix();
  const Eigen::Vector3d t = j_from_i.translation();

  PixelField field(k.width, k.height);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const std::size_t idx = field.index(x, y);
      field.coords[idx] = Eigen::Vector2d(x, y);
      if (!depth_i.valid(x, y)) continue;
      const Eigen::Vector3d xj = R * backproject({x, y}, depth_i(x, y), k) + t;
      if (xj.z() <= kMinDepth) continue;
      const Eigen::Vector2d p = project(xj, k);
      field.coords[idx] = p;
      field.valid[idx] = 1;
      field.in_bounds[idx] = k.contains(p) ? 1 : 0;
    }
  }
  return field;
}

}  // namespace splatflow
