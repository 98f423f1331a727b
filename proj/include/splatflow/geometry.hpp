#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "splatflow/image.hpp"

namespace splatflow {

/// se(3) increment: (rotation xyz [rad], translation xyz [m]).
using Tangent = Eigen::Matrix<double, 6, 1>;

class DegenerateRotation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class BehindCamera : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class InvalidDepth : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Rigid transform stored as unit quaternion + translation.
///
/// Every pose in this library is world-from-camera: `pose * x_cam` gives the
/// world coordinates of a camera-frame point. The relative transform that
/// carries camera-i coordinates into camera-j coordinates is therefore
/// `inverse(G_j) * G_i` (see `relative()`); in a camera-from-world
/// convention the same map reads G_j * G_i^-1.
class Pose {
 public:
  Pose() = default;
  Pose(const Eigen::Quaterniond& rotation, const Eigen::Vector3d& translation);
  Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

  static Pose identity() { return {}; }
  static Pose from_translation(const Eigen::Vector3d& t);

  const Eigen::Quaterniond& rotation() const { return q_; }
  const Eigen::Vector3d& translation() const { return t_; }
  Eigen::Matrix3d rotation_matrix() const { return q_.toRotationMatrix(); }
  Eigen::Matrix4d matrix() const;

  Eigen::Vector3d operator*(const Eigen::Vector3d& x) const { return q_ * x + t_; }
  Pose operator*(const Pose& other) const;

 private:
  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
  Eigen::Vector3d t_ = Eigen::Vector3d::Zero();
};

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);

/// Transform taking camera-i coordinates to camera-j coordinates.
Pose relative(const Pose& world_from_i, const Pose& world_from_j);

Pose exp(const Tangent& xi);
/// Throws DegenerateRotation when the rotation angle is within 1e-6 of pi.
Tangent log(const Pose& p);

double rotation_angle(const Pose& p);
/// Rotation angle and translation distance between two poses.
double rotation_distance(const Pose& a, const Pose& b);
double translation_distance(const Pose& a, const Pose& b);

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

constexpr double kMinDepth = 1e-6;

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
  double mean_focal() const { return 0.5 * (fx + fy); }
  /// Pixel centres sit on integers, so the image spans [-0.5, size - 0.5).
  bool contains(const Eigen::Vector2d& p) const {
    return p.x() >= -0.5 && p.x() < width - 0.5 && p.y() >= -0.5 && p.y() < height - 0.5;
  }
  /// Point-subsampled grid: coarse pixel (u, v) sits on full-res pixel
  /// (divisor*u, divisor*v).
  Intrinsics subsampled(int divisor) const;
};

Eigen::Vector2d project(const Eigen::Vector3d& x_cam, const Intrinsics& k);
Eigen::Vector3d backproject(const Eigen::Vector2d& pixel, double depth, const Intrinsics& k);

/// Grid of pixel coordinates with explicit validity and in-bounds masks.
struct PixelField {
  int width = 0;
  int height = 0;
  std::vector<Eigen::Vector2d> coords;
  std::vector<std::uint8_t> valid;
  std::vector<std::uint8_t> in_bounds;

  PixelField() = default;
  PixelField(int w, int h)
      : width(w),
        height(h),
        coords(static_cast<std::size_t>(w) * h, Eigen::Vector2d::Zero()),
        valid(static_cast<std::size_t>(w) * h, 0),
        in_bounds(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t size() const { return coords.size(); }
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  std::size_t valid_count() const;
};

/// Where every valid pixel of frame i lands in frame j, given its depth.
PixelField correspondence_field(const DepthMap& depth_i, const Pose& world_from_i,
                                const Pose& world_from_j, const Intrinsics& k);

}  // namespace splatflow
