#pragma once

#include <cmath>
#include <random>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "splatflow/geometry.hpp"

namespace sftest {

inline splatflow::Pose random_pose(std::mt19937_64& rng, double max_angle = 3.0, double max_t = 2.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::Vector3d axis(n(rng), n(rng), n(rng));
  axis.normalize();
  const double angle = max_angle * u(rng);
  Eigen::Vector3d t(n(rng), n(rng), n(rng));
  t *= max_t / std::sqrt(3.0);
  return splatflow::Pose(Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis)), t);
}

inline Eigen::Vector3d random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  return {n(rng), n(rng), n(rng)};
}

inline double pose_gap(const splatflow::Pose& a, const splatflow::Pose& b) {
  return splatflow::rotation_distance(a, b) + splatflow::translation_distance(a, b);
}

inline splatflow::Intrinsics small_k(int w = 64, int h = 48, double f = 50.0) {
  return {f, f, 0.5 * (w - 1), 0.5 * (h - 1), w, h};
}

}  // namespace sftest
