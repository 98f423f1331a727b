#pragma once

#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "splatflow/geometry.hpp"
#include "splatflow/image.hpp"

namespace splatflow {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TimedPose {
  double timestamp = 0.0;
  Pose pose;
};

using Trajectory = std::vector<TimedPose>;

/// Throws EvalError unless timestamps are strictly increasing.
void validate_trajectory(const Trajectory& t);

/// Index pairs (est, gt) matched by nearest timestamp within `tolerance`
/// seconds; each ground-truth entry is used at most once.
std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                           double tolerance = 0.02);

struct Alignment {
  /// Maps estimated positions onto ground truth: gt ~ scale * R * est + t.
  Pose transform;
  double scale = 1.0;
  std::size_t pairs = 0;
  /// Positions (nearly) collinear: the rotation about their line is arbitrary.
  bool degenerate = false;
};

/// Least-squares rigid (optionally similarity) fit of associated positions.
/// Throws EvalError with fewer than three pairs.
Alignment align_rigid(const Trajectory& est, const Trajectory& gt, bool with_scale = false,
                      double tolerance = 0.02);

struct AteReport {
  double rmse_cm = 0.0;
  Alignment alignment;
};

AteReport ate(const Trajectory& est, const Trajectory& gt, bool with_scale = false, double tolerance = 0.02);
double ate_rmse(const Trajectory& est, const Trajectory& gt, bool with_scale = false);

/// Images are in [0, 1]; reports are capped at 99 dB.
double psnr(const ColorImage& a, const ColorImage& b);
/// 11x11 Gaussian window (sigma 1.5), mean over the fully covered region,
/// averaged over channels.
double ssim(const ColorImage& a, const ColorImage& b);
/// Five-scale product with the usual level weights; each side must be at
/// least 176 pixels.
double ms_ssim(const ColorImage& a, const ColorImage& b);
/// Mean absolute difference over jointly valid pixels [m].
double depth_l1(const DepthMap& a, const DepthMap& b);

}  // namespace splatflow
