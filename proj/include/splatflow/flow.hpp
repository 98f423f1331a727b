#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "splatflow/geometry.hpp"
#include "splatflow/image.hpp"
#include "splatflow/synthetic.hpp"

namespace splatflow {

/// Flow corrections r_ij and per-axis confidences w_ij on a (coarse) grid.
/// Stored in single precision, matching the on-disk format.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<Eigen::Vector2f> corrections;
  std::vector<Eigen::Vector2f> confidence;
  std::vector<std::uint8_t> valid;

  FlowField() = default;
  FlowField(int w, int h)
      : width(w),
        height(h),
        corrections(static_cast<std::size_t>(w) * h, Eigen::Vector2f::Zero()),
        confidence(static_cast<std::size_t>(w) * h, Eigen::Vector2f::Zero()),
        valid(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t size() const { return corrections.size(); }
};

/// The full-resolution observation that a source pixel depicts: the pixel of
/// the frame in which its content was first seen.
struct PixelOrigin {
  int frame = -1;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  /// Depth of the shown point in the origin view when known (0 = unknown).
  /// The oracle treats the pixel as unmatched if the true surface there
  /// disagrees by more than 1%.
  double depth = 0.0;
  bool known() const { return frame >= 0; }
};

struct FlowRequest {
  std::string source_key;
  std::string target_key;
  int source_frame = -1;
  int target_frame = -1;
  const ColorImage* source_image = nullptr;
  const ColorImage* target_image = nullptr;
  /// Prior correspondence field on the coarse grid.
  PixelField prior;
  int divisor = 8;
  /// One entry per coarse source pixel. When empty, each coarse pixel is
  /// taken to be an observation of `source_frame` itself.
  std::vector<PixelOrigin> source_origins;

  /// Throws std::invalid_argument on an unsupported divisor or origin count.
  void validate() const;
};

class FlowUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FlowFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FlowProvider {
 public:
  virtual ~FlowProvider() = default;
  virtual FlowField estimate(const FlowRequest& request) const = 0;
};

/// Flow errors in full-resolution pixels; on a coarse grid they shrink by
/// the divisor.
struct OracleNoise {
  double sigma_px = 0.0;
  double outlier_fraction = 0.0;
  /// Confidence assigned to outliers: 1 stresses the solver, 0.05 is benign.
  double outlier_confidence = 1.0;
  double outlier_range_px = 20.0;
};

/// Ground-truth flow from an analytic scene: corrections bring the prior onto
/// the true correspondence, confidence marks co-visibility.
class OracleFlowProvider : public FlowProvider {
 public:
  OracleFlowProvider(const SyntheticScene& scene, std::vector<Pose> gt_poses, const Intrinsics& full_res,
                     OracleNoise noise, std::uint64_t seed);

  FlowField estimate(const FlowRequest& request) const override;

  const OracleNoise& noise() const { return noise_; }

 private:
  const SyntheticScene& scene_;
  std::vector<Pose> gt_poses_;
  Intrinsics k_;
  OracleNoise noise_;
  std::uint64_t seed_;
};

FlowField oracle_flow(const FlowRequest& request, const SyntheticScene& scene, const std::vector<Pose>& gt_poses,
                      const Intrinsics& full_res, const OracleNoise& noise, std::uint64_t seed);

/// Reads `<dir>/<source_key>__<target_key>.flw`.
class FileFlowProvider : public FlowProvider {
 public:
  explicit FileFlowProvider(std::filesystem::path directory) : dir_(std::move(directory)) {}
  FlowField estimate(const FlowRequest& request) const override;
  std::filesystem::path path_for(const std::string& source_key, const std::string& target_key) const;

 private:
  std::filesystem::path dir_;
};

/// "GFLW", u32 width, u32 height, f32 corrections, f32 confidences, u8 mask;
/// all little-endian.
void save_flow(const std::filesystem::path& path, const FlowField& flow);
FlowField load_flow(const std::filesystem::path& path);
FlowField load_flow(const std::filesystem::path& path, int expected_width, int expected_height);

/// p* = prior + r where both are valid.
PixelField corrected_correspondence(const PixelField& prior, const FlowField& flow);

}  // namespace splatflow
