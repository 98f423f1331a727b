#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "splatflow/eval.hpp"
#include "splatflow/frame.hpp"
#include "splatflow/gaussian_map.hpp"
#include "splatflow/image.hpp"

namespace splatflow {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input; carries the offending file and line.
class ParseError : public IoError {
 public:
  ParseError(const std::filesystem::path& file, int line, const std::string& what)
      : IoError(file.string() + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

constexpr double kTumDepthScale = 5000.0;

ColorImage read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const ColorImage& img);
/// 16-bit single channel; 0 marks invalid.
DepthMap read_png_depth(const std::filesystem::path& path, double counts_per_meter = kTumDepthScale);
void write_png_depth(const std::filesystem::path& path, const DepthMap& depth,
                     double counts_per_meter = kTumDepthScale);

/// "timestamp tx ty tz qx qy qz qw"
std::string format_tum_line(const TimedPose& p);
TimedPose parse_tum_line(const std::string& line);
void export_trajectory(const Trajectory& t, const std::filesystem::path& path);
Trajectory read_trajectory(const std::filesystem::path& path);

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> colors;  // [0, 1]
  std::size_t size() const { return points.size(); }
};

PointCloud map_cloud(const GaussianMap& map);
/// ASCII PLY with x y z red green blue.
void export_ply(const PointCloud& cloud, const std::filesystem::path& path);
PointCloud read_ply(const std::filesystem::path& path);

/// PLY of the centers plus a full-precision `<path>.meta` sidecar holding
/// every Gaussian parameter.
void export_map(const GaussianMap& map, const std::filesystem::path& ply_path);
GaussianMap load_map(const std::filesystem::path& ply_path);

struct TumEntry {
  double timestamp = 0.0;
  std::filesystem::path rgb;
  std::filesystem::path depth;  // empty when no depth stream is present
};

struct TumSequence {
  std::filesystem::path directory;
  std::vector<TumEntry> frames;
  Trajectory groundtruth;
  std::optional<Intrinsics> intrinsics;  // from calibration.txt when present
};

/// Reads rgb.txt, and depth.txt / groundtruth.txt / calibration.txt when
/// present. RGB and depth are paired by nearest timestamp within `tolerance`.
TumSequence load_tum(const std::filesystem::path& dir, double tolerance = 0.02);

/// Writes a sequence in the layout load_tum reads.
void write_tum_sequence(const std::filesystem::path& dir, const std::vector<Frame>& frames,
                        const Trajectory& groundtruth, const Intrinsics& k);

Intrinsics parse_intrinsics(const std::string& text);
std::string format_intrinsics(const Intrinsics& k);

}  // namespace splatflow
