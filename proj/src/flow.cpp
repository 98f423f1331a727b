#include "splatflow/flow.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>

namespace splatflow {

void FlowRequest::validate() const {
  if (divisor != 1 && divisor != 2 && divisor != 4 && divisor != 8) {
    throw std::invalid_argument("flow request: divisor must be 1, 2, 4 or 8");
  }
  if (!source_origins.empty() && source_origins.size() != prior.size()) {
    throw std::invalid_argument("flow request: origin count does not match the prior grid");
  }
}

namespace {

// Same relative slack as the occlusion test.
constexpr double kSurfaceTolerance = 0.01;

std::uint64_t pair_seed(std::uint64_t seed, const std::string& a, const std::string& b) {
  const std::hash<std::string> h;
  std::uint64_t s = seed * 0x9E3779B97F4A7C15ull;
  s ^= h(a) + 0x9E3779B97F4A7C15ull + (s << 6) + (s >> 2);
  s ^= h(b) + 0x9E3779B97F4A7C15ull + (s << 6) + (s >> 2);
  return s;
}

}  // namespace

FlowField oracle_flow(const FlowRequest& request, const SyntheticScene& scene, const std::vector<Pose>& gt_poses,
                      const Intrinsics& full_res, const OracleNoise& noise, std::uint64_t seed) {
  request.validate();
  const int n_frames = static_cast<int>(gt_poses.size());
  if (request.target_frame < 0 || request.target_frame >= n_frames) {
    throw FlowUnavailable("oracle flow: no ground truth for target frame " + std::to_string(request.target_frame));
  }
  if (request.source_origins.empty() && (request.source_frame < 0 || request.source_frame >= n_frames)) {
    throw FlowUnavailable("oracle flow: no ground truth for source frame " + std::to_string(request.source_frame));
  }

  const PixelField& prior = request.prior;
  const double s = request.divisor;
  const Pose& target_pose = gt_poses[static_cast<std::size_t>(request.target_frame)];
  FlowField flow(prior.width, prior.height);

  std::mt19937_64 rng(pair_seed(seed, request.source_key, request.target_key));
  // Noise levels are given in full-resolution pixels.
  std::normal_distribution<double> gauss(0.0, noise.sigma_px > 0 ? noise.sigma_px / s : 1.0);

  std::vector<std::size_t> valid_pixels;
  for (int y = 0; y < prior.height; ++y) {
    for (int x = 0; x < prior.width; ++x) {
      const std::size_t idx = prior.index(x, y);
      if (!prior.valid[idx]) continue;
      PixelOrigin origin{request.source_frame, Eigen::Vector2d(s * x, s * y)};
      if (!request.source_origins.empty()) origin = request.source_origins[idx];
      if (!origin.known() || origin.frame >= n_frames) continue;

      const Pose& origin_pose = gt_poses[static_cast<std::size_t>(origin.frame)];
      const auto d = ray_depth(scene, origin_pose, full_res, origin.pixel);
      if (!d) continue;
      if (origin.depth > 0.0 && std::abs(*d - origin.depth) > kSurfaceTolerance * *d) continue;
      const Eigen::Vector3d world = origin_pose * backproject(origin.pixel, *d, full_res);
      Eigen::Vector2d p;
      if (!point_visible(scene, target_pose, full_res, world, &p)) continue;

      Eigen::Vector2d r = p / s - prior.coords[idx];
      if (noise.sigma_px > 0) r += Eigen::Vector2d(gauss(rng), gauss(rng));
      flow.corrections[idx] = r.cast<float>();
      flow.confidence[idx] = Eigen::Vector2f::Ones();
      flow.valid[idx] = 1;
      valid_pixels.push_back(idx);
    }
  }

  if (noise.outlier_fraction > 0 && !valid_pixels.empty()) {
    const auto n_out = static_cast<std::size_t>(
        std::lround(std::clamp(noise.outlier_fraction, 0.0, 1.0) * static_cast<double>(valid_pixels.size())));
    std::shuffle(valid_pixels.begin(), valid_pixels.end(), rng);
    std::uniform_real_distribution<double> uni(-noise.outlier_range_px / s, noise.outlier_range_px / s);
    for (std::size_t i = 0; i < n_out; ++i) {
      const std::size_t idx = valid_pixels[i];
      flow.corrections[idx] = Eigen::Vector2f(static_cast<float>(uni(rng)), static_cast<float>(uni(rng)));
      flow.confidence[idx] = Eigen::Vector2f::Constant(static_cast<float>(noise.outlier_confidence));
    }
  }
  return flow;
}

OracleFlowProvider::OracleFlowProvider(const SyntheticScene& scene, std::vector<Pose> gt_poses,
                                       const Intrinsics& full_res, OracleNoise noise, std::uint64_t seed)
    : scene_(scene), gt_poses_(std::move(gt_poses)), k_(full_res), noise_(noise), seed_(seed) {}

FlowField OracleFlowProvider::estimate(const FlowRequest& request) const {
  return oracle_flow(request, scene_, gt_poses_, k_, noise_, seed_);
}

std::filesystem::path FileFlowProvider::path_for(const std::string& source_key, const std::string& target_key) const {
  return dir_ / (source_key + "__" + target_key + ".flw");
}

FlowField FileFlowProvider::estimate(const FlowRequest& request) const {
  request.validate();
  const auto path = path_for(request.source_key, request.target_key);
  if (!std::filesystem::exists(path)) throw FlowUnavailable("no flow file " + path.string());
  return load_flow(path, request.prior.width, request.prior.height);
}

namespace {

constexpr std::array<char, 4> kMagic{'G', 'F', 'L', 'W'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                       static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  Reader(std::istream& in, const std::filesystem::path& path) : in_(in), path_(path) {}

  void bytes(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FlowFormatError("truncated flow file " + path_.string());
  }
  std::uint32_t u32() {
    std::array<unsigned char, 4> b{};
    bytes(b.data(), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  float f32() { return std::bit_cast<float>(u32()); }

 private:
  std::istream& in_;
  const std::filesystem::path& path_;
};

}  // namespace

void save_flow(const std::filesystem::path& path, const FlowField& flow) {
  const std::size_t n = static_cast<std::size_t>(flow.width) * flow.height;
  if (flow.width < 0 || flow.height < 0 || flow.corrections.size() != n || flow.confidence.size() != n ||
      flow.valid.size() != n) {
    throw std::invalid_argument("save_flow: inconsistent field dimensions");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic.data(), 4);
  put_u32(out, static_cast<std::uint32_t>(flow.width));
  put_u32(out, static_cast<std::uint32_t>(flow.height));
  for (const auto& c : flow.corrections) {
    put_f32(out, c.x());
    put_f32(out, c.y());
  }
  for (const auto& w : flow.confidence) {
    put_f32(out, w.x());
    put_f32(out, w.y());
  }
  for (std::uint8_t v : flow.valid) out.put(static_cast<char>(v ? 1 : 0));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

FlowField load_flow(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Reader r(in, path);
  std::array<char, 4> magic{};
  r.bytes(magic.data(), 4);
  if (magic != kMagic) throw FlowFormatError("bad magic in flow file " + path.string());
  const std::uint32_t w = r.u32();
  const std::uint32_t h = r.u32();
  if (w > 1u << 15 || h > 1u << 15) throw FlowFormatError("implausible flow dimensions in " + path.string());

  FlowField flow(static_cast<int>(w), static_cast<int>(h));
  for (auto& c : flow.corrections) {
    c.x() = r.f32();
    c.y() = r.f32();
  }
  for (auto& c : flow.confidence) {
    c.x() = r.f32();
    c.y() = r.f32();
    if (!(c.x() >= 0.0f) || !(c.y() >= 0.0f) || !std::isfinite(c.x()) || !std::isfinite(c.y())) {
      throw FlowFormatError("negative or non-finite confidence in " + path.string());
    }
  }
  r.bytes(flow.valid.data(), flow.valid.size());
  for (std::uint8_t v : flow.valid) {
    if (v > 1) throw FlowFormatError("mask byte outside {0,1} in " + path.string());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FlowFormatError("trailing bytes in " + path.string());
  return flow;
}

FlowField load_flow(const std::filesystem::path& path, int expected_width, int expected_height) {
  FlowField flow = load_flow(path);
  if (flow.width != expected_width || flow.height != expected_height) {
    throw DimensionMismatch("flow file " + path.string() + " is " + std::to_string(flow.width) + "x" +
                            std::to_string(flow.height) + ", expected " + std::to_string(expected_width) + "x" +
                            std::to_string(expected_height));
  }
  return flow;
}

PixelField corrected_correspondence(const PixelField& prior, const FlowField& flow) {
  if (prior.width != flow.width || prior.height != flow.height) {
    throw DimensionMismatch("corrected_correspondence: prior and flow grids differ");
  }
  PixelField out(prior.width, prior.height);
  for (std::size_t i = 0; i < prior.size(); ++i) {
    out.coords[i] = prior.coords[i];
    if (!prior.valid[i] || !flow.valid[i]) continue;
    out.coords[i] = prior.coords[i] + flow.corrections[i].cast<double>();
    out.valid[i] = 1;
  }
  return out;
}

}  // namespace splatflow
