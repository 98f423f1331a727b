#include "splatflow/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <Eigen/Geometry>
#include <Eigen/SVD>

namespace splatflow {

void validate_trajectory(const Trajectory& t) {
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!(t[i].timestamp > t[i - 1].timestamp)) {
      throw EvalError("trajectory timestamps not strictly increasing at entry " + std::to_string(i));
    }
  }
}

std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                           double tolerance) {
  validate_trajectory(est);
  validate_trajectory(gt);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t j = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double ts = est[i].timestamp;
    while (j + 1 < gt.size() && std::abs(gt[j + 1].timestamp - ts) <= std::abs(gt[j].timestamp - ts)) ++j;
    if (j < gt.size() && std::abs(gt[j].timestamp - ts) <= tolerance) {
      if (!pairs.empty() && pairs.back().second == j) continue;
      pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

Alignment align_rigid(const Trajectory& est, const Trajectory& gt, bool with_scale, double tolerance) {
  const auto pairs = associate(est, gt, tolerance);
  if (pairs.size() < 3) {
    throw EvalError("alignment needs at least 3 associated poses, got " + std::to_string(pairs.size()));
  }
  Eigen::Matrix3Xd src(3, pairs.size());
  Eigen::Matrix3Xd dst(3, pairs.size());
  for (std::size_t c = 0; c < pairs.size(); ++c) {
    src.col(static_cast<Eigen::Index>(c)) = est[pairs[c].first].pose.translation();
    dst.col(static_cast<Eigen::Index>(c)) = gt[pairs[c].second].pose.translation();
  }
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, with_scale);

  Alignment a;
  a.pairs = pairs.size();
  a.scale = with_scale ? std::cbrt(T.topLeftCorner<3, 3>().determinant()) : 1.0;
  a.transform = Pose(Eigen::Matrix3d(T.topLeftCorner<3, 3>() / a.scale), Eigen::Vector3d(T.topRightCorner<3, 1>()));

  const Eigen::Matrix3Xd centered = src.colwise() - src.rowwise().mean();
  const Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centered);
  const Eigen::Vector3d sv = svd.singularValues();
  a.degenerate = sv[0] <= 0.0 || sv[1] <= 1e-9 * sv[0];
  return a;
}

AteReport ate(const Trajectory& est, const Trajectory& gt, bool with_scale, double tolerance) {
  AteReport report;
  report.alignment = align_rigid(est, gt, with_scale, tolerance);
  const auto pairs = associate(est, gt, tolerance);
  double sum = 0.0;
  for (const auto& [i, j] : pairs) {
    const Eigen::Vector3d p = report.alignment.scale * (report.alignment.transform.rotation() *
                                                        est[i].pose.translation()) +
                              report.alignment.transform.translation();
    sum += (p - gt[j].pose.translation()).squaredNorm();
  }
  report.rmse_cm = 100.0 * std::sqrt(sum / static_cast<double>(pairs.size()));
  return report;
}

double ate_rmse(const Trajectory& est, const Trajectory& gt, bool with_scale) {
  return ate(est, gt, with_scale).rmse_cm;
}

double psnr(const ColorImage& a, const ColorImage& b) {
  require_same_size(a, b, "psnr");
  if (a.size() == 0) throw EvalError("psnr: empty images");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sse += (a[i] - b[i]).squaredNorm();
  const double mse = sse / (3.0 * static_cast<double>(a.size()));
  if (mse < 1e-10) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr int kWindow = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= sum;
  return w;
}

/// Valid-mode separable Gaussian filter.
ScalarImage filter(const ScalarImage& in) {
  static const auto taps = gaussian_taps();
  const int w = in.width() - kWindow + 1;
  const int h = in.height() - kWindow + 1;
  ScalarImage rows(w, in.height(), 0.0);
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += taps[static_cast<std::size_t>(k)] * in(x + k, y);
      rows(x, y) = acc;
    }
  }
  ScalarImage out(w, h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += taps[static_cast<std::size_t>(k)] * rows(x, y + k);
      out(x, y) = acc;
    }
  }
  return out;
}

ScalarImage channel(const ColorImage& img, int c) {
  ScalarImage out(img.width(), img.height(), 0.0);
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = img[i][c];
  return out;
}

/// Mean SSIM and mean contrast-structure term of one channel.
std::pair<double, double> ssim_terms(const ScalarImage& a, const ScalarImage& b) {
  ScalarImage aa(a.width(), a.height(), 0.0), bb(aa), ab(aa);
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const ScalarImage mu_a = filter(a), mu_b = filter(b);
  const ScalarImage s_aa = filter(aa), s_bb = filter(bb), s_ab = filter(ab);
  double ssim_sum = 0.0;
  double cs_sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = s_aa[i] - ma * ma;
    const double vb = s_bb[i] - mb * mb;
    const double cov = s_ab[i] - ma * mb;
    const double cs = (2.0 * cov + kC2) / (va + vb + kC2);
    ssim_sum += (2.0 * ma * mb + kC1) / (ma * ma + mb * mb + kC1) * cs;
    cs_sum += cs;
  }
  const auto n = static_cast<double>(mu_a.size());
  return {ssim_sum / n, cs_sum / n};
}

ScalarImage downsample2(const ScalarImage& in) {
  ScalarImage out(in.width() / 2, in.height() / 2, 0.0);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      out(x, y) = 0.25 * (in(2 * x, 2 * y) + in(2 * x + 1, 2 * y) + in(2 * x, 2 * y + 1) + in(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

}  // namespace

double ssim(const ColorImage& a, const ColorImage& b) {
  require_same_size(a, b, "ssim");
  if (a.width() < kWindow || a.height() < kWindow) throw EvalError("ssim: images smaller than the 11x11 window");
  double total = 0.0;
  for (int c = 0; c < 3; ++c) total += ssim_terms(channel(a, c), channel(b, c)).first;
  return total / 3.0;
}

double ms_ssim(const ColorImage& a, const ColorImage& b) {
  require_same_size(a, b, "ms_ssim");
  constexpr std::array<double, 5> weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  constexpr int kMinSide = kWindow << 4;
  if (a.width() < kMinSide || a.height() < kMinSide) {
    throw EvalError("ms_ssim: images need at least " + std::to_string(kMinSide) + " pixels per side");
  }
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    ScalarImage x = channel(a, c), y = channel(b, c);
    double value = 1.0;
    for (std::size_t level = 0; level < weights.size(); ++level) {
      const auto [s, cs] = ssim_terms(x, y);
      const double term = level + 1 == weights.size() ? s : cs;
      value *= std::pow(std::max(term, 0.0), weights[level]);
      if (level + 1 < weights.size()) {
        x = downsample2(x);
        y = downsample2(y);
      }
    }
    total += value;
  }
  return total / 3.0;
}

double depth_l1(const DepthMap& a, const DepthMap& b) {
  if (a.width() != b.width() || a.height() != b.height()) throw DimensionMismatch("depth_l1: size mismatch");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a.valid(i) || !b.valid(i)) continue;
    sum += std::abs(a[i] - b[i]);
    ++n;
  }
  if (n == 0) throw EvalError("depth_l1: no jointly valid pixels");
  return sum / static_cast<double>(n);
}

}  // namespace splatflow
