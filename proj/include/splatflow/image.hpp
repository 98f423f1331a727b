#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace splatflow {

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Row-major single-plane image.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, const T& fill = T{})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {
    if (width < 0 || height < 0) throw std::invalid_argument("negative image size");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& operator()(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  template <typename U>
  bool same_size(const Image<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using ColorImage = Image<Eigen::Vector3d>;
using ScalarImage = Image<double>;
using Mask = Image<std::uint8_t>;

/// Metric depth with an explicit validity mask. Valid entries are finite and > 0.
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int width, int height) : values_(width, height, 0.0), valid_(width, height, 0) {}

  /// Marks every finite, strictly positive value as valid.
  static DepthMap from_values(ScalarImage values);

  int width() const { return values_.width(); }
  int height() const { return values_.height(); }
  std::size_t size() const { return values_.size(); }

  double operator()(int x, int y) const { return values_(x, y); }
  double operator[](std::size_t i) const { return values_[i]; }
  bool valid(int x, int y) const { return valid_(x, y) != 0; }
  bool valid(std::size_t i) const { return valid_[i] != 0; }

  /// Writes a depth; non-finite or non-positive values are stored invalid.
  void set(int x, int y, double d);
  void invalidate(int x, int y) {
    values_(x, y) = 0.0;
    valid_(x, y) = 0;
  }

  const ScalarImage& values() const { return values_; }
  const Mask& validity() const { return valid_; }
  std::size_t valid_count() const;

  /// Point subsampling: coarse (u, v) <- (divisor*u, divisor*v).
  DepthMap subsampled(int divisor) const;

 private:
  ScalarImage values_;
  Mask valid_;
};

template <typename A, typename B>
void require_same_size(const Image<A>& a, const Image<B>& b, const std::string& what) {
  if (!a.same_size(b)) {
    throw DimensionMismatch(what + ": " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                            " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
  }
}

ColorImage subsample(const ColorImage& img, int divisor);

inline int subsampled_extent(int extent, int divisor) { return (extent + divisor - 1) / divisor; }

}  // namespace splatflow
