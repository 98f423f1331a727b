#include "splatflow/image.hpp"

#include <cmath>

namespace splatflow {

DepthMap DepthMap::from_values(ScalarImage values) {
  DepthMap out;
  out.valid_ = Mask(values.width(), values.height(), 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i];
    if (std::isfinite(d) && d > 0.0) {
      out.valid_[i] = 1;
    } else {
      values[i] = 0.0;
    }
  }
  out.values_ = std::move(values);
  return out;
}

void DepthMap::set(int x, int y, double d) {
  if (std::isfinite(d) && d > 0.0) {
    values_(x, y) = d;
    valid_(x, y) = 1;
  } else {
    invalidate(x, y);
  }
}

std::size_t DepthMap::valid_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < valid_.size(); ++i) n += valid_[i] != 0;
  return n;
}

DepthMap DepthMap::subsampled(int divisor) const {
  if (divisor < 1) throw std::invalid_argument("subsample divisor must be >= 1");
  DepthMap out(subsampled_extent(width(), divisor), subsampled_extent(height(), divisor));
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const int sx = x * divisor;
      const int sy = y * divisor;
      if (valid(sx, sy)) out.set(x, y, values_(sx, sy));
    }
  }
  return out;
}

ColorImage subsample(const ColorImage& img, int divisor) {
  if (divisor < 1) throw std::invalid_argument("subsample divisor must be >= 1");
  ColorImage out(subsampled_extent(img.width(), divisor), subsampled_extent(img.height(), divisor));
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) out(x, y) = img(x * divisor, y * divisor);
  return out;
}

}  // namespace splatflow
