#pragma once

#include "splatflow/geometry.hpp"
#include "splatflow/image.hpp"

namespace splatflow {

/// One RGB observation together with its pseudo-depth.
struct Frame {
  int index = 0;
  double timestamp = 0.0;
  ColorImage rgb;
  DepthMap depth;
  Intrinsics intrinsics;

  /// Throws DimensionMismatch if image, depth and intrinsics disagree.
  void validate() const {
    if (rgb.width() != intrinsics.width || rgb.height() != intrinsics.height ||
        depth.width() != intrinsics.width || depth.height() != intrinsics.height) {
      throw DimensionMismatch("frame " + std::to_string(index) + ": image/depth/intrinsics size mismatch");
    }
  }
};

}  // namespace splatflow
