#pragma once

#include "stenokit/geometry.hpp"

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace stenokit {

/// RPN anchor layout. `ratios` are height / width. With a single stride every
/// size is tiled on that level; with several strides sizes are dealt out
/// round-robin, size i going to level i % strides.size().
struct AnchorConfig {
  std::vector<double> sizes{4, 8, 16, 32, 64};
  std::vector<double> ratios{0.5, 1.0, 2.0};
  std::vector<int> strides{4};

  /// Throws std::invalid_argument on non-positive entries or empty lists.
  void validate() const;
};

/// Sizes served by the level with the given stride.
std::vector<double> sizes_for_stride(const AnchorConfig& cfg, int stride);

/// Anchors for one feature level, row-major by cell, then size, then ratio.
std::vector<BBox> generate_anchors(const AnchorConfig& cfg, int level_height, int level_width, int stride);

/// (dx, dy, dw, dh) box regression offsets.
using BoxDeltas = std::array<double, 4>;

/// Upper bound applied to dw and dh before exponentiation.
inline const double kMaxDeltaLog = std::log(1000.0 / 16.0);

BBox decode_deltas(const BBox& anchor, const BoxDeltas& deltas);

std::vector<BBox> clip_boxes(std::span<const BBox> boxes, double height, double width);
BBox clip_box(const BBox& box, double height, double width);

}  // namespace stenokit
