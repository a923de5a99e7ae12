#include "stenokit/anchors.hpp"

#include "stenokit/errors.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace stenokit {

void AnchorConfig::validate() const {
  if (sizes.empty() || ratios.empty() || strides.empty()) {
    throw std::invalid_argument("anchor config needs at least one size, ratio and stride");
  }
  for (double s : sizes)
    if (!(s > 0.0)) throw std::invalid_argument("anchor sizes must be positive");
  for (double r : ratios)
    if (!(r > 0.0)) throw std::invalid_argument("anchor ratios must be positive");
  for (int s : strides)
    if (s <= 0) throw std::invalid_argument("anchor strides must be positive");
}

std::vector<double> sizes_for_stride(const AnchorConfig& cfg, int stride) {
  cfg.validate();
  if (cfg.strides.size() == 1) return cfg.sizes;
  const auto it = std::find(cfg.strides.begin(), cfg.strides.end(), stride);
  if (it == cfg.strides.end()) {
    throw std::invalid_argument("stride " + std::to_string(stride) + " is not a configured pyramid level");
  }
  const std::size_t level = static_cast<std::size_t>(it - cfg.strides.begin());
  std::vector<double> out;
  for (std::size_t i = level; i < cfg.sizes.size(); i += cfg.strides.size()) out.push_back(cfg.sizes[i]);
  return out;
}

std::vector<BBox> generate_anchors(const AnchorConfig& cfg, int level_height, int level_width, int stride) {
  if (level_height <= 0 || level_width <= 0 || stride <= 0) {
    throw std::invalid_argument("feature level dimensions and stride must be positive");
  }
  const std::vector<double> sizes = sizes_for_stride(cfg, stride);

  // Half-extents per (size, ratio): w = s / sqrt(r), h = s * sqrt(r).
  std::vector<std::pair<double, double>> half;
  half.reserve(sizes.size() * cfg.ratios.size());
  for (double s : sizes) {
    for (double r : cfg.ratios) {
      const double root = std::sqrt(r);
      half.emplace_back(0.5 * s / root, 0.5 * s * root);
    }
  }

  std::vector<BBox> anchors;
  anchors.reserve(std::size_t(level_height) * std::size_t(level_width) * half.size());
  for (int row = 0; row < level_height; ++row) {
    const double cy = (row + 0.5) * stride;
    for (int col = 0; col < level_width; ++col) {
      const double cx = (col + 0.5) * stride;
      for (const auto& [hw, hh] : half) anchors.emplace_back(cx - hw, cy - hh, cx + hw, cy + hh);
    }
  }
  return anchors;
}

BBox decode_deltas(const BBox& anchor, const BoxDeltas& deltas) {
  const double wa = anchor.width();
  const double ha = anchor.height();
  if (!(wa > 0.0) || !(ha > 0.0)) throw InvalidBox("cannot decode deltas onto a degenerate anchor");
  const double cx = anchor.center_x() + deltas[0] * wa;
  const double cy = anchor.center_y() + deltas[1] * ha;
  const double w = wa * std::exp(std::min(deltas[2], kMaxDeltaLog));
  const double h = ha * std::exp(std::min(deltas[3], kMaxDeltaLog));
  return BBox(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h);
}

BBox clip_box(const BBox& box, double height, double width) {
  return BBox(std::clamp(box.x1(), 0.0, width), std::clamp(box.y1(), 0.0, height),
              std::clamp(box.x2(), 0.0, width), std::clamp(box.y2(), 0.0, height));
}

std::vector<BBox> clip_boxes(std::span<const BBox> boxes, double height, double width) {
  std::vector<BBox> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) out.push_back(clip_box(b, height, width));
  return out;
}

}  // namespace stenokit
