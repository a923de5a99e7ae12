#include "stenokit/losses.hpp"

#include <cmath>

namespace stenokit {

PositiveAssignment assign_positive(const BBox& roi, std::span<const BBox> gt_boxes, double threshold) {
  PositiveAssignment out;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < gt_boxes.size(); ++i) {
    const double iou = box_iou(roi, gt_boxes[i]);
    if (!best || iou > out.best_iou) {
      best = i;
      out.best_iou = iou;
    }
  }
  if (best && out.best_iou >= threshold) {
    out.positive = true;
    out.matched = best;
  }
  return out;
}

Bitmap mask_target(const BBox& roi, const RleMask& gt_mask, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw InvalidRoi("mask target size must be positive");
  if (!(roi.width() > 0.0) || !(roi.height() > 0.0)) throw InvalidRoi("mask target needs a non-degenerate roi");
  const Bitmap gt = gt_mask.decode();
  const double step_y = roi.height() / out_h;
  const double step_x = roi.width() / out_w;
  Bitmap out = Bitmap::Zero(out_h, out_w);
  for (int c = 0; c < out_w; ++c) {
    const double x = std::floor(roi.x1() + (c + 0.5) * step_x);
    if (x < 0.0 || x >= gt_mask.width()) continue;
    for (int r = 0; r < out_h; ++r) {
      const double y = std::floor(roi.y1() + (r + 0.5) * step_y);
      if (y < 0.0 || y >= gt_mask.height()) continue;
      out(r, c) = gt(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x));
    }
  }
  return out;
}

}  // namespace stenokit
