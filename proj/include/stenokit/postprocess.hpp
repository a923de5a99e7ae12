#pragma once

#include "stenokit/geometry.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace stenokit {

using ImageId = std::int64_t;

struct Detection {
  BBox box;
  double score = 0.0;
  int class_id = 0;
  std::optional<RleMask> mask;
  ImageId image_id = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

enum class IouKind { box, mask };

std::string_view to_string(IouKind kind);
/// Accepts "box" or "mask"; throws InputError otherwise.
IouKind parse_iou_kind(std::string_view s);

/// Inference-time post-processing knobs. Defaults are the tuned values of the
/// stenosis detector: NMS IoU 0.95, confidence >= 0.8, at most 3 detections.
/// `rpn_nms_iou` is carried for completeness; the box/mask chain never uses it.
struct PostProcessConfig {
  double nms_iou = 0.95;
  double score_threshold = 0.8;
  int max_detections = 3;
  double rpn_nms_iou = 0.7;

  /// Throws InputError when a field is out of range.
  void validate() const;
  friend bool operator==(const PostProcessConfig&, const PostProcessConfig&) = default;
};

/// Box or mask IoU; mask IoU throws MissingMask when either side lacks one.
double detection_iou(const Detection& a, const Detection& b, IouKind kind);

/// Total order used to make results independent of input order: score
/// descending, then class, image, box and mask.
bool canonical_less(const Detection& a, const Detection& b);
std::vector<Detection> canonical_order(std::span<const Detection> dets);

/// Greedy class-aware NMS. A candidate is suppressed when its IoU with a kept
/// detection of the same class is strictly greater than the threshold.
/// Output is in descending score order (ties keep input order).
std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold, IouKind kind = IouKind::box);

/// Keeps detections with score >= threshold, preserving order.
std::vector<Detection> confidence_filter(std::span<const Detection> dets, double threshold);

/// The k best by score; ties keep input order.
std::vector<Detection> top_k(std::span<const Detection> dets, int k);

struct StageCounts {
  std::size_t input = 0;
  std::size_t after_filter = 0;
  std::size_t after_nms = 0;
  std::size_t after_cap = 0;

  StageCounts& operator+=(const StageCounts& o) {
    input += o.input;
    after_filter += o.after_filter;
    after_nms += o.after_nms;
    after_cap += o.after_cap;
    return *this;
  }
};

struct PipelineResult {
  std::vector<Detection> detections;
  StageCounts counts;
};

/// Canonical sort, then confidence filter, NMS and the detection cap, in that
/// order. Operates on the detections of a single image.
PipelineResult run_pipeline_counted(std::span<const Detection> dets, const PostProcessConfig& cfg,
                                    IouKind kind = IouKind::box);

std::vector<Detection> run_pipeline(std::span<const Detection> dets, const PostProcessConfig& cfg = {},
                                    IouKind kind = IouKind::box);

}  // namespace stenokit
