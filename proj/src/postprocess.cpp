#include "stenokit/postprocess.hpp"

#include "stenokit/errors.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <tuple>

namespace stenokit {

std::string_view to_string(IouKind kind) { return kind == IouKind::box ? "box" : "mask"; }

IouKind parse_iou_kind(std::string_view s) {
  if (s == "box") return IouKind::box;
  if (s == "mask") return IouKind::mask;
  throw InputError("unknown iou kind '" + std::string(s) + "' (expected box or mask)");
}

void PostProcessConfig::validate() const {
  std::vector<std::string> errs;
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) errs.push_back("nms_iou must be in (0, 1]");
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0)) errs.push_back("score_threshold must be in [0, 1]");
  if (max_detections < 0) errs.push_back("max_detections must be >= 0");
  if (!(rpn_nms_iou > 0.0 && rpn_nms_iou <= 1.0)) errs.push_back("rpn_nms_iou must be in (0, 1]");
  if (!errs.empty()) throw ValidationError(std::move(errs));
}

double detection_iou(const Detection& a, const Detection& b, IouKind kind) {
  if (kind == IouKind::box) return box_iou(a.box, b.box);
  if (!a.mask || !b.mask) throw MissingMask("mask IoU requested but a detection has no mask");
  return mask_iou(*a.mask, *b.mask);
}

bool canonical_less(const Detection& a, const Detection& b) {
  auto key = [](const Detection& d) {
    return std::make_tuple(-d.score, d.class_id, d.image_id, d.box.x1(), d.box.y1(), d.box.x2(), d.box.y2(),
                           d.mask.has_value());
  };
  const auto ka = key(a), kb = key(b);
  if (ka != kb) return ka < kb;
  if (a.mask && b.mask) {
    if (a.mask->height() != b.mask->height()) return a.mask->height() < b.mask->height();
    if (a.mask->width() != b.mask->width()) return a.mask->width() < b.mask->width();
    return a.mask->runs() < b.mask->runs();
  }
  return false;
}

std::vector<Detection> canonical_order(std::span<const Detection> dets) {
  std::vector<Detection> out(dets.begin(), dets.end());
  std::stable_sort(out.begin(), out.end(), canonical_less);
  return out;
}

namespace {

std::vector<std::size_t> by_descending_score(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}

}  // namespace

std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold, IouKind kind) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw InputError("nms threshold must be in (0, 1]");
  const std::vector<std::size_t> order = by_descending_score(dets);
  std::vector<bool> suppressed(order.size(), false);
  std::vector<Detection> kept;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (suppressed[i]) continue;
    const Detection& top = dets[order[i]];
    kept.push_back(top);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (suppressed[j]) continue;
      const Detection& other = dets[order[j]];
      if (other.class_id != top.class_id || other.image_id != top.image_id) continue;
      if (detection_iou(top, other, kind) > iou_threshold) suppressed[j] = true;
    }
  }
  return kept;
}

std::vector<Detection> confidence_filter(std::span<const Detection> dets, double threshold) {
  std::vector<Detection> out;
  std::copy_if(dets.begin(), dets.end(), std::back_inserter(out),
               [&](const Detection& d) { return d.score >= threshold; });
  return out;
}

std::vector<Detection> top_k(std::span<const Detection> dets, int k) {
  if (k < 0) throw InputError("top_k needs k >= 0");
  std::vector<std::size_t> order = by_descending_score(dets);
  order.resize(std::min(order.size(), static_cast<std::size_t>(k)));
  std::vector<Detection> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(dets[i]);
  return out;
}

PipelineResult run_pipeline_counted(std::span<const Detection> dets, const PostProcessConfig& cfg, IouKind kind) {
  cfg.validate();
  PipelineResult r;
  r.counts.input = dets.size();
  const std::vector<Detection> sorted = canonical_order(dets);
  const std::vector<Detection> filtered = confidence_filter(sorted, cfg.score_threshold);
  r.counts.after_filter = filtered.size();
  const std::vector<Detection> survivors = nms(filtered, cfg.nms_iou, kind);
  r.counts.after_nms = survivors.size();
  r.detections = top_k(survivors, cfg.max_detections);
  r.counts.after_cap = r.detections.size();
  return r;
}

std::vector<Detection> run_pipeline(std::span<const Detection> dets, const PostProcessConfig& cfg, IouKind kind) {
  return run_pipeline_counted(dets, cfg, kind).detections;
}

}  // namespace stenokit
