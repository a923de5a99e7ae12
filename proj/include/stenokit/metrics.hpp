#pragma once

#include "stenokit/dataset_io.hpp"
#include "stenokit/postprocess.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stenokit {

struct GroundTruthInstance {
  std::int64_t annotation_id = 0;
  ImageId image_id = 0;
  int class_id = 0;
  BBox box;
  std::optional<RleMask> mask;
};

using GroundTruthByImage = std::map<ImageId, std::vector<GroundTruthInstance>>;

/// Rasterizes every annotation; each image gets an entry.
GroundTruthByImage instances_from(const GroundTruthSet& gt, int threads = 1);

/// Matching knobs. Defaults: mask IoU at 0.5.
struct MatchConfig {
  double iou_threshold = 0.5;
  IouKind kind = IouKind::mask;
};

struct MatchedPair {
  std::size_t detection = 0;
  std::size_t ground_truth = 0;
  double iou = 0.0;
};

/// Indices refer to the caller's per-image detection and ground-truth lists.
struct ImageMatch {
  ImageId image_id = 0;
  std::vector<MatchedPair> pairs;
  std::vector<std::size_t> false_positives;
  std::vector<std::size_t> false_negatives;
  std::vector<int> detection_classes;
  std::vector<int> ground_truth_classes;
};

struct MatchResult {
  double iou_threshold = 0.5;
  IouKind kind = IouKind::mask;
  std::vector<ImageMatch> images;
};

double instance_iou(const Detection& d, const GroundTruthInstance& g, IouKind kind);

/// Greedy one-to-one matching in canonical detection order: each detection
/// takes the highest-IoU unmatched ground truth of its class with
/// IoU >= threshold (ties to the lowest index).
ImageMatch match_image(std::span<const Detection> dets, std::span<const GroundTruthInstance> gts,
                       const MatchConfig& cfg = {});

MatchResult match_detections(const DetectionsByImage& dets, const GroundTruthByImage& gts, const MatchConfig& cfg = {},
                             int threads = 1);

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const;
  double recall() const;
  double f1() const;
  friend bool operator==(const Counts&, const Counts&) = default;
};

struct SweepRow {
  double nms_iou = 0.0;
  double f1 = 0.0;
  Counts counts;
};

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  Counts counts;
  std::map<int, Counts> per_class;
  double match_iou = 0.5;
  IouKind match_kind = IouKind::mask;
  std::optional<double> seg_map;
  std::vector<SweepRow> sweep;
};

/// Micro-averaged precision, recall and F1 over the whole dataset.
EvalReport f1_score(const MatchResult& match);

/// The ten COCO mask-IoU thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> coco_iou_thresholds();

/// AP of one class at one IoU threshold with 101-point interpolated
/// precision. Detections of other classes are ignored.
double average_precision(const DetectionsByImage& dets, const GroundTruthByImage& gts, int class_id,
                         double iou_threshold);

/// Mean AP over the COCO thresholds and over the classes present in the
/// ground truth. Throws MissingMask when any detection or ground truth lacks a
/// mask. Returns 0 when the ground truth has no instances.
double seg_map(const DetectionsByImage& dets, const GroundTruthByImage& gts);

/// Matches post-processed detections and scores them.
EvalReport evaluate(const DetectionsByImage& dets, const GroundTruthByImage& gts, const MatchConfig& cfg = {},
                    int threads = 1);

/// Applies the post-processing pipeline to every image.
DetectionsByImage postprocess_all(const DetectionsByImage& raw, const PostProcessConfig& cfg, IouKind nms_kind,
                                  int threads = 1, StageCounts* totals = nullptr);

/// For each threshold: run the pipeline with nms_iou replaced, then F1.
/// Rows come back in input order.
std::vector<SweepRow> threshold_sweep(const DetectionsByImage& raw, const GroundTruthByImage& gts,
                                      const PostProcessConfig& base, std::span<const double> thresholds,
                                      const MatchConfig& match = {}, IouKind nms_kind = IouKind::box, int threads = 1);

/// Default sweep grid 0.50, 0.55, ..., 0.95.
std::vector<double> default_sweep_grid();

std::string report_to_json(const EvalReport& r);
std::string report_to_table(const EvalReport& r);
std::string sweep_to_csv(std::span<const SweepRow> rows);

}  // namespace stenokit
