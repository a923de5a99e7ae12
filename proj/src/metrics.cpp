#include "stenokit/metrics.hpp"

#include "stenokit/errors.hpp"
#include "stenokit/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>

namespace stenokit {

GroundTruthByImage instances_from(const GroundTruthSet& gt, int threads) {
  GroundTruthByImage out;
  for (const auto& im : gt.images) out[im.id];
  std::vector<GroundTruthInstance> flat(gt.annotations.size());
  parallel_for(gt.annotations.size(), threads, [&](std::size_t i) {
    const Annotation& a = gt.annotations[i];
    GroundTruthInstance& g = flat[i];
    g.annotation_id = a.id;
    g.image_id = a.image_id;
    g.class_id = a.category_id;
    g.box = BBox::from_xywh(a.bbox);
    if (!std::holds_alternative<std::monostate>(a.segmentation)) g.mask = annotation_mask(gt, a);
  });
  for (auto& g : flat) out[g.image_id].push_back(std::move(g));
  return out;
}

double instance_iou(const Detection& d, const GroundTruthInstance& g, IouKind kind) {
  if (kind == IouKind::box) return box_iou(d.box, g.box);
  if (!d.mask) throw MissingMask("mask IoU matching requested but a detection on image " + std::to_string(d.image_id) +
                                 " has no mask");
  if (!g.mask) throw MissingMask("mask IoU matching requested but annotation " + std::to_string(g.annotation_id) +
                                 " has no mask");
  return mask_iou(*d.mask, *g.mask);
}

ImageMatch match_image(std::span<const Detection> dets, std::span<const GroundTruthInstance> gts, const MatchConfig& cfg) {
  ImageMatch m;
  if (!dets.empty()) m.image_id = dets.front().image_id;
  else if (!gts.empty()) m.image_id = gts.front().image_id;

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return canonical_less(dets[a], dets[b]); });

  std::vector<bool> taken(gts.size(), false);
  for (std::size_t di : order) {
    const Detection& d = dets[di];
    std::optional<std::size_t> best;
    double best_iou = 0.0;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (taken[gi] || gts[gi].class_id != d.class_id) continue;
      const double iou = instance_iou(d, gts[gi], cfg.kind);
      if (iou >= cfg.iou_threshold && (!best || iou > best_iou)) {
        best = gi;
        best_iou = iou;
      }
    }
    if (best) {
      taken[*best] = true;
      m.pairs.push_back({di, *best, best_iou});
    } else {
      m.false_positives.push_back(di);
    }
  }
  for (std::size_t gi = 0; gi < gts.size(); ++gi)
    if (!taken[gi]) m.false_negatives.push_back(gi);
  for (const auto& d : dets) m.detection_classes.push_back(d.class_id);
  for (const auto& g : gts) m.ground_truth_classes.push_back(g.class_id);
  return m;
}

MatchResult match_detections(const DetectionsByImage& dets, const GroundTruthByImage& gts, const MatchConfig& cfg,
                             int threads) {
  std::set<ImageId> ids;
  for (const auto& [id, _] : dets) ids.insert(id);
  for (const auto& [id, _] : gts) ids.insert(id);
  const std::vector<ImageId> ordered(ids.begin(), ids.end());

  MatchResult r;
  r.iou_threshold = cfg.iou_threshold;
  r.kind = cfg.kind;
  r.images.resize(ordered.size());
  static const std::vector<Detection> no_dets;
  static const std::vector<GroundTruthInstance> no_gts;
  parallel_for(ordered.size(), threads, [&](std::size_t i) {
    const auto d = dets.find(ordered[i]);
    const auto g = gts.find(ordered[i]);
    r.images[i] = match_image(d == dets.end() ? no_dets : d->second, g == gts.end() ? no_gts : g->second, cfg);
    r.images[i].image_id = ordered[i];
  });
  return r;
}

double Counts::precision() const { return tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp); }
double Counts::recall() const { return tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn); }
double Counts::f1() const {
  const double p = precision(), r = recall();
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

EvalReport f1_score(const MatchResult& match) {
  EvalReport rep;
  rep.match_iou = match.iou_threshold;
  rep.match_kind = match.kind;
  for (const auto& im : match.images) {
    for (const auto& p : im.pairs) {
      ++rep.counts.tp;
      ++rep.per_class[im.detection_classes[p.detection]].tp;
    }
    for (std::size_t d : im.false_positives) {
      ++rep.counts.fp;
      ++rep.per_class[im.detection_classes[d]].fp;
    }
    for (std::size_t g : im.false_negatives) {
      ++rep.counts.fn;
      ++rep.per_class[im.ground_truth_classes[g]].fn;
    }
  }
  rep.precision = rep.counts.precision();
  rep.recall = rep.counts.recall();
  rep.f1 = rep.counts.f1();
  return rep;
}

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back((50 + 5 * k) / 100.0);
  return t;
}

std::vector<double> default_sweep_grid() { return coco_iou_thresholds(); }

namespace {

void require_masks(const DetectionsByImage& dets, const GroundTruthByImage& gts) {
  for (const auto& [id, list] : dets)
    for (const auto& d : list)
      if (!d.mask) throw MissingMask("seg-mAP needs masks but a detection on image " + std::to_string(id) + " has none");
  for (const auto& [id, list] : gts)
    for (const auto& g : list)
      if (!g.mask) throw MissingMask("seg-mAP needs masks but annotation " + std::to_string(g.annotation_id) + " has none");
}

}  // namespace

double average_precision(const DetectionsByImage& dets, const GroundTruthByImage& gts, int class_id,
                         double iou_threshold) {
  struct Scored {
    double score;
    bool tp;
  };
  std::vector<Scored> scored;
  std::size_t npos = 0;
  std::set<ImageId> ids;
  for (const auto& [id, _] : dets) ids.insert(id);
  for (const auto& [id, _] : gts) ids.insert(id);
  const MatchConfig cfg{iou_threshold, IouKind::mask};

  for (ImageId id : ids) {
    std::vector<Detection> d;
    std::vector<GroundTruthInstance> g;
    if (auto it = dets.find(id); it != dets.end())
      std::copy_if(it->second.begin(), it->second.end(), std::back_inserter(d),
                   [&](const Detection& x) { return x.class_id == class_id; });
    if (auto it = gts.find(id); it != gts.end())
      std::copy_if(it->second.begin(), it->second.end(), std::back_inserter(g),
                   [&](const GroundTruthInstance& x) { return x.class_id == class_id; });
    npos += g.size();
    if (d.empty()) continue;
    const ImageMatch m = match_image(d, g, cfg);
    std::vector<bool> is_tp(d.size(), false);
    for (const auto& p : m.pairs) is_tp[p.detection] = true;
    // Per-image canonical order, then a stable global sort by score.
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return canonical_less(d[a], d[b]); });
    for (std::size_t i : order) scored.push_back({d[i].score, is_tp[i]});
  }
  if (npos == 0) return 0.0;
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });

  const std::size_t n = scored.size();
  std::vector<double> recall(n), precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (scored[i].tp) ++tp;
    recall[i] = double(tp) / double(npos);
    precision[i] = double(tp) / double(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double sum = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

double seg_map(const DetectionsByImage& dets, const GroundTruthByImage& gts) {
  require_masks(dets, gts);
  std::set<int> classes;
  for (const auto& [_, list] : gts)
    for (const auto& g : list) classes.insert(g.class_id);
  if (classes.empty()) return 0.0;
  const std::vector<double> thresholds = coco_iou_thresholds();
  double total = 0.0;
  for (int c : classes) {
    double class_sum = 0.0;
    for (double t : thresholds) class_sum += average_precision(dets, gts, c, t);
    total += class_sum / double(thresholds.size());
  }
  return total / double(classes.size());
}

EvalReport evaluate(const DetectionsByImage& dets, const GroundTruthByImage& gts, const MatchConfig& cfg, int threads) {
  return f1_score(match_detections(dets, gts, cfg, threads));
}

DetectionsByImage postprocess_all(const DetectionsByImage& raw, const PostProcessConfig& cfg, IouKind nms_kind,
                                  int threads, StageCounts* totals) {
  cfg.validate();
  std::vector<ImageId> ids;
  std::vector<const std::vector<Detection>*> inputs;
  for (const auto& [id, list] : raw) {
    ids.push_back(id);
    inputs.push_back(&list);
  }
  std::vector<PipelineResult> results(ids.size());
  parallel_for(ids.size(), threads,
               [&](std::size_t i) { results[i] = run_pipeline_counted(*inputs[i], cfg, nms_kind); });
  DetectionsByImage out;
  StageCounts sum;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    sum += results[i].counts;
    out[ids[i]] = std::move(results[i].detections);
  }
  if (totals) *totals = sum;
  return out;
}

std::vector<SweepRow> threshold_sweep(const DetectionsByImage& raw, const GroundTruthByImage& gts,
                                      const PostProcessConfig& base, std::span<const double> thresholds,
                                      const MatchConfig& match, IouKind nms_kind, int threads) {
  std::vector<SweepRow> rows;
  rows.reserve(thresholds.size());
  for (double t : thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw InputError("sweep thresholds must lie in (0, 1]");
    PostProcessConfig cfg = base;
    cfg.nms_iou = t;
    const EvalReport rep = evaluate(postprocess_all(raw, cfg, nms_kind, threads), gts, match, threads);
    rows.push_back({t, rep.f1, rep.counts});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Report formats

std::string report_to_json(const EvalReport& r) {
  using ordered_json = nlohmann::ordered_json;
  auto counts_json = [](const Counts& c) {
    ordered_json j;
    j["tp"] = c.tp;
    j["fp"] = c.fp;
    j["fn"] = c.fn;
    j["precision"] = c.precision();
    j["recall"] = c.recall();
    j["f1"] = c.f1();
    return j;
  };
  ordered_json j;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["tp"] = r.counts.tp;
  j["fp"] = r.counts.fp;
  j["fn"] = r.counts.fn;
  j["match_iou"] = r.match_iou;
  j["match_kind"] = std::string(to_string(r.match_kind));
  j["per_class"] = ordered_json::array();
  for (const auto& [cls, c] : r.per_class) {
    ordered_json row;
    row["class_id"] = cls;
    row.update(counts_json(c));
    j["per_class"].push_back(std::move(row));
  }
  j["seg_map"] = r.seg_map ? ordered_json(*r.seg_map) : ordered_json(nullptr);
  j["sweep"] = ordered_json::array();
  for (const auto& s : r.sweep) {
    ordered_json row;
    row["nms_iou"] = s.nms_iou;
    row["f1"] = s.f1;
    row["tp"] = s.counts.tp;
    row["fp"] = s.counts.fp;
    row["fn"] = s.counts.fn;
    j["sweep"].push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

std::string report_to_table(const EvalReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "matching: %s IoU >= %.2f\n", std::string(to_string(r.match_kind)).c_str(),
                r.match_iou);
  out += line;
  out += "class        tp      fp      fn  precision  recall      f1\n";
  auto row = [&](const std::string& name, const Counts& c) {
    std::snprintf(line, sizeof line, "%-8s %6zu  %6zu  %6zu  %9.4f  %6.4f  %6.4f\n", name.c_str(), c.tp, c.fp, c.fn,
                  c.precision(), c.recall(), c.f1());
    out += line;
  };
  for (const auto& [cls, c] : r.per_class) row(std::to_string(cls), c);
  row("all", r.counts);
  if (r.seg_map) {
    std::snprintf(line, sizeof line, "seg-mAP@[.50:.95]: %.4f\n", *r.seg_map);
    out += line;
  }
  return out;
}

std::string sweep_to_csv(std::span<const SweepRow> rows) {
  std::string out = "nms_iou,f1,tp,fp,fn\n";
  char line[128];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%.2f,%.6f,%zu,%zu,%zu\n", r.nms_iou, r.f1, r.counts.tp, r.counts.fp, r.counts.fn);
    out += line;
  }
  return out;
}

}  // namespace stenokit
