#include "stenokit/synth.hpp"

#include "stenokit/anchors.hpp"
#include "stenokit/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace stenokit {

void SynthConfig::validate() const {
  std::vector<std::string> errs;
  auto rate = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) errs.push_back(std::string(name) + " must lie in [0, 1]");
  };
  if (num_images < 0) errs.push_back("num_images must be >= 0");
  if (image_size <= 0) errs.push_back("image_size must be positive");
  if (min_instances < 0 || max_instances < min_instances) errs.push_back("need 0 <= min_instances <= max_instances");
  if (num_classes < 1) errs.push_back("num_classes must be >= 1");
  if (!(box_jitter >= 0.0)) errs.push_back("box_jitter must be >= 0");
  rate(score_low, "score_low");
  rate(score_high, "score_high");
  if (score_low > score_high) errs.push_back("score_low must not exceed score_high");
  rate(duplicate_rate, "duplicate_rate");
  rate(duplicate_shift, "duplicate_shift");
  rate(dropout_rate, "dropout_rate");
  rate(false_positive_rate, "false_positive_rate");
  rate(low_score_rate, "low_score_rate");
  if (!errs.empty()) throw ValidationError(std::move(errs));
}

std::string_view to_string(PlantedRole role) {
  switch (role) {
    case PlantedRole::true_positive: return "true_positive";
    case PlantedRole::duplicate: return "duplicate";
    case PlantedRole::spurious: return "spurious";
    case PlantedRole::low_score: return "low_score";
  }
  return "unknown";
}

namespace {

// Portable draws from the standardized mt19937_64 stream; the standard
// distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool chance(double p) { return uniform() < p; }
  int integer(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(engine_() % span);
  }

 private:
  std::mt19937_64 engine_;
};

double round2(double v) { return std::round(v * 100.0) / 100.0; }

Polygon blob(Rng& rng, double cx, double cy, double rx, double ry) {
  const int k = rng.integer(5, 8);
  const double step = 2.0 * std::numbers::pi / k;
  const double phase = rng.uniform(0.0, step);
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const double a = phase + step * (i + rng.uniform(-0.3, 0.3));
    pts.push_back({round2(cx + rx * std::cos(a)), round2(cy + ry * std::sin(a))});
  }
  return Polygon(std::move(pts));
}

Polygon translated(const Polygon& p, double dx, double dy) {
  std::vector<Point> pts = p.vertices();
  for (auto& v : pts) v = {round2(v.x + dx), round2(v.y + dy)};
  return Polygon(std::move(pts));
}

struct Planted {
  Detection det;
  PlantedRole role;
  int object = -1;  // index of the object for true positives and duplicates
  int source = -1;  // for duplicates: index of the true-positive item
};

}  // namespace

SynthOutput generate(const SynthConfig& cfg, const PostProcessConfig& pipeline, const MatchConfig& match) {
  cfg.validate();
  pipeline.validate();
  Rng rng(cfg.seed);
  SynthOutput out;
  out.key.pipeline = pipeline;
  out.key.match = match;

  for (int c = 1; c <= cfg.num_classes; ++c) {
    out.ground_truth.categories.push_back({c, cfg.num_classes == 1 ? "stenosis" : "class_" + std::to_string(c)});
  }

  const int size = cfg.image_size;
  const int grid = std::max(1, static_cast<int>(std::ceil(std::sqrt(double(cfg.max_instances + 2)))));
  const double cell = double(size) / grid;
  std::int64_t next_ann = 1;

  for (int img = 0; img < cfg.num_images; ++img) {
    const ImageId image_id = img + 1;
    char name[32];
    std::snprintf(name, sizeof name, "synth_%06d.png", img + 1);
    out.ground_truth.images.push_back({image_id, size, size, name});

    std::vector<int> cells(static_cast<std::size_t>(grid * grid));
    for (int i = 0; i < grid * grid; ++i) cells[static_cast<std::size_t>(i)] = i;
    for (std::size_t i = cells.size(); i > 1; --i) {
      std::swap(cells[i - 1], cells[static_cast<std::size_t>(rng.integer(0, int(i) - 1))]);
    }
    std::size_t next_cell = 0;
    auto cell_blob = [&](int cell_index) {
      const double cx = (cell_index % grid + 0.5) * cell + rng.uniform(-0.05, 0.05) * cell;
      const double cy = (cell_index / grid + 0.5) * cell + rng.uniform(-0.05, 0.05) * cell;
      const double rx = rng.uniform(0.2, 0.3) * cell;
      const double ry = rng.uniform(0.2, 0.3) * cell;
      return blob(rng, cx, cy, rx, ry);
    };

    std::vector<GroundTruthInstance> objects;
    std::vector<Planted> planted;
    const int n = rng.integer(cfg.min_instances, cfg.max_instances);
    for (int k = 0; k < n && next_cell < cells.size(); ++k) {
      const Polygon poly = cell_blob(cells[next_cell++]);
      const int cls = rng.integer(1, cfg.num_classes);
      const RleMask mask = polygon_to_mask(poly, size, size).mask;
      if (mask.area() == 0) continue;
      const BBox bounds = clip_box(poly.bounds(), size, size);

      Annotation ann;
      ann.id = next_ann++;
      ann.image_id = image_id;
      ann.category_id = cls;
      ann.segmentation = std::vector<Polygon>{poly};
      ann.bbox = bounds.to_xywh();
      ann.area = double(mask.area());
      out.ground_truth.annotations.push_back(ann);
      const int object_index = int(objects.size());
      objects.push_back(GroundTruthInstance{ann.id, image_id, cls, bounds, mask});

      if (rng.chance(cfg.dropout_rate)) {
        ++out.key.dropped;
        continue;
      }
      const BBox pb = poly.bounds();
      const double dx = rng.uniform(-cfg.box_jitter, cfg.box_jitter) * pb.width();
      const double dy = rng.uniform(-cfg.box_jitter, cfg.box_jitter) * pb.height();
      const Polygon tp_poly = translated(poly, dx, dy);
      Detection tp;
      tp.image_id = image_id;
      tp.class_id = cls;
      tp.score = rng.uniform(cfg.score_low, cfg.score_high);
      tp.mask = polygon_to_mask(tp_poly, size, size).mask;
      tp.box = clip_box(tp_poly.bounds(), size, size);
      const int tp_index = int(planted.size());
      planted.push_back({tp, PlantedRole::true_positive, object_index, -1});

      if (rng.chance(cfg.duplicate_rate)) {
        const Polygon dup_poly = translated(tp_poly, cfg.duplicate_shift * pb.width(), 0.0);
        Detection dup = tp;
        dup.score = tp.score * rng.uniform(0.9, 0.999);
        dup.mask = polygon_to_mask(dup_poly, size, size).mask;
        dup.box = clip_box(dup_poly.bounds(), size, size);
        planted.push_back({dup, PlantedRole::duplicate, object_index, tp_index});
      }
    }

    auto background_det = [&](PlantedRole role, double lo, double hi) {
      if (next_cell >= cells.size()) return;
      const Polygon poly = cell_blob(cells[next_cell++]);
      Detection d;
      d.image_id = image_id;
      d.class_id = rng.integer(1, cfg.num_classes);
      d.score = rng.uniform(lo, hi);
      d.mask = polygon_to_mask(poly, size, size).mask;
      d.box = clip_box(poly.bounds(), size, size);
      planted.push_back({d, role, -1, -1});
    };
    if (rng.chance(cfg.false_positive_rate)) background_det(PlantedRole::spurious, cfg.score_low, cfg.score_high);
    if (rng.chance(cfg.low_score_rate)) background_det(PlantedRole::low_score, 0.3, 0.79);

    // Answer key: follow each planted detection through filter, NMS and cap
    // using only the planted structure.
    out.key.objects += objects.size();
    auto match_iou_of = [&](const Detection& d, const GroundTruthInstance& g) {
      return match.kind == IouKind::box ? box_iou(d.box, g.box) : mask_iou(*d.mask, *g.mask);
    };
    std::vector<bool> alive(planted.size());
    for (std::size_t i = 0; i < planted.size(); ++i) {
      alive[i] = planted[i].det.score >= pipeline.score_threshold;
      if (planted[i].role == PlantedRole::true_positive &&
          match_iou_of(planted[i].det, objects[std::size_t(planted[i].object)]) < match.iou_threshold) {
        out.key.within_tolerance = false;
      }
    }
    for (std::size_t i = 0; i < planted.size(); ++i) {
      const Planted& p = planted[i];
      if (p.role != PlantedRole::duplicate || !alive[i]) continue;
      const Detection& src = planted[std::size_t(p.source)].det;
      if (alive[std::size_t(p.source)] && box_iou(src.box, p.det.box) > pipeline.nms_iou) alive[i] = false;
    }
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < planted.size(); ++i)
      if (alive[i]) order.push_back(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return canonical_less(planted[a].det, planted[b].det); });
    if (order.size() > std::size_t(pipeline.max_detections)) order.resize(std::size_t(pipeline.max_detections));

    std::vector<bool> object_matched(objects.size(), false);
    for (std::size_t i : order) {
      const Planted& p = planted[i];
      if (p.object >= 0 && !object_matched[std::size_t(p.object)] &&
          match_iou_of(p.det, objects[std::size_t(p.object)]) >= match.iou_threshold) {
        object_matched[std::size_t(p.object)] = true;
        ++out.key.expected.tp;
      } else {
        ++out.key.expected.fp;
      }
    }
    out.key.expected.fn += static_cast<std::size_t>(std::count(object_matched.begin(), object_matched.end(), false));

    for (const auto& p : planted) {
      DetectionRecord r;
      r.image_id = image_id;
      r.category_id = p.det.class_id;
      r.score = p.det.score;
      r.bbox = p.det.box.to_xywh();
      r.segmentation = *p.det.mask;
      out.detections.records.push_back(std::move(r));
      out.key.roles.push_back(p.role);
    }
  }
  return out;
}

std::string manifest_json(const SynthConfig& cfg, const SynthAnswerKey& key) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  nlohmann::ordered_json c;
  c["num_images"] = cfg.num_images;
  c["image_size"] = cfg.image_size;
  c["min_instances"] = cfg.min_instances;
  c["max_instances"] = cfg.max_instances;
  c["num_classes"] = cfg.num_classes;
  c["box_jitter"] = cfg.box_jitter;
  c["score_low"] = cfg.score_low;
  c["score_high"] = cfg.score_high;
  c["duplicate_rate"] = cfg.duplicate_rate;
  c["duplicate_shift"] = cfg.duplicate_shift;
  c["dropout_rate"] = cfg.dropout_rate;
  c["false_positive_rate"] = cfg.false_positive_rate;
  c["low_score_rate"] = cfg.low_score_rate;
  j["config"] = std::move(c);
  nlohmann::ordered_json p;
  p["nms_iou"] = key.pipeline.nms_iou;
  p["score_threshold"] = key.pipeline.score_threshold;
  p["max_detections"] = key.pipeline.max_detections;
  p["match_iou"] = key.match.iou_threshold;
  p["match_kind"] = std::string(to_string(key.match.kind));
  j["planted_for"] = std::move(p);
  j["objects"] = key.objects;
  j["dropped"] = key.dropped;
  std::map<std::string, std::size_t> roles;
  for (auto r : key.roles) ++roles[std::string(to_string(r))];
  j["roles"] = roles;
  j["planted"] = {{"tp", key.expected.tp}, {"fp", key.expected.fp}, {"fn", key.expected.fn}};
  j["within_tolerance"] = key.within_tolerance;
  return j.dump(2) + "\n";
}

}  // namespace stenokit
