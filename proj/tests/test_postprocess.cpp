#include "stenokit/errors.hpp"
#include "stenokit/postprocess.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace stenokit;

namespace {

Detection det(double x1, double y1, double x2, double y2, double score, int cls = 0) {
  Detection d;
  d.box = BBox(x1, y1, x2, y2);
  d.score = score;
  d.class_id = cls;
  return d;
}

std::vector<Detection> random_dets(std::mt19937_64& rng, int n, int classes) {
  std::uniform_real_distribution<double> pos(0, 60), ext(2, 30), score(0, 1);
  std::vector<Detection> out;
  for (int i = 0; i < n; ++i) {
    const double x = pos(rng), y = pos(rng);
    // Coarse scores so ties actually happen.
    const double s = std::round(score(rng) * 20) / 20;
    out.push_back(det(x, y, x + ext(rng), y + ext(rng), s, int(rng() % classes)));
  }
  return out;
}

}  // namespace

TEST_CASE("nms examples") {
  const std::vector<Detection> d{det(0, 0, 10, 10, 0.9), det(1, 0, 11, 10, 0.8), det(50, 50, 60, 60, 0.7)};
  // IoU of the first two is 90/110.
  CHECK(nms(d, 0.5).size() == 2);
  CHECK(nms(d, 0.9).size() == 3);
  CHECK(nms(d, 0.5)[0] == d[0]);

  // Other classes never suppress.
  std::vector<Detection> mixed = d;
  mixed[1].class_id = 1;
  CHECK(nms(mixed, 0.1).size() == 3);

  // Strict inequality: IoU exactly at the threshold survives.
  const std::vector<Detection> half{det(0, 0, 2, 1, 0.9), det(0, 0, 1, 1, 0.8)};
  CHECK(nms(half, 0.5).size() == 2);
  CHECK(nms(half, 0.49).size() == 1);
  CHECK(nms(std::vector<Detection>{}, 0.5).empty());
}

TEST_CASE("nms matches the reference on random sets") {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 200; ++t) {
    const int n = int(rng() % 201);
    const auto dets = random_dets(rng, n, 1 + int(rng() % 3));
    const double thr = 0.05 + 0.9 * double(rng() % 100) / 100.0;
    const auto kept = nms(dets, thr);
    const auto ref = oracle::reference_nms(dets, thr);
    REQUIRE(kept.size() == ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) CHECK(kept[k] == dets[ref[k]]);

    // Idempotent, and no kept pair of one class overlaps above thr.
    CHECK(nms(kept, thr) == kept);
    for (std::size_t a = 0; a < kept.size(); ++a)
      for (std::size_t b = a + 1; b < kept.size(); ++b)
        if (kept[a].class_id == kept[b].class_id) CHECK(box_iou(kept[a].box, kept[b].box) <= thr);
  }
}

TEST_CASE("mask nms needs masks") {
  std::vector<Detection> d{det(0, 0, 4, 4, 0.9), det(0, 0, 4, 4, 0.8)};
  CHECK_THROWS_AS(nms(d, 0.5, IouKind::mask), MissingMask);
  Bitmap a = Bitmap::Zero(8, 8), b = Bitmap::Zero(8, 8);
  a.block(0, 0, 4, 4).setOnes();
  b.block(4, 4, 4, 4).setOnes();
  d[0].mask = RleMask::encode(a);
  d[1].mask = RleMask::encode(b);
  // Boxes coincide but the masks are disjoint.
  CHECK(nms(d, 0.5, IouKind::box).size() == 1);
  CHECK(nms(d, 0.5, IouKind::mask).size() == 2);
  CHECK(parse_iou_kind("mask") == IouKind::mask);
  CHECK(to_string(IouKind::box) == "box");
  CHECK_THROWS_AS(parse_iou_kind("segm"), InputError);
}

TEST_CASE("confidence filter and top_k") {
  const std::vector<Detection> d{det(0, 0, 1, 1, 0.79), det(0, 0, 1, 1, 0.8), det(0, 0, 1, 1, 0.95),
                                 det(0, 0, 1, 1, 0.8, 1)};
  const auto f = confidence_filter(d, 0.8);
  REQUIRE(f.size() == 3);
  CHECK(f[0] == d[1]);
  CHECK(f[2] == d[3]);

  const auto top = top_k(d, 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0] == d[2]);
  CHECK(top[1] == d[1]);  // tie with d[3] keeps input order
  CHECK(top_k(d, 10).size() == 4);
  CHECK(top_k(d, 0).empty());
}

TEST_CASE("canonical order is a strict weak total order") {
  std::mt19937_64 rng(9);
  const auto dets = random_dets(rng, 80, 3);
  std::vector<Detection> shuffled = dets;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(canonical_order(dets) == canonical_order(shuffled));
  for (const auto& a : dets) {
    CHECK_FALSE(canonical_less(a, a));
    for (const auto& b : dets)
      if (!(a == b)) CHECK(canonical_less(a, b) != canonical_less(b, a));
  }
}

TEST_CASE("pipeline order and stage counts") {
  PostProcessConfig cfg;
  cfg.nms_iou = 0.5;
  cfg.score_threshold = 0.8;
  cfg.max_detections = 2;
  // The 0.85 box is suppressed by the 0.9 one; the low score one would
  // otherwise survive NMS and the cap.
  const std::vector<Detection> d{det(0, 0, 10, 10, 0.85), det(0, 0, 10, 9, 0.9), det(30, 30, 40, 40, 0.5),
                                 det(60, 60, 70, 70, 0.8), det(80, 80, 90, 90, 0.81)};
  const auto r = run_pipeline_counted(d, cfg);
  CHECK(r.counts.input == 5);
  CHECK(r.counts.after_filter == 4);
  CHECK(r.counts.after_nms == 3);
  CHECK(r.counts.after_cap == 2);
  REQUIRE(r.detections.size() == 2);
  CHECK(r.detections[0] == d[1]);
  CHECK(r.detections[1] == d[4]);

  // Composition of the individual stages.
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    auto in = random_dets(rng, int(rng() % 40), 2);
    const auto manual = top_k(nms(confidence_filter(canonical_order(in), cfg.score_threshold), cfg.nms_iou),
                              cfg.max_detections);
    std::shuffle(in.begin(), in.end(), rng);
    CHECK(run_pipeline(in, cfg) == manual);
  }
}

TEST_CASE("config validation") {
  PostProcessConfig cfg;
  CHECK(cfg.nms_iou == 0.95);
  CHECK(cfg.score_threshold == 0.8);
  CHECK(cfg.max_detections == 3);
  CHECK(cfg.rpn_nms_iou == 0.7);
  CHECK_NOTHROW(cfg.validate());
  cfg.nms_iou = 1.5;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = {};
  cfg.max_detections = -1;
  CHECK_THROWS_AS(cfg.validate(), InputError);
}
