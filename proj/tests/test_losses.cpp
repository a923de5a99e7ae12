#include "stenokit/losses.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace stenokit;

namespace {

using Sample = RoiSample<double>;

// Long-double reference, written out elementwise.
long double bce_oracle(const MaskGrid<double>& p, const MaskGrid<double>& y) {
  long double acc = 0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    long double q = std::clamp<long double>(p(k), 1e-12L, 1.0L - 1e-12L);
    acc += -(y(k) * std::log(q) + (1 - y(k)) * std::log(1 - q));
  }
  return acc / p.size();
}

Sample random_sample(std::mt19937_64& rng, int classes, int mh, int mw, bool positive) {
  std::uniform_real_distribution<double> u(0.01, 1.0), c(-20, 20);
  Sample s;
  s.class_probs.resize(classes);
  for (int k = 0; k < classes; ++k) s.class_probs[k] = u(rng);
  s.class_probs /= s.class_probs.sum();
  s.true_class = int(rng() % classes);
  s.is_positive = positive;
  for (int k = 0; k < 4; ++k) s.predicted_box[k] = c(rng), s.true_box[k] = c(rng);
  if (positive) {
    s.predicted_mask = MaskGrid<double>(mh, mw);
    s.target_mask = MaskGrid<double>(mh, mw);
    for (Eigen::Index k = 0; k < s.predicted_mask.size(); ++k) {
      s.predicted_mask(k) = u(rng) * 0.98;
      s.target_mask(k) = double(rng() % 2);
    }
  }
  return s;
}

}  // namespace

TEST_CASE("cls_loss examples") {
  ProbVector<double> p(3);
  p << 0.2, 0.5, 0.3;
  CHECK(cls_loss(p, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(cls_loss(p, 2) == doctest::Approx(1.203973).epsilon(1e-6));
  p << 0.0, 1.0, 0.0;
  CHECK(cls_loss(p, 1) == 0.0);
  CHECK(std::isfinite(cls_loss(p, 0)));
  CHECK(cls_loss(p, 0) == doctest::Approx(-std::log(1e-12)));
  CHECK_THROWS_AS(cls_loss(p, 3), IndexOutOfRange);

  ProbVector<double> onehot(3);
  onehot << 0, 0, 1;
  p << 0.2, 0.5, 0.3;
  CHECK(cls_loss_soft(p, onehot) == doctest::Approx(cls_loss(p, 2)));
}

TEST_CASE("box_loss example") {
  BoxVector<double> a, b;
  a << 10, 20, 30, 40;
  b << 12, 18, 33, 43;
  CHECK(box_loss(a, b) == 10.0);
  CHECK(box_loss(a, a) == 0.0);
  CHECK(box_loss(a, b) == box_loss(b, a));
}

TEST_CASE("mask_loss against a long-double oracle") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    const int n = 1 + int(rng() % 5);
    std::vector<MaskGrid<double>> p, y;
    long double expect = 0;
    for (int i = 0; i < n; ++i) {
      const Sample s = random_sample(rng, 2, 1 + int(rng() % 14), 1 + int(rng() % 14), true);
      p.push_back(s.predicted_mask);
      y.push_back(s.target_mask);
      expect += bce_oracle(s.predicted_mask, s.target_mask);
    }
    expect /= n;
    CHECK(std::abs(mask_loss<double>(p, y) - double(expect)) <= 1e-9);
  }

  // Saturated predictions stay finite.
  std::vector<MaskGrid<double>> p{MaskGrid<double>::Constant(2, 2, 0.0)}, y{MaskGrid<double>::Constant(2, 2, 1.0)};
  CHECK(mask_loss<double>(p, y) == doctest::Approx(-std::log(1e-12)));
  std::vector<MaskGrid<double>> none;
  CHECK_THROWS_AS(mask_loss<double>(none, none), EmptyBatch);
  std::vector<MaskGrid<double>> odd{MaskGrid<double>::Zero(2, 3)};
  CHECK_THROWS_AS(mask_loss<double>(odd, y), ShapeMismatch);
}

TEST_CASE("total loss: averaging and gains") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 40; ++t) {
    std::vector<Sample> batch;
    const int n = 1 + int(rng() % 8);
    for (int i = 0; i < n; ++i) batch.push_back(random_sample(rng, 3, 5, 5, rng() % 2 == 0));

    long double cls = 0, box = 0, mask = 0;
    int pos = 0;
    for (const auto& s : batch) {
      cls += -std::log((long double)s.class_probs[s.true_class]);
      if (!s.is_positive) continue;
      ++pos;
      for (int k = 0; k < 4; ++k) box += std::abs((long double)s.predicted_box[k] - s.true_box[k]);
      mask += bce_oracle(s.predicted_mask, s.target_mask);
    }
    cls /= n;
    if (pos) box /= pos, mask /= pos;

    const auto unit = total_loss<double>(batch);
    CHECK(std::abs(unit.cls - double(cls)) <= 1e-9);
    CHECK(std::abs(unit.box - double(box)) <= 1e-9);
    CHECK(std::abs(unit.mask - double(mask)) <= 1e-9);
    CHECK(std::abs(unit.total - double(cls + box + mask)) <= 1e-9);

    // Linear in each gain.
    const LossGains g{0.3 + t * 0.1, 2.5, 0.01 * t};
    const auto w = total_loss<double>(batch, g);
    CHECK(std::abs(w.total - (g.cls * unit.cls + g.box * unit.box + g.mask * unit.mask)) <= 1e-9);

    // Order of the RoIs does not matter.
    std::shuffle(batch.begin(), batch.end(), rng);
    CHECK(std::abs(total_loss<double>(batch).total - unit.total) <= 1e-9);
  }
}

TEST_CASE("total loss with no positive RoIs") {
  std::mt19937_64 rng(2);
  std::vector<Sample> batch{random_sample(rng, 4, 0, 0, false), random_sample(rng, 4, 0, 0, false)};
  const auto l = total_loss<double>(batch);
  CHECK(l.box == 0.0);
  CHECK(l.mask == 0.0);
  CHECK(l.total == l.cls);
  CHECK_THROWS_AS(total_loss<double>(std::span<const Sample>{}), EmptyBatch);
}

TEST_CASE("malformed samples are rejected") {
  std::mt19937_64 rng(6);
  Sample s = random_sample(rng, 3, 4, 4, true);
  Sample bad = s;
  bad.class_probs[0] += 0.5;
  CHECK_THROWS_AS(total_loss<double>(std::vector<Sample>{bad}), InputError);
  bad = s;
  bad.target_mask(0, 0) = 0.5;
  CHECK_THROWS_AS(total_loss<double>(std::vector<Sample>{bad}), InputError);
  bad = s;
  bad.target_mask = MaskGrid<double>::Zero(3, 4);
  CHECK_THROWS_AS(total_loss<double>(std::vector<Sample>{bad}), ShapeMismatch);
  bad = s;
  bad.true_class = 7;
  CHECK_THROWS_AS(total_loss<double>(std::vector<Sample>{bad}), IndexOutOfRange);
}

TEST_CASE("float and double instantiations agree") {
  std::mt19937_64 rng(30);
  const Sample s = random_sample(rng, 3, 6, 6, true);
  RoiSample<float> f;
  f.class_probs = s.class_probs.cast<float>();
  f.true_class = s.true_class;
  f.predicted_box = s.predicted_box.cast<float>();
  f.true_box = s.true_box.cast<float>();
  f.predicted_mask = s.predicted_mask.cast<float>();
  f.target_mask = s.target_mask.cast<float>();
  f.is_positive = true;
  const double d = total_loss<double>(std::vector<Sample>{s}).total;
  CHECK(std::abs(double(total_loss<float>(std::vector<RoiSample<float>>{f}).total) - d) <= 1e-4 * d);
}

TEST_CASE("assign_positive") {
  const std::vector<BBox> gt{BBox(0, 0, 1, 1), BBox(10, 10, 20, 20)};
  // IoU exactly 0.5 counts as positive.
  const auto half = assign_positive(BBox(0, 0, 2, 1), gt);
  CHECK(half.positive);
  CHECK(half.matched == std::size_t{0});
  CHECK(half.best_iou == 0.5);

  const auto miss = assign_positive(BBox(0, 0, 3, 1), gt);
  CHECK_FALSE(miss.positive);
  CHECK(miss.best_iou == doctest::Approx(1.0 / 3.0));

  const std::vector<BBox> twins{BBox(0, 0, 4, 4), BBox(0, 0, 4, 4)};
  CHECK(assign_positive(BBox(0, 0, 4, 4), twins).matched == std::size_t{0});
  CHECK_FALSE(assign_positive(BBox(0, 0, 4, 4), std::span<const BBox>{}).positive);
}

TEST_CASE("mask_target samples pixel centres") {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 60; ++t) {
    const int h = 8 + int(rng() % 30), w = 8 + int(rng() % 30);
    const Bitmap gt = oracle::random_bitmap(rng, h, w, 0.4);
    std::uniform_real_distribution<double> ux(0, w - 1), uy(0, h - 1);
    const double x1 = ux(rng), y1 = uy(rng);
    const BBox roi(x1, y1, x1 + 1 + ux(rng) / 2, y1 + 1 + uy(rng) / 2);
    const int oh = 1 + int(rng() % 14), ow = 1 + int(rng() % 14);
    const Bitmap got = mask_target(roi, RleMask::encode(gt), oh, ow);
    REQUIRE(got.rows() == oh);
    REQUIRE(got.cols() == ow);
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        const double x = roi.x1() + (j + 0.5) * roi.width() / ow;
        const double y = roi.y1() + (i + 0.5) * roi.height() / oh;
        const long px = long(std::floor(x)), py = long(std::floor(y));
        const int expect = (px >= 0 && py >= 0 && px < w && py < h) ? gt(py, px) : 0;
        CHECK(int(got(i, j)) == expect);
      }
    }
  }

  // Checkerboard at native resolution is reproduced exactly.
  Bitmap board(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) board(i, j) = (i + j) % 2;
  CHECK((mask_target(BBox(0, 0, 6, 6), RleMask::encode(board), 6, 6) == board).all());
}
