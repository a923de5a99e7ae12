#include "stenokit/anchors.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace stenokit;

namespace {

// Inverse of decode_deltas, written from the parameterization.
BoxDeltas encode_deltas(const BBox& anchor, const BBox& box) {
  return {(box.center_x() - anchor.center_x()) / anchor.width(), (box.center_y() - anchor.center_y()) / anchor.height(),
          std::log(box.width() / anchor.width()), std::log(box.height() / anchor.height())};
}

}  // namespace

TEST_CASE("default anchor configuration") {
  const AnchorConfig cfg;
  CHECK(cfg.sizes == std::vector<double>{4, 8, 16, 32, 64});
  CHECK(cfg.ratios == std::vector<double>{0.5, 1.0, 2.0});
  CHECK(generate_anchors(cfg, 1, 1, cfg.strides.front()).size() == 15);
}

TEST_CASE("anchor geometry") {
  AnchorConfig cfg;
  cfg.sizes = {8};
  cfg.ratios = {1.0};
  const auto a = generate_anchors(cfg, 1, 1, 4);
  REQUIRE(a.size() == 1);
  CHECK(a[0] == BBox(-2, -2, 6, 6));

  cfg.sizes = {16};
  cfg.ratios = {0.5};
  const BBox b = generate_anchors(cfg, 1, 1, 16).front();
  CHECK(b.width() == doctest::Approx(16 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(b.height() == doctest::Approx(16 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(std::abs(box_area(b) - 256.0) <= 1e-9);
}

TEST_CASE("anchor ordering is cell-major, then size, then ratio") {
  AnchorConfig cfg;
  cfg.sizes = {4, 8};
  cfg.ratios = {0.5, 2.0};
  const auto a = generate_anchors(cfg, 2, 3, 10);
  REQUIRE(a.size() == 2 * 3 * 2 * 2);
  // Fourth cell (row 1, col 0), second size, first ratio.
  const BBox& x = a[3 * 4 + 2];
  CHECK(x.center_x() == doctest::Approx(5.0));
  CHECK(x.center_y() == doctest::Approx(15.0));
  CHECK(box_area(x) == doctest::Approx(64.0));
  CHECK(x.height() / x.width() == doctest::Approx(0.5));
}

TEST_CASE("anchor count and shape properties on random configurations") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> size(1.0, 200.0), ratio(0.1, 10.0);
  for (int t = 0; t < 100; ++t) {
    AnchorConfig cfg;
    cfg.sizes.resize(1 + rng() % 5);
    cfg.ratios.resize(1 + rng() % 4);
    for (auto& s : cfg.sizes) s = size(rng);
    for (auto& r : cfg.ratios) r = ratio(rng);
    cfg.strides = {int(1 + rng() % 32)};
    const int h = 1 + int(rng() % 6), w = 1 + int(rng() % 6);
    const auto anchors = generate_anchors(cfg, h, w, cfg.strides[0]);
    REQUIRE(anchors.size() == std::size_t(h * w) * cfg.sizes.size() * cfg.ratios.size());
    std::size_t k = 0;
    for (int cell = 0; cell < h * w; ++cell) {
      for (double s : cfg.sizes) {
        for (double r : cfg.ratios) {
          const BBox& b = anchors[k++];
          CHECK(std::abs(b.height() / b.width() - r) <= 1e-9);
          CHECK(std::abs(box_area(b) - s * s) <= 1e-6 * std::max(1.0, s * s / 1e4));
        }
      }
    }
  }
}

TEST_CASE("round-robin size assignment across pyramid levels") {
  AnchorConfig cfg;
  cfg.strides = {4, 8, 16, 32, 64};
  CHECK(sizes_for_stride(cfg, 4) == std::vector<double>{4});
  CHECK(sizes_for_stride(cfg, 64) == std::vector<double>{64});
  CHECK(generate_anchors(cfg, 2, 2, 16).size() == 4 * 3);
  cfg.strides = {4, 8};
  CHECK(sizes_for_stride(cfg, 4) == std::vector<double>{4, 16, 64});
  CHECK(sizes_for_stride(cfg, 8) == std::vector<double>{8, 32});
  CHECK_THROWS_AS(sizes_for_stride(cfg, 16), std::invalid_argument);
  cfg.ratios = {};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("decode_deltas") {
  const BBox a(0, 0, 10, 10);
  CHECK(decode_deltas(a, {0, 0, 0, 0}) == a);
  const BBox d = decode_deltas(a, {0, 0, std::log(2.0), 0});
  CHECK(d.x1() == doctest::Approx(-5.0));
  CHECK(d.x2() == doctest::Approx(15.0));
  CHECK(d.y1() == 0.0);
  CHECK(d.y2() == 10.0);

  // Large dw is clamped at log(1000/16) before exp.
  const BBox big = decode_deltas(a, {0, 0, 50.0, 0});
  CHECK(big.width() == doctest::Approx(10.0 * 1000.0 / 16.0));
  CHECK(std::isfinite(big.x2()));
  CHECK_THROWS(decode_deltas(BBox(1, 1, 1, 5), {0, 0, 0, 0}));
}

TEST_CASE("decode_deltas inverts the encoder") {
  std::mt19937_64 rng(8);
  // Extents within 2..80 keep every log-ratio below the clamp.
  std::uniform_real_distribution<double> pos(-100, 100), ext(2.0, 80);
  for (int t = 0; t < 1000; ++t) {
    const double ax = pos(rng), ay = pos(rng), bx = pos(rng), by = pos(rng);
    const BBox anchor(ax, ay, ax + ext(rng), ay + ext(rng));
    const BBox box(bx, by, bx + ext(rng), by + ext(rng));
    const BBox back = decode_deltas(anchor, encode_deltas(anchor, box));
    CHECK(std::abs(back.x1() - box.x1()) <= 1e-9);
    CHECK(std::abs(back.y1() - box.y1()) <= 1e-9);
    CHECK(std::abs(back.x2() - box.x2()) <= 1e-9);
    CHECK(std::abs(back.y2() - box.y2()) <= 1e-9);
  }
}

TEST_CASE("clip_boxes") {
  const std::vector<BBox> boxes{BBox(10, 10, 20, 30), BBox(-4, -4, 600, 600), BBox(700, 10, 800, 20)};
  const auto c = clip_boxes(boxes, 512, 512);
  CHECK(c[0] == boxes[0]);
  CHECK(c[1] == BBox(0, 0, 512, 512));
  CHECK(c[2] == BBox(512, 10, 512, 20));
  CHECK(box_area(c[2]) == 0.0);
}
