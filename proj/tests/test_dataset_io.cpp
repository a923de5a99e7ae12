#include "stenokit/dataset_io.hpp"
#include "stenokit/errors.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>

using namespace stenokit;

namespace {

const char* kSmallGt = R"({
  "images": [{"id": 1, "width": 20, "height": 10, "file_name": "a.png"},
             {"id": 2, "width": 20, "height": 10}],
  "categories": [{"id": 1, "name": "stenosis"}],
  "annotations": [
    {"id": 5, "image_id": 1, "category_id": 1, "bbox": [2, 2, 4, 3], "area": 12,
     "segmentation": [[2, 2, 6, 2, 6, 5, 2, 5]]},
    {"id": 6, "image_id": 2, "category_id": 1, "bbox": [0, 0, 2, 2], "area": 4,
     "segmentation": {"size": [10, 20], "counts": [0, 2, 8, 2, 188]}}
  ]
})";

GroundTruthSet many_images(std::size_t n) {
  GroundTruthSet gt;
  gt.categories.push_back({1, "stenosis"});
  for (std::size_t i = 0; i < n; ++i) {
    gt.images.push_back({ImageId(1000 + i * 7), 32, 32, ""});
    Annotation a;
    a.id = std::int64_t(i + 1);
    a.image_id = ImageId(1000 + i * 7);
    a.category_id = 1;
    a.bbox = {1, 1, 4, 4};
    a.area = 16;
    a.segmentation = std::vector<Polygon>{Polygon({{1, 1}, {5, 1}, {5, 5}, {1, 5}})};
    gt.annotations.push_back(a);
  }
  return gt;
}

std::vector<std::string> violations_of(std::string_view text) {
  try {
    parse_ground_truth(text);
  } catch (const ValidationError& e) {
    return e.violations();
  }
  return {};
}

}  // namespace

TEST_CASE("parse ground truth and rasterize annotations") {
  const GroundTruthSet gt = parse_ground_truth(kSmallGt);
  REQUIRE(gt.images.size() == 2);
  REQUIRE(gt.annotations.size() == 2);
  CHECK(gt.images[0].file_name == "a.png");
  CHECK(gt.annotations[0].bbox == Xywh{2, 2, 4, 3});
  CHECK(annotation_mask(gt, gt.annotations[0]).area() == 12);
  const RleMask rle = annotation_mask(gt, gt.annotations[1]);
  CHECK(rle.area() == 4);
  CHECK(mask_bounds(rle) == BBox(0, 0, 2, 2));
}

TEST_CASE("serialize then parse is a fixpoint") {
  const GroundTruthSet gt = parse_ground_truth(kSmallGt);
  const std::string once = serialize_ground_truth(gt);
  const GroundTruthSet back = parse_ground_truth(once);
  CHECK(back == gt);
  CHECK(serialize_ground_truth(back) == once);

  DetectionFile f;
  f.records.push_back({1, 1, 0.93, {1.5, 2.25, 3, 4}, RleMask::encode(Bitmap::Ones(10, 20))});
  f.records.push_back({2, 1, 0.1, {0, 0, 1, 1}, std::monostate{}});
  const std::string s = serialize_detections(f);
  CHECK(s.find(std::string(kDetectionsSchema)) != std::string::npos);
  CHECK(parse_detections(s) == f);
  CHECK(serialize_detections(parse_detections(s)) == s);
}

TEST_CASE("validation collects every violation") {
  const auto v = violations_of(R"({
    "images": [{"id": 1, "width": 0, "height": 10}, {"id": 1, "width": 5, "height": 5}],
    "categories": [{"id": 1}],
    "annotations": [
      {"id": 1, "image_id": 9, "category_id": 1, "bbox": [0, 0, 1, 1], "area": 1},
      {"id": 1, "image_id": 1, "category_id": 4, "bbox": [0, 0, 1, 1], "area": 0},
      {"id": 3, "image_id": 1, "category_id": 1, "bbox": [0, 0, -1, 1], "area": 1}
    ]
  })");
  CHECK(v.size() >= 6);
  auto mentions = [&](const std::string& needle) {
    return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
  };
  CHECK(mentions("duplicate image id"));
  CHECK(mentions("width and height must be positive"));
  CHECK(mentions("missing image 9"));
  CHECK(mentions("duplicate annotation id"));
  CHECK(mentions("missing category 4"));
  CHECK(mentions("area must be positive"));
  CHECK(mentions("non-negative"));

  CHECK_THROWS_AS(parse_ground_truth(R"({"images": []})"), ValidationError);
  CHECK_THROWS_AS(parse_ground_truth(R"({"images": [], "categories": [], "annotations": [{"id": 1}]})"),
                  ValidationError);
}

TEST_CASE("malformed JSON reports a line") {
  try {
    parse_ground_truth("{\n  \"images\": [\n  oops\n]}", "gt.json");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("gt.json:3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_detections("[1, 2"), ParseError);
}

TEST_CASE("detection files") {
  const char* bare = R"([{"image_id": 1, "category_id": 1, "score": 0.9, "bbox": [2, 2, 4, 3],
                          "segmentation": [[2, 2, 6, 2, 6, 5, 2, 5]]}])";
  const DetectionFile f = parse_detections(bare);
  REQUIRE(f.records.size() == 1);
  const GroundTruthSet gt = parse_ground_truth(kSmallGt);
  const auto by_image = to_detections(f, gt);
  CHECK(by_image.size() == 2);
  CHECK(by_image.at(2).empty());
  REQUIRE(by_image.at(1).size() == 1);
  CHECK(by_image.at(1)[0].mask->area() == 12);
  CHECK(by_image.at(1)[0].box == BBox(2, 2, 6, 5));
  // Polygons need image sizes.
  CHECK_THROWS_AS(to_detections(f), ValidationError);

  CHECK_THROWS_AS(
      parse_detections(R"([{"image_id": 1, "category_id": 1, "score": 1.5, "bbox": [0, 0, 1, 1]}])"),
      ValidationError);
  CHECK_THROWS_AS(parse_detections(R"({"$schema": "other/v9", "detections": []})"), ValidationError);
  const auto unknown =
      parse_detections(R"([{"image_id": 42, "category_id": 1, "score": 0.5, "bbox": [0, 0, 1, 1]}])");
  CHECK_THROWS_AS(to_detections(unknown, gt), ValidationError);

  // Round trip through the in-memory form.
  const DetectionFile again = to_detection_file(to_detections(parse_detections(serialize_detections(
      to_detection_file(by_image)))));
  CHECK(again == to_detection_file(by_image));
}

TEST_CASE("compressed RLE strings round-trip") {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 200; ++t) {
    const int h = 1 + int(rng() % 80), w = 1 + int(rng() % 80);
    const RleMask m = RleMask::encode(oracle::random_bitmap(rng, h, w, 0.05 + double(rng() % 90) / 100));
    CHECK(rle_from_string(rle_to_string(m), h, w) == m);
  }
  const RleMask big = RleMask::full(1000, 1000);
  CHECK(rle_from_string(rle_to_string(big), 1000, 1000) == big);
  CHECK_THROWS_AS(rle_from_string("##", 2, 2), ParseError);
  CHECK_THROWS_AS(rle_from_string(rle_to_string(RleMask::full(2, 2)), 3, 3), InputError);
}

TEST_CASE("rasterized polygon area tracks the analytic area") {
  // Objects a few dozen pixels across or larger.
  for (double r : {15.5, 24.0, 40.0, 100.0}) {
    std::vector<Point> pts;
    for (int k = 0; k < 64; ++k) {
      const double a = 2 * std::numbers::pi * k / 64;
      pts.push_back({128 + r * std::cos(a), 128 + r * std::sin(a)});
    }
    const Polygon p(pts);
    // Shoelace area of the 64-gon.
    double shoe = 0;
    for (std::size_t i = 0, j = pts.size() - 1; i < pts.size(); j = i++)
      shoe += pts[j].x * pts[i].y - pts[i].x * pts[j].y;
    shoe = std::abs(shoe) / 2;
    const double got = double(polygon_to_mask(p, 256, 256).mask.area());
    CHECK(std::abs(got - shoe) <= 0.02 * shoe);
  }
}

TEST_CASE("split is a seeded partition") {
  const GroundTruthSet gt = many_images(1200);
  for (auto sizes : {std::vector<std::size_t>{1190, 10}, std::vector<std::size_t>{800, 200, 200}}) {
    const auto parts = split(gt, sizes, 42);
    REQUIRE(parts.size() == sizes.size());
    std::set<ImageId> seen;
    std::size_t anns = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      CHECK(parts[p].images.size() == sizes[p]);
      for (const auto& im : parts[p].images) CHECK(seen.insert(im.id).second);
      for (const auto& a : parts[p].annotations) CHECK(parts[p].find_image(a.image_id) != nullptr);
      anns += parts[p].annotations.size();
      CHECK_NOTHROW(validate(parts[p]));
    }
    CHECK(seen.size() == 1200);
    CHECK(anns == gt.annotations.size());
  }

  const std::vector<std::size_t> s{800, 400};
  CHECK(split(gt, s, 7) == split(gt, s, 7));
  CHECK_FALSE(split(gt, s, 7)[1].images == split(gt, s, 8)[1].images);
  // Input order of the images does not change the result.
  GroundTruthSet reversed = gt;
  std::reverse(reversed.images.begin(), reversed.images.end());
  std::set<ImageId> a, b;
  const auto pa = split(gt, s, 3), pb = split(reversed, s, 3);
  for (const auto& im : pa[1].images) a.insert(im.id);
  for (const auto& im : pb[1].images) b.insert(im.id);
  CHECK(a == b);

  const std::vector<std::size_t> bad{1000, 10};
  CHECK_THROWS_AS(split(gt, bad, 1), SizeMismatch);
}

TEST_CASE("atomic writes") {
  const auto dir = std::filesystem::temp_directory_path() / "stenokit_io_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "gt.json";
  const GroundTruthSet gt = parse_ground_truth(kSmallGt);
  save_ground_truth(gt, path);
  CHECK(load_ground_truth(path) == gt);
  write_file_atomic(path, "replaced");
  CHECK(read_file(path) == "replaced");
  for (const auto& e : std::filesystem::directory_iterator(dir)) CHECK(e.path().filename() == "gt.json");
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(read_file(dir / "nope.json"), InputError);
}
