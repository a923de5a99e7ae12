#pragma once

#include "stenokit/geometry.hpp"
#include "stenokit/postprocess.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace stenokit {

/// Instance segmentation as stored on disk: absent, a list of polygons, or an
/// RLE mask.
using Segmentation = std::variant<std::monostate, std::vector<Polygon>, RleMask>;

struct ImageInfo {
  ImageId id = 0;
  int width = 0;
  int height = 0;
  std::string file_name;
  friend bool operator==(const ImageInfo&, const ImageInfo&) = default;
};

struct Category {
  int id = 0;
  std::string name;
  friend bool operator==(const Category&, const Category&) = default;
};

struct Annotation {
  std::int64_t id = 0;
  ImageId image_id = 0;
  int category_id = 0;
  Segmentation segmentation;
  Xywh bbox{};
  double area = 0.0;
  int iscrowd = 0;
  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// COCO-format ground truth.
struct GroundTruthSet {
  std::vector<ImageInfo> images;
  std::vector<Annotation> annotations;
  std::vector<Category> categories;

  const ImageInfo* find_image(ImageId id) const;
  std::vector<ImageId> image_ids() const;
  friend bool operator==(const GroundTruthSet&, const GroundTruthSet&) = default;
};

/// Collects every violation and throws ValidationError if there are any.
void validate(const GroundTruthSet& gt);

/// Rasterizes an annotation's segmentation at its image's size.
RleMask annotation_mask(const GroundTruthSet& gt, const Annotation& ann);

GroundTruthSet parse_ground_truth(std::string_view json, std::string_view source = "<memory>");
GroundTruthSet load_ground_truth(const std::filesystem::path& path);
std::string serialize_ground_truth(const GroundTruthSet& gt);
void save_ground_truth(const GroundTruthSet& gt, const std::filesystem::path& path);

/// One record of the detections file (COCO results compatible).
struct DetectionRecord {
  ImageId image_id = 0;
  int category_id = 0;
  double score = 0.0;
  Xywh bbox{};
  Segmentation segmentation;
  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

inline constexpr std::string_view kDetectionsSchema = "stenokit/detections/v1";

struct DetectionFile {
  std::vector<DetectionRecord> records;
  friend bool operator==(const DetectionFile&, const DetectionFile&) = default;
};

/// Accepts the versioned object form `{"$schema": ..., "detections": [...]}`
/// or a bare COCO results array.
DetectionFile parse_detections(std::string_view json, std::string_view source = "<memory>");
DetectionFile load_detections(const std::filesystem::path& path);
std::string serialize_detections(const DetectionFile& file);
void save_detections(const DetectionFile& file, const std::filesystem::path& path);

using DetectionsByImage = std::map<ImageId, std::vector<Detection>>;

/// Resolves records against the ground truth: image ids must exist and
/// polygon segmentations are rasterized at the image size. Every GT image gets
/// an entry, possibly empty.
DetectionsByImage to_detections(const DetectionFile& file, const GroundTruthSet& gt);
/// Same without ground truth; polygon segmentations are rejected because the
/// canvas size is unknown.
DetectionsByImage to_detections(const DetectionFile& file);

DetectionFile to_detection_file(const DetectionsByImage& dets);

/// COCO compressed RLE string codec.
std::string rle_to_string(const RleMask& m);
RleMask rle_from_string(std::string_view s, int height, int width);

/// Seeded partition of the images into consecutive parts of the given sizes.
/// Annotations follow their images; categories are copied into every part.
std::vector<GroundTruthSet> split(const GroundTruthSet& gt, std::span<const std::size_t> sizes, std::uint64_t seed);

/// Writes to a temporary sibling, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace stenokit
