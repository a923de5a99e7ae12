#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace stenokit {

/// Binary image, rows = height, cols = width. Eigen's default column-major
/// storage matches the RLE scan order.
using Bitmap = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// COCO external box form `[x, y, w, h]`.
using Xywh = std::array<double, 4>;

/// Axis-aligned box in continuous pixel coordinates, corner convention.
class BBox {
 public:
  BBox() = default;
  /// Throws InvalidBox on negative extent or non-finite coordinates.
  BBox(double x1, double y1, double x2, double y2);

  static BBox from_xywh(const Xywh& b);
  Xywh to_xywh() const { return {x1_, y1_, x2_ - x1_, y2_ - y1_}; }

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }
  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  double center_x() const { return 0.5 * (x1_ + x2_); }
  double center_y() const { return 0.5 * (y1_ + y2_); }

  friend bool operator==(const BBox&, const BBox&) = default;

 private:
  double x1_ = 0.0;
  double y1_ = 0.0;
  double x2_ = 0.0;
  double y2_ = 0.0;
};

double box_area(const BBox& b);
double box_intersection_area(const BBox& a, const BBox& b);
/// Continuous IoU (no +1 pixel convention); 0 when the union is empty.
double box_iou(const BBox& a, const BBox& b);

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Closed polygon with at least three finite vertices.
class Polygon {
 public:
  explicit Polygon(std::vector<Point> vertices);
  /// From a flat COCO list `[x0, y0, x1, y1, ...]`.
  static Polygon from_flat(std::span<const double> coords);

  const std::vector<Point>& vertices() const { return vertices_; }
  std::vector<double> to_flat() const;
  /// True when every vertex lies on one line.
  bool is_degenerate() const;
  /// Tight bounding box of the vertices (unclipped).
  BBox bounds() const;

  friend bool operator==(const Polygon&, const Polygon&) = default;

 private:
  std::vector<Point> vertices_;
};

/// Run-length encoded binary mask. Runs alternate background/foreground in
/// column-major order and always start with a (possibly empty) background
/// run. Only the leading run may be zero.
class RleMask {
 public:
  using Run = std::uint32_t;

  RleMask() = default;
  /// Validates and canonicalizes: interior zero runs are merged away.
  RleMask(int height, int width, std::vector<Run> runs);

  static RleMask empty(int height, int width);
  static RleMask full(int height, int width);
  static RleMask encode(const Bitmap& bitmap);

  Bitmap decode() const;

  int height() const { return height_; }
  int width() const { return width_; }
  const std::vector<Run>& runs() const { return runs_; }
  std::uint64_t pixel_count() const { return std::uint64_t(height_) * std::uint64_t(width_); }
  std::uint64_t area() const;

  friend bool operator==(const RleMask&, const RleMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<Run> runs_;
};

/// Foreground pixel counts used by mask IoU, kept as integers so callers can
/// compare ratios exactly.
struct OverlapCounts {
  std::uint64_t intersection = 0;
  std::uint64_t union_ = 0;
};

/// Computed on runs directly. Throws ShapeMismatch on differing dimensions.
OverlapCounts mask_overlap(const RleMask& a, const RleMask& b);
double mask_iou(const RleMask& a, const RleMask& b);

RleMask mask_union(const RleMask& a, const RleMask& b);
RleMask mask_complement(const RleMask& m);
/// Tight box around foreground pixels (pixel-edge coordinates); zero box for
/// an empty mask.
BBox mask_bounds(const RleMask& m);

struct PolygonMask {
  RleMask mask;
  bool degenerate = false;
};

/// Even-odd rasterization sampled at pixel centers (j + 0.5, i + 0.5). The
/// canvas bounds clip the polygon. Collinear polygons yield an empty mask with
/// `degenerate` set.
PolygonMask polygon_to_mask(const Polygon& p, int height, int width);

/// Union of the rasterizations of several polygons (one COCO annotation).
RleMask polygons_to_mask(std::span<const Polygon> polygons, int height, int width);

}  // namespace stenokit
