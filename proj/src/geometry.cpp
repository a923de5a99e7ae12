#include "stenokit/geometry.hpp"

#include "stenokit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace stenokit {

BBox::BBox(double x1, double y1, double x2, double y2) : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
  if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2)) {
    throw InvalidBox("box coordinates must be finite");
  }
  if (x2 < x1 || y2 < y1) {
    throw InvalidBox("box has negative extent: (" + std::to_string(x1) + ", " + std::to_string(y1) +
                     ", " + std::to_string(x2) + ", " + std::to_string(y2) + ")");
  }
}

BBox BBox::from_xywh(const Xywh& b) { return BBox(b[0], b[1], b[0] + b[2], b[1] + b[3]); }

double box_area(const BBox& b) { return b.width() * b.height(); }

double box_intersection_area(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double box_iou(const BBox& a, const BBox& b) {
  const double inter = box_intersection_area(a, b);
  const double uni = box_area(a) + box_area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

// ---------------------------------------------------------------------------
// Polygon

Polygon::Polygon(std::vector<Point> vertices) : vertices_(std::move(vertices)) {
  if (vertices_.size() < 3) {
    throw InvalidPolygon("polygon needs at least 3 vertices, got " + std::to_string(vertices_.size()));
  }
  for (const auto& v : vertices_) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) throw InvalidPolygon("polygon vertex is not finite");
  }
}

Polygon Polygon::from_flat(std::span<const double> coords) {
  if (coords.size() % 2 != 0) throw InvalidPolygon("flat polygon has an odd number of coordinates");
  std::vector<Point> pts;
  pts.reserve(coords.size() / 2);
  for (std::size_t i = 0; i + 1 < coords.size(); i += 2) pts.push_back({coords[i], coords[i + 1]});
  return Polygon(std::move(pts));
}

std::vector<double> Polygon::to_flat() const {
  std::vector<double> out;
  out.reserve(vertices_.size() * 2);
  for (const auto& v : vertices_) {
    out.push_back(v.x);
    out.push_back(v.y);
  }
  return out;
}

bool Polygon::is_degenerate() const {
  const Point& o = vertices_.front();
  auto it = std::find_if(vertices_.begin(), vertices_.end(), [&](const Point& p) { return !(p == o); });
  if (it == vertices_.end()) return true;
  const double dx = it->x - o.x;
  const double dy = it->y - o.y;
  return std::all_of(vertices_.begin(), vertices_.end(),
                     [&](const Point& p) { return dx * (p.y - o.y) - dy * (p.x - o.x) == 0.0; });
}

BBox Polygon::bounds() const {
  double x1 = vertices_[0].x, x2 = x1, y1 = vertices_[0].y, y2 = y1;
  for (const auto& v : vertices_) {
    x1 = std::min(x1, v.x);
    x2 = std::max(x2, v.x);
    y1 = std::min(y1, v.y);
    y2 = std::max(y2, v.y);
  }
  return BBox(x1, y1, x2, y2);
}

// ---------------------------------------------------------------------------
// RLE

RleMask::RleMask(int height, int width, std::vector<Run> runs) : height_(height), width_(width) {
  if (height < 0 || width < 0) throw ShapeMismatch("mask dimensions must be non-negative");
  if (runs.empty()) runs.push_back(0);
  std::uint64_t total = 0;
  for (Run r : runs) total += r;
  if (total != pixel_count()) {
    throw ShapeMismatch("RLE runs sum to " + std::to_string(total) + " but mask has " +
                        std::to_string(pixel_count()) + " pixels");
  }
  runs_.reserve(runs.size());
  runs_.push_back(runs[0]);
  for (std::size_t k = 1; k < runs.size(); ++k) {
    if (runs[k] == 0) {
      // Zero run: the next run has the same value as the previous one.
      if (k + 1 < runs.size()) runs_.back() += runs[++k];
    } else {
      runs_.push_back(runs[k]);
    }
  }
}

RleMask RleMask::empty(int height, int width) {
  return RleMask(height, width, {static_cast<Run>(std::uint64_t(height) * std::uint64_t(width))});
}

RleMask RleMask::full(int height, int width) {
  return RleMask(height, width, {0, static_cast<Run>(std::uint64_t(height) * std::uint64_t(width))});
}

RleMask RleMask::encode(const Bitmap& bitmap) {
  std::vector<Run> runs;
  const Eigen::Index n = bitmap.size();
  const std::uint8_t* data = bitmap.data();
  bool value = false;
  Run count = 0;
  for (Eigen::Index p = 0; p < n; ++p) {
    const bool v = data[p] != 0;
    if (v != value) {
      runs.push_back(count);
      count = 0;
      value = v;
    }
    ++count;
  }
  runs.push_back(count);
  return RleMask(static_cast<int>(bitmap.rows()), static_cast<int>(bitmap.cols()), std::move(runs));
}

Bitmap RleMask::decode() const {
  Bitmap out = Bitmap::Zero(height_, width_);
  std::uint8_t* data = out.data();
  std::uint64_t pos = 0;
  bool value = false;
  for (Run r : runs_) {
    if (value) std::fill(data + pos, data + pos + r, std::uint8_t{1});
    pos += r;
    value = !value;
  }
  return out;
}

std::uint64_t RleMask::area() const {
  std::uint64_t a = 0;
  for (std::size_t k = 1; k < runs_.size(); k += 2) a += runs_[k];
  return a;
}

namespace {

void check_same_shape(const RleMask& a, const RleMask& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeMismatch("mask shapes differ: " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                        " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
}

// Walks the runs of one mask as a sequence of (length, value) segments.
class RunCursor {
 public:
  explicit RunCursor(const std::vector<RleMask::Run>& runs) : runs_(runs) { skip_empty(); }

  bool done() const { return index_ >= runs_.size(); }
  std::uint64_t remaining() const { return remaining_; }
  bool value() const { return index_ % 2 == 1; }

  void consume(std::uint64_t n) {
    remaining_ -= n;
    if (remaining_ == 0) {
      ++index_;
      skip_empty();
    }
  }

 private:
  void skip_empty() {
    while (index_ < runs_.size() && runs_[index_] == 0) ++index_;
    remaining_ = index_ < runs_.size() ? runs_[index_] : 0;
  }

  const std::vector<RleMask::Run>& runs_;
  std::size_t index_ = 0;
  std::uint64_t remaining_ = 0;
};

template <typename Visit>
void merge_runs(const RleMask& a, const RleMask& b, Visit&& visit) {
  RunCursor ca(a.runs());
  RunCursor cb(b.runs());
  while (!ca.done() && !cb.done()) {
    const std::uint64_t n = std::min(ca.remaining(), cb.remaining());
    visit(n, ca.value(), cb.value());
    ca.consume(n);
    cb.consume(n);
  }
}

}  // namespace

OverlapCounts mask_overlap(const RleMask& a, const RleMask& b) {
  check_same_shape(a, b);
  OverlapCounts c;
  merge_runs(a, b, [&](std::uint64_t n, bool va, bool vb) {
    if (va && vb) c.intersection += n;
    if (va || vb) c.union_ += n;
  });
  return c;
}

double mask_iou(const RleMask& a, const RleMask& b) {
  const OverlapCounts c = mask_overlap(a, b);
  if (c.union_ == 0) return 0.0;
  return static_cast<double>(c.intersection) / static_cast<double>(c.union_);
}

RleMask mask_union(const RleMask& a, const RleMask& b) {
  check_same_shape(a, b);
  std::vector<RleMask::Run> runs{0};
  bool current = false;
  merge_runs(a, b, [&](std::uint64_t n, bool va, bool vb) {
    const bool v = va || vb;
    if (v != current) {
      runs.push_back(0);
      current = v;
    }
    runs.back() += static_cast<RleMask::Run>(n);
  });
  return RleMask(a.height(), a.width(), std::move(runs));
}

RleMask mask_complement(const RleMask& m) {
  std::vector<RleMask::Run> runs;
  runs.reserve(m.runs().size() + 1);
  if (m.runs().front() == 0) {
    runs.assign(m.runs().begin() + 1, m.runs().end());
    if (runs.empty()) runs.push_back(0);
  } else {
    runs.push_back(0);
    runs.insert(runs.end(), m.runs().begin(), m.runs().end());
  }
  return RleMask(m.height(), m.width(), std::move(runs));
}

BBox mask_bounds(const RleMask& m) {
  const std::uint64_t h = static_cast<std::uint64_t>(m.height());
  bool any = false;
  std::uint64_t xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  std::uint64_t pos = 0;
  for (std::size_t k = 0; k < m.runs().size(); ++k) {
    const std::uint64_t len = m.runs()[k];
    if (k % 2 == 1 && len > 0) {
      const std::uint64_t first = pos;
      const std::uint64_t last = pos + len - 1;
      const std::uint64_t c0 = first / h, c1 = last / h;
      std::uint64_t r0 = first % h, r1 = last % h;
      if (c0 != c1) {
        r0 = 0;
        r1 = h - 1;
      }
      if (!any) {
        xmin = c0, xmax = c1, ymin = r0, ymax = r1;
        any = true;
      } else {
        xmin = std::min(xmin, c0);
        xmax = std::max(xmax, c1);
        ymin = std::min(ymin, r0);
        ymax = std::max(ymax, r1);
      }
    }
    pos += len;
  }
  if (!any) return BBox();
  return BBox(double(xmin), double(ymin), double(xmax + 1), double(ymax + 1));
}

// ---------------------------------------------------------------------------
// Rasterization

namespace {

// First column j with j + 0.5 >= x, clamped to [0, width].
int first_center_at_or_after(double x, int width) {
  if (x <= 0.5) return 0;
  if (x > width) return width;
  int j = static_cast<int>(std::ceil(x - 0.5));
  while (j > 0 && (j - 1) + 0.5 >= x) --j;
  while (j < width && j + 0.5 < x) ++j;
  return std::clamp(j, 0, width);
}

void fill_polygon(const Polygon& p, Bitmap& bitmap) {
  const int height = static_cast<int>(bitmap.rows());
  const int width = static_cast<int>(bitmap.cols());
  const auto& v = p.vertices();
  const std::size_t n = v.size();
  std::vector<double> xs;
  xs.reserve(n);
  for (int i = 0; i < height; ++i) {
    const double y = i + 0.5;
    xs.clear();
    for (std::size_t a = 0, b = n - 1; a < n; b = a++) {
      const Point& pa = v[a];
      const Point& pb = v[b];
      if ((pa.y > y) != (pb.y > y)) {
        xs.push_back((pb.x - pa.x) * (y - pa.y) / (pb.y - pa.y) + pa.x);
      }
    }
    std::sort(xs.begin(), xs.end());
    // A center at x is inside iff an odd number of crossings lie at or left of it.
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const int j0 = first_center_at_or_after(xs[k], width);
      const int j1 = first_center_at_or_after(xs[k + 1], width);
      for (int j = j0; j < j1; ++j) bitmap(i, j) ^= 1;
    }
  }
}

}  // namespace

PolygonMask polygon_to_mask(const Polygon& p, int height, int width) {
  if (height <= 0 || width <= 0) throw ShapeMismatch("canvas dimensions must be positive");
  if (p.is_degenerate()) return {RleMask::empty(height, width), true};
  Bitmap bitmap = Bitmap::Zero(height, width);
  fill_polygon(p, bitmap);
  return {RleMask::encode(bitmap), false};
}

RleMask polygons_to_mask(std::span<const Polygon> polygons, int height, int width) {
  if (height <= 0 || width <= 0) throw ShapeMismatch("canvas dimensions must be positive");
  Bitmap acc = Bitmap::Zero(height, width);
  Bitmap one(height, width);
  for (const auto& p : polygons) {
    if (p.is_degenerate()) continue;
    one.setZero();
    fill_polygon(p, one);
    acc = acc.max(one);
  }
  return RleMask::encode(acc);
}

}  // namespace stenokit
