#pragma once

#include "stenokit/errors.hpp"
#include "stenokit/geometry.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>

namespace stenokit {

/// Dense channel-major feature tensor (channels x height x width).
template <typename Scalar>
class FeatureMap {
 public:
  using Values = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Plane = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstPlane = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  FeatureMap() = default;
  FeatureMap(int channels, int height, int width)
      : channels_(channels), height_(height), width_(width), values_(Values::Zero(size_of(channels, height, width))) {}
  FeatureMap(int channels, int height, int width, Values values)
      : channels_(channels), height_(height), width_(width), values_(std::move(values)) {
    if (values_.size() != size_of(channels, height, width)) {
      throw ShapeMismatch("feature map holds " + std::to_string(values_.size()) + " values, expected " +
                          std::to_string(size_of(channels, height, width)));
    }
    if (!values_.allFinite()) throw ShapeMismatch("feature map values must be finite");
  }

  static FeatureMap constant(int channels, int height, int width, Scalar v) {
    return FeatureMap(channels, height, width, Values::Constant(size_of(channels, height, width), v));
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  const Values& values() const { return values_; }
  Values& values() { return values_; }

  Plane channel(int c) { return Plane(values_.data() + Eigen::Index(c) * height_ * width_, height_, width_); }
  ConstPlane channel(int c) const {
    return ConstPlane(values_.data() + Eigen::Index(c) * height_ * width_, height_, width_);
  }

  Scalar operator()(int c, int y, int x) const { return values_[(Eigen::Index(c) * height_ + y) * width_ + x]; }
  Scalar& operator()(int c, int y, int x) { return values_[(Eigen::Index(c) * height_ + y) * width_ + x]; }

 private:
  static Eigen::Index size_of(int c, int h, int w) {
    if (c < 0 || h < 0 || w < 0) throw ShapeMismatch("feature map dimensions must be non-negative");
    return Eigen::Index(c) * h * w;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  Values values_;
};

struct RoiAlignParams {
  int out_height = 7;
  int out_width = 7;
  int sampling_ratio = 2;
};

inline constexpr RoiAlignParams kBoxHeadPooling{7, 7, 2};
inline constexpr RoiAlignParams kMaskHeadPooling{14, 14, 2};

/// Bilinear value at pixel-index coordinates (y, x); pixels outside the map
/// read as zero.
template <typename Scalar>
Scalar bilinear_zero_padded(const FeatureMap<Scalar>& fm, int c, Scalar y, Scalar x) {
  const Scalar fy = std::floor(y);
  const Scalar fx = std::floor(x);
  const int y0 = static_cast<int>(fy);
  const int x0 = static_cast<int>(fx);
  const Scalar ly = y - fy, lx = x - fx;
  const Scalar hy = Scalar(1) - ly, hx = Scalar(1) - lx;
  auto at = [&](int yy, int xx) -> Scalar {
    if (yy < 0 || xx < 0 || yy >= fm.height() || xx >= fm.width()) return Scalar(0);
    return fm(c, yy, xx);
  };
  return hy * hx * at(y0, x0) + hy * lx * at(y0, x0 + 1) + ly * hx * at(y0 + 1, x0) + ly * lx * at(y0 + 1, x0 + 1);
}

/// RoI-Align with the half-pixel aligned convention: continuous coordinate c
/// lands on pixel index c - 0.5. Each output bin averages a
/// sampling_ratio x sampling_ratio grid of bilinear samples.
template <typename Scalar>
FeatureMap<Scalar> roi_align(const FeatureMap<Scalar>& fm, const BBox& roi, const RoiAlignParams& params = kBoxHeadPooling) {
  if (params.out_height < 1 || params.out_width < 1 || params.sampling_ratio < 1) {
    throw InvalidRoi("roi_align needs positive output size and sampling ratio");
  }
  if (roi.width() < 0.0 || roi.height() < 0.0) throw InvalidRoi("roi has negative extent");

  const int oh = params.out_height, ow = params.out_width, s = params.sampling_ratio;
  const Scalar start_x = Scalar(roi.x1()) - Scalar(0.5);
  const Scalar start_y = Scalar(roi.y1()) - Scalar(0.5);
  const Scalar bin_w = Scalar(roi.width()) / Scalar(ow);
  const Scalar bin_h = Scalar(roi.height()) / Scalar(oh);
  const Scalar inv_count = Scalar(1) / Scalar(s * s);

  FeatureMap<Scalar> out(fm.channels(), oh, ow);
  for (int c = 0; c < fm.channels(); ++c) {
    for (int py = 0; py < oh; ++py) {
      for (int px = 0; px < ow; ++px) {
        Scalar acc(0);
        for (int iy = 0; iy < s; ++iy) {
          const Scalar y = start_y + bin_h * (Scalar(py) + (Scalar(iy) + Scalar(0.5)) / Scalar(s));
          for (int ix = 0; ix < s; ++ix) {
            const Scalar x = start_x + bin_w * (Scalar(px) + (Scalar(ix) + Scalar(0.5)) / Scalar(s));
            acc += bilinear_zero_padded(fm, c, y, x);
          }
        }
        out(c, py, px) = acc * inv_count;
      }
    }
  }
  return out;
}

}  // namespace stenokit
