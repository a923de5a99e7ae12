#pragma once

#include "stenokit/errors.hpp"
#include "stenokit/geometry.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stenokit {

template <typename Scalar>
using ProbVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MaskGrid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Box in the xywh regression parameterization.
template <typename Scalar>
using BoxVector = Eigen::Matrix<Scalar, 4, 1>;

template <typename Scalar>
inline constexpr Scalar kProbFloor = Scalar(1e-12);

struct LossGains {
  double cls = 1.0;
  double box = 1.0;
  double mask = 1.0;
};

template <typename Scalar>
struct LossComponents {
  Scalar cls = 0;
  Scalar box = 0;
  Scalar mask = 0;
};

template <typename Scalar>
struct LossBreakdown {
  Scalar total = 0;
  Scalar cls = 0;
  Scalar box = 0;
  Scalar mask = 0;
};

/// One sampled RoI with its predictions and targets.
template <typename Scalar>
struct RoiSample {
  ProbVector<Scalar> class_probs;
  int true_class = 0;
  BoxVector<Scalar> predicted_box = BoxVector<Scalar>::Zero();
  BoxVector<Scalar> true_box = BoxVector<Scalar>::Zero();
  MaskGrid<Scalar> predicted_mask;
  MaskGrid<Scalar> target_mask;
  bool is_positive = false;
};

/// Cross-entropy against a soft target distribution.
template <typename Scalar>
Scalar cls_loss_soft(const ProbVector<Scalar>& probs, const ProbVector<Scalar>& target) {
  if (probs.size() != target.size()) throw ShapeMismatch("probability and target vectors differ in length");
  return -(target.array() * probs.array().max(kProbFloor<Scalar>).log()).sum();
}

/// One-hot cross-entropy: -log p[true_class].
template <typename Scalar>
Scalar cls_loss(const ProbVector<Scalar>& probs, int true_class) {
  if (true_class < 0 || true_class >= probs.size()) {
    throw IndexOutOfRange("true class " + std::to_string(true_class) + " outside [0, " +
                          std::to_string(probs.size()) + ")");
  }
  return -std::log(std::max(probs[true_class], kProbFloor<Scalar>));
}

/// Sum of per-coordinate L1 distances in xywh.
template <typename Scalar>
Scalar box_loss(const BoxVector<Scalar>& pred, const BoxVector<Scalar>& target) {
  return (pred - target).cwiseAbs().sum();
}

/// Binary cross-entropy, pixel mean per mask, then mean over the N masks.
template <typename Scalar>
Scalar mask_loss(std::span<const MaskGrid<Scalar>> pred, std::span<const MaskGrid<Scalar>> target) {
  if (pred.size() != target.size()) throw ShapeMismatch("prediction and target mask counts differ");
  if (pred.empty()) throw EmptyBatch("mask loss needs at least one positive mask");
  const Scalar lo = kProbFloor<Scalar>;
  const Scalar hi = Scalar(1) - kProbFloor<Scalar>;
  Scalar sum(0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto& p = pred[i];
    const auto& y = target[i];
    if (p.rows() != y.rows() || p.cols() != y.cols()) {
      throw ShapeMismatch("mask " + std::to_string(i) + " prediction and target shapes differ");
    }
    if (p.size() == 0) throw ShapeMismatch("mask " + std::to_string(i) + " is empty");
    const MaskGrid<Scalar> q = p.max(lo).min(hi);
    const Scalar bce = -(y * q.log() + (Scalar(1) - y) * (Scalar(1) - q).log()).mean();
    sum += bce;
  }
  return sum / Scalar(pred.size());
}

template <typename Scalar>
LossBreakdown<Scalar> combine(const LossComponents<Scalar>& c, const LossGains& g) {
  LossBreakdown<Scalar> out;
  out.cls = c.cls;
  out.box = c.box;
  out.mask = c.mask;
  out.total = Scalar(g.cls) * c.cls + Scalar(g.box) * c.box + Scalar(g.mask) * c.mask;
  return out;
}

/// Throws on malformed probabilities or mismatched mask shapes.
template <typename Scalar>
void validate_sample(const RoiSample<Scalar>& s, std::size_t index) {
  const std::string where = "roi " + std::to_string(index) + ": ";
  if (s.class_probs.size() == 0) throw ShapeMismatch(where + "empty class probability vector");
  if ((s.class_probs.array() < Scalar(0)).any() || (s.class_probs.array() > Scalar(1)).any()) {
    throw InputError(where + "class probabilities must lie in [0, 1]");
  }
  if (std::abs(s.class_probs.sum() - Scalar(1)) > Scalar(1e-6)) {
    throw InputError(where + "class probabilities must sum to 1");
  }
  if (s.true_class < 0 || s.true_class >= s.class_probs.size()) throw IndexOutOfRange(where + "true class out of range");
  if (!s.is_positive) return;
  if (s.predicted_mask.rows() != s.target_mask.rows() || s.predicted_mask.cols() != s.target_mask.cols()) {
    throw ShapeMismatch(where + "mask prediction and target shapes differ");
  }
  if ((s.predicted_mask < Scalar(0)).any() || (s.predicted_mask > Scalar(1)).any()) {
    throw InputError(where + "mask probabilities must lie in [0, 1]");
  }
  if (((s.target_mask != Scalar(0)) && (s.target_mask != Scalar(1))).any()) {
    throw InputError(where + "target mask must be binary");
  }
}

/// Weighted multi-task loss. Classification is averaged over every RoI; box
/// and mask terms over positive RoIs only (zero when there are none).
template <typename Scalar>
LossBreakdown<Scalar> total_loss(std::span<const RoiSample<Scalar>> batch, const LossGains& gains = {}) {
  if (batch.empty()) throw EmptyBatch("loss batch is empty");
  LossComponents<Scalar> c;
  std::vector<MaskGrid<Scalar>> pred_masks, target_masks;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    validate_sample(s, i);
    c.cls += cls_loss(s.class_probs, s.true_class);
    if (s.is_positive) {
      ++positives;
      c.box += box_loss(s.predicted_box, s.true_box);
      pred_masks.push_back(s.predicted_mask);
      target_masks.push_back(s.target_mask);
    }
  }
  c.cls /= Scalar(batch.size());
  if (positives > 0) {
    c.box /= Scalar(positives);
    c.mask = mask_loss<Scalar>(pred_masks, target_masks);
  }
  return combine(c, gains);
}

struct PositiveAssignment {
  bool positive = false;
  std::optional<std::size_t> matched;
  double best_iou = 0.0;
};

inline constexpr double kPositiveRoiIou = 0.5;

/// Positive iff the best IoU against the ground truth is >= threshold. Ties
/// resolve to the lowest index.
PositiveAssignment assign_positive(const BBox& roi, std::span<const BBox> gt_boxes,
                                   double threshold = kPositiveRoiIou);

/// Crops the ground-truth mask to the RoI and resamples it to out_h x out_w by
/// nearest pixel-center lookup.
Bitmap mask_target(const BBox& roi, const RleMask& gt_mask, int out_h, int out_w);

}  // namespace stenokit
