#pragma once

// Detection loss L = L_cls(p, p*) + beta * I * L_loc(t, t*) and its
// agreement-weighted form c * L. I is 1 when the anchor overlaps its matched
// ground truth by more than eta. The two loss terms are template parameters;
// defaults are cross-entropy and summed smooth-L1.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "annofuse/error.hpp"
#include "annofuse/records.hpp"

namespace annofuse {

using BoxOffsets = std::array<double, 4>;

struct LossInputs {
  /// Predicted class distribution.
  std::vector<double> class_probs;
  std::size_t true_class = 0;
  BoxOffsets predicted_offsets{};
  BoxOffsets target_offsets{};
  double anchor_gt_iou = 0.0;
  double beta = 1.0;
  double eta = 0.5;
  /// Agreement weight of the matched fused box.
  double confidence = 1.0;
};

inline void validate(const LossInputs& in) {
  if (in.class_probs.empty()) throw ValidationError("loss: empty class distribution");
  if (in.true_class >= in.class_probs.size()) throw ValidationError("loss: true class out of range");
  double sum = 0.0;
  for (double p : in.class_probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("loss: negative or non-finite probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ValidationError("loss: class probabilities must sum to 1");
  for (std::size_t i = 0; i < 4; ++i) {
    if (!std::isfinite(in.predicted_offsets[i]) || !std::isfinite(in.target_offsets[i])) {
      throw ValidationError("loss: non-finite box offset");
    }
  }
  if (!(in.anchor_gt_iou >= 0.0 && in.anchor_gt_iou <= 1.0)) throw ValidationError("loss: anchor IoU outside [0, 1]");
  if (!(in.beta > 0.0) || !std::isfinite(in.beta)) throw ValidationError("loss: beta must be positive");
  if (!(in.eta > 0.0 && in.eta < 1.0)) throw ValidationError("loss: eta must lie in (0, 1)");
  if (!(in.confidence > 0.0 && in.confidence <= 1.0)) throw ValidationError("loss: confidence must lie in (0, 1]");
}

/// 1 iff anchor_gt_iou > eta.
inline int objectness_indicator(double anchor_gt_iou, double eta) noexcept {
  return anchor_gt_iou > eta ? 1 : 0;
}

/// Probabilities below this are raised to it before taking the log.
inline constexpr double kProbabilityFloor = 1e-12;

struct CrossEntropy {
  double operator()(std::span<const double> probs, std::size_t true_class) const {
    return -std::log(std::max(probs[true_class], kProbabilityFloor));
  }
  /// d/dp[true] of the loss; zero elsewhere.
  double derivative(std::span<const double> probs, std::size_t true_class) const {
    return -1.0 / std::max(probs[true_class], kProbabilityFloor);
  }
};

struct SmoothL1 {
  static double term(double d) {
    const double a = std::abs(d);
    return a < 1.0 ? 0.5 * d * d : a - 0.5;
  }
  double operator()(const BoxOffsets& predicted, const BoxOffsets& target) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < 4; ++i) sum += term(predicted[i] - target[i]);
    return sum;
  }
};

template <class ClsLoss = CrossEntropy, class LocLoss = SmoothL1>
double base_loss(const LossInputs& in, const ClsLoss& cls = {}, const LocLoss& loc = {}) {
  validate(in);
  const double classification = cls(std::span<const double>(in.class_probs), in.true_class);
  if (!objectness_indicator(in.anchor_gt_iou, in.eta)) return classification;
  return classification + in.beta * loc(in.predicted_offsets, in.target_offsets);
}

/// c * L_cls + c * beta * I * L_loc.
template <class ClsLoss = CrossEntropy, class LocLoss = SmoothL1>
double earl_loss(const LossInputs& in, const ClsLoss& cls = {}, const LocLoss& loc = {}) {
  return in.confidence * base_loss(in, cls, loc);
}

struct WeightRow {
  std::string image_id;
  Box box;
  CategoryId category = 0;
  double weight = 0.0;

  friend bool operator==(const WeightRow&, const WeightRow&) = default;
};

/// Per-box training weights, one row per fused box in scene order.
struct WeightExport {
  std::vector<WeightRow> rows;

  friend bool operator==(const WeightExport&, const WeightExport&) = default;
};

inline WeightExport export_weights(const SceneSet<FusedBox>& fused) {
  WeightExport out;
  for (const auto& scene : fused) {
    for (const auto& f : scene.items) {
      if (!(f.confidence > 0.0 && f.confidence <= 1.0)) {
        throw ValidationError("image '" + scene.image_id + "': fused confidence " +
                              std::to_string(f.confidence) + " is not a valid weight in (0, 1]");
      }
      out.rows.push_back({scene.image_id, f.box, f.category, f.confidence});
    }
  }
  return out;
}

}  // namespace annofuse
