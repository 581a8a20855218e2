#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "annofuse/error.hpp"

namespace annofuse {

/// Axis-aligned rectangle in corner form. Zero-area boxes are allowed,
/// negative extents are not.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }

  static Box from_xywh(double x, double y, double w, double h) noexcept {
    return Box{x, y, x + w, y + h};
  }

  friend bool operator==(const Box&, const Box&) = default;
};

inline bool is_valid(const Box& b) noexcept {
  return std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) &&
         std::isfinite(b.y2) && b.x1 <= b.x2 && b.y1 <= b.y2;
}

inline std::string to_string(const Box& b) {
  return "(" + std::to_string(b.x1) + ", " + std::to_string(b.y1) + ", " +
         std::to_string(b.x2) + ", " + std::to_string(b.y2) + ")";
}

/// Throws ValidationError unless `b` is finite with nonnegative extent.
inline const Box& require_valid(const Box& b) {
  if (!is_valid(b)) {
    throw ValidationError("invalid box " + to_string(b) +
                          ": coordinates must be finite with x1 <= x2 and y1 <= y2");
  }
  return b;
}

inline double area(const Box& b) noexcept { return b.width() * b.height(); }

inline double intersection_area(const Box& a, const Box& b) noexcept {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

/// Intersection over union. Defined as 0 when the union is empty, so two
/// degenerate boxes never match even if they coincide.
inline double iou(const Box& a, const Box& b) noexcept {
  const double inter = intersection_area(a, b);
  const double uni = area(a) + area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Weight-normalized mean of each corner coordinate.
inline Box weighted_average(std::span<const Box> boxes, std::span<const double> weights) {
  if (boxes.empty()) throw ValidationError("weighted_average: empty box list");
  if (boxes.size() != weights.size()) {
    throw ValidationError("weighted_average: " + std::to_string(boxes.size()) + " boxes but " +
                          std::to_string(weights.size()) + " weights");
  }
  double total = 0.0;
  Box acc{};
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const double w = weights[i];
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw ValidationError("weighted_average: weight " + std::to_string(i) +
                            " must be positive and finite");
    }
    total += w;
    acc.x1 += w * boxes[i].x1;
    acc.y1 += w * boxes[i].y1;
    acc.x2 += w * boxes[i].x2;
    acc.y2 += w * boxes[i].y2;
  }
  Box out{acc.x1 / total, acc.y1 / total, acc.x2 / total, acc.y2 / total};

  // Rounding can push a mean a hair outside the inputs' hull; pull it back.
  auto hull = [&](double Box::*field, double v) {
    double lo = boxes[0].*field;
    double hi = lo;
    for (const Box& b : boxes) {
      lo = std::min(lo, b.*field);
      hi = std::max(hi, b.*field);
    }
    return std::clamp(v, lo, hi);
  };
  out.x1 = hull(&Box::x1, out.x1);
  out.y1 = hull(&Box::y1, out.y1);
  out.x2 = std::max(out.x1, hull(&Box::x2, out.x2));
  out.y2 = std::max(out.y1, hull(&Box::y2, out.y2));
  return out;
}

}  // namespace annofuse
