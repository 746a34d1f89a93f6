// Copyright 2026 The UoI Toolkit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>

namespace uoi {

/// Axis-aligned rectangle with continuous corner coordinates.
/// Width is x2 - x1 (no pixel +1 convention). Degenerate (zero-area) boxes
/// are valid values; inverted or non-finite coordinates are rejected.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  Box() = default;

  Box(double x1_, double y1_, double x2_, double y2_)
      : x1(x1_), y1(y1_), x2(x2_), y2(y2_) {
    if (!(std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
          std::isfinite(y2))) {
      throw std::invalid_argument("Box: coordinates must be finite");
    }
    if (x1 > x2 || y1 > y2) {
      throw std::invalid_argument("Box: requires x1 <= x2 and y1 <= y2");
    }
  }

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }

  bool contains(const Box& other) const {
    return x1 <= other.x1 && y1 <= other.y1 && x2 >= other.x2 &&
           y2 >= other.y2;
  }

  bool operator==(const Box& other) const = default;
};

/// Overlap rectangle of two boxes, or empty when the overlap has no
/// positive width and height. An empty overlap is a value, not an error.
inline std::optional<Box> intersect(const Box& a, const Box& b) {
  const double ix1 = std::max(a.x1, b.x1);
  const double iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2);
  const double iy2 = std::min(a.y2, b.y2);
  if (ix1 >= ix2 || iy1 >= iy2) {
    return std::nullopt;
  }
  return Box(ix1, iy1, ix2, iy2);
}

/// Intersection-over-union in [0, 1]. Two zero-area boxes yield 0 so that
/// degenerate candidates never match anything.
inline double iou(const Box& a, const Box& b) {
  const auto inter = intersect(a, b);
  if (!inter) {
    return 0.0;
  }
  const double inter_area = inter->area();
  const double union_area = a.area() + b.area() - inter_area;
  if (union_area <= 0.0) {
    return 0.0;
  }
  return inter_area / union_area;
}

/// Smallest box containing both inputs.
inline Box enclosing(const Box& a, const Box& b) {
  return Box(std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
             std::max(a.y2, b.y2));
}

/// Generalized IoU: subtracts the fraction of the enclosing box not covered
/// by the union. Falls back to plain IoU when the enclosing box is
/// degenerate.
inline double giou(const Box& a, const Box& b) {
  const double overlap = iou(a, b);
  const Box hull = enclosing(a, b);
  const double hull_area = hull.area();
  if (hull_area <= 0.0) {
    return overlap;
  }
  const auto inter = intersect(a, b);
  const double inter_area = inter ? inter->area() : 0.0;
  const double union_area = a.area() + b.area() - inter_area;
  return overlap - (hull_area - union_area) / hull_area;
}

/// Distance IoU: penalizes normalized center distance. Equals IoU when the
/// centers coincide.
inline double diou(const Box& a, const Box& b) {
  const double overlap = iou(a, b);
  const Box hull = enclosing(a, b);
  const double diag_sq =
      hull.width() * hull.width() + hull.height() * hull.height();
  if (diag_sq <= 0.0) {
    return overlap;
  }
  const double dx = a.center_x() - b.center_x();
  const double dy = a.center_y() - b.center_y();
  return overlap - (dx * dx + dy * dy) / diag_sq;
}

/// Power-transformed IoU, iou^alpha. The default alpha of 3 is the
/// canonical choice for the transform; any alpha > 0 is accepted.
inline double alpha_iou(const Box& a, const Box& b, double alpha = 3.0) {
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("alpha_iou: alpha must be > 0");
  }
  return std::pow(iou(a, b), alpha);
}

/// Coordinate-wise bounding box of a nonempty collection: min of the low
/// corners, max of the high corners.
inline Box union_bounds(std::span<const Box> boxes) {
  if (boxes.empty()) {
    throw std::invalid_argument("union_bounds: empty box list");
  }
  double x1 = boxes[0].x1;
  double y1 = boxes[0].y1;
  double x2 = boxes[0].x2;
  double y2 = boxes[0].y2;
  for (const Box& b : boxes.subspan(1)) {
    x1 = std::min(x1, b.x1);
    y1 = std::min(y1, b.y1);
    x2 = std::max(x2, b.x2);
    y2 = std::max(y2, b.y2);
  }
  return Box(x1, y1, x2, y2);
}

}  // namespace uoi
