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

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>

#include "uoi/box.hpp"

namespace uoi {

/// What a regression head is asked to predict for a proposal.
enum class TargetMode {
  kFullGroundTruth,  // the whole annotated box
  kIntersection,     // only the overlap between proposal and ground truth
  kQuadrantPart,     // one quadrant of the ground truth
};

struct RegressionTarget {
  Box target_box;
  TargetMode mode = TargetMode::kFullGroundTruth;
};

enum class IouVariant { kNone, kIoU, kGIoU, kDIoU, kAlphaIoU };

/// Knobs of the regression objective. `exponent` selects L1 vs L2 on the
/// corner residuals; `lambda` weights the refinement term in the combined
/// loss; `alpha` only applies to the AlphaIoU variant.
struct LossSpec {
  int exponent = 1;  // 1 or 2
  double lambda = 0.5;
  IouVariant iou_variant = IouVariant::kNone;
  double alpha = 3.0;
};

/// Intersection-mode target for a proposal: the overlap with the ground
/// truth. Disjoint pairs have no target and stay unassigned.
inline std::optional<RegressionTarget> intersection_target(const Box& proposal,
                                                           const Box& gt) {
  const auto inter = intersect(proposal, gt);
  if (!inter) {
    return std::nullopt;
  }
  return RegressionTarget{*inter, TargetMode::kIntersection};
}

/// Sum over the four corner coordinates of |pred_i - target_i|^t.
inline double intersection_loss(const Box& pred, const Box& target,
                                const LossSpec& spec) {
  if (spec.exponent != 1 && spec.exponent != 2) {
    throw std::invalid_argument("intersection_loss: exponent must be 1 or 2");
  }
  const std::array<double, 4> diffs = {
      pred.x1 - target.x1, pred.y1 - target.y1, pred.x2 - target.x2,
      pred.y2 - target.y2};
  double total = 0.0;
  for (double d : diffs) {
    const double a = std::abs(d);
    total += spec.exponent == 1 ? a : a * a;
  }
  return total;
}

/// Second-stage loss: absolute differences in center-size parameterization
/// (x, y, w, h), summed over paired boxes. Coordinates are unnormalized.
inline double refinement_loss(std::span<const Box> refined,
                              std::span<const Box> gts) {
  if (refined.size() != gts.size()) {
    throw std::invalid_argument("refinement_loss: length mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < refined.size(); ++i) {
    total += std::abs(refined[i].center_x() - gts[i].center_x());
    total += std::abs(refined[i].center_y() - gts[i].center_y());
    total += std::abs(refined[i].width() - gts[i].width());
    total += std::abs(refined[i].height() - gts[i].height());
  }
  return total;
}

/// Combined objective: intersection term plus lambda-weighted refinement
/// term.
inline double total_loss(double l_intersection, double l_refinement,
                         const LossSpec& spec) {
  return l_intersection + spec.lambda * l_refinement;
}

/// Splits a ground truth box at its center into four part targets, ordered
/// top-left, top-right, bottom-left, bottom-right (y grows downward).
inline std::array<Box, 4> quadrant_partition(const Box& gt) {
  if (gt.width() <= 0.0 || gt.height() <= 0.0) {
    throw std::invalid_argument("quadrant_partition: degenerate ground truth");
  }
  const double cx = gt.center_x();
  const double cy = gt.center_y();
  return {
      Box(gt.x1, gt.y1, cx, cy),
      Box(cx, gt.y1, gt.x2, cy),
      Box(gt.x1, cy, cx, gt.y2),
      Box(cx, cy, gt.x2, gt.y2),
  };
}

/// Index of the part with maximum IoU against the proposal; ties and the
/// all-zero-overlap case resolve to the lowest index. Callers that need a
/// minimum overlap filter on the returned IoU themselves.
inline std::size_t assign_to_part(const Box& proposal,
                                  std::span<const Box> parts) {
  if (parts.empty()) {
    throw std::invalid_argument("assign_to_part: empty part list");
  }
  std::size_t best = 0;
  double best_iou = iou(proposal, parts[0]);
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const double v = iou(proposal, parts[i]);
    if (v > best_iou) {
      best_iou = v;
      best = i;
    }
  }
  return best;
}

/// Quadrant-mode target: the best-overlapping quadrant of the ground truth,
/// or empty when even the best overlap is below `min_iou`.
inline std::optional<RegressionTarget> quadrant_target(const Box& proposal,
                                                       const Box& gt,
                                                       double min_iou = 0.1) {
  const auto parts = quadrant_partition(gt);
  const std::size_t idx = assign_to_part(proposal, parts);
  if (iou(proposal, parts[idx]) < min_iou) {
    return std::nullopt;
  }
  return RegressionTarget{parts[idx], TargetMode::kQuadrantPart};
}

/// 1 - overlap(pred, target) for the chosen IoU family member. Zero exactly
/// when the boxes coincide.
inline double iou_regression_loss(const Box& pred, const Box& target,
                                  IouVariant variant, double alpha = 3.0) {
  switch (variant) {
    case IouVariant::kIoU:
      return 1.0 - iou(pred, target);
    case IouVariant::kGIoU:
      return 1.0 - giou(pred, target);
    case IouVariant::kDIoU:
      return 1.0 - diou(pred, target);
    case IouVariant::kAlphaIoU:
      return 1.0 - alpha_iou(pred, target, alpha);
    case IouVariant::kNone:
      break;
  }
  throw std::invalid_argument("iou_regression_loss: no IoU variant selected");
}

}  // namespace uoi
