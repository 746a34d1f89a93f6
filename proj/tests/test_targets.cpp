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

#include "uoi/targets.hpp"

#include <array>
#include <vector>

#include <gtest/gtest.h>

#include "uoi/random.hpp"

namespace {

using uoi::Box;
using uoi::IouVariant;
using uoi::LossSpec;
using uoi::TargetMode;

Box random_box(uoi::RngStream& rng, double limit) {
  const double x1 = rng.uniform(0.0, limit - 1.0);
  const double y1 = rng.uniform(0.0, limit - 1.0);
  const double x2 = rng.uniform(x1 + 0.5, limit);
  const double y2 = rng.uniform(y1 + 0.5, limit);
  return Box(x1, y1, x2, y2);
}

TEST(IntersectionTarget, BasicCases) {
  const auto target =
      uoi::intersection_target(Box(0, 0, 10, 10), Box(5, 5, 15, 15));
  ASSERT_TRUE(target.has_value());
  EXPECT_EQ(target->target_box, Box(5, 5, 10, 10));
  EXPECT_EQ(target->mode, TargetMode::kIntersection);

  // A proposal containing the whole object regresses to the object itself.
  const auto contained =
      uoi::intersection_target(Box(0, 0, 20, 20), Box(5, 5, 15, 15));
  ASSERT_TRUE(contained.has_value());
  EXPECT_EQ(contained->target_box, Box(5, 5, 15, 15));

  EXPECT_FALSE(
      uoi::intersection_target(Box(0, 0, 2, 2), Box(5, 5, 9, 9)).has_value());
}

TEST(IntersectionLoss, MatchesPerCoordinateSums) {
  LossSpec l1;
  l1.exponent = 1;
  LossSpec l2;
  l2.exponent = 2;

  EXPECT_DOUBLE_EQ(
      uoi::intersection_loss(Box(1, 2, 3, 4), Box(1, 2, 3, 4), l1), 0.0);
  EXPECT_DOUBLE_EQ(
      uoi::intersection_loss(Box(0, 0, 1, 1), Box(1, 1, 2, 2), l1), 4.0);
  EXPECT_DOUBLE_EQ(
      uoi::intersection_loss(Box(0, 0, 2, 2), Box(1, 0, 2, 2), l2), 1.0);

  LossSpec bad;
  bad.exponent = 3;
  EXPECT_THROW(uoi::intersection_loss(Box(0, 0, 1, 1), Box(0, 0, 1, 1), bad),
               std::invalid_argument);
}

TEST(RefinementLoss, CenterSizeParameterization) {
  const std::vector<Box> a = {Box(0, 0, 10, 10)};
  EXPECT_DOUBLE_EQ(uoi::refinement_loss(a, a), 0.0);

  // Same size, center shifted by 2 in x only.
  const std::vector<Box> shifted = {Box(2, 0, 12, 10)};
  EXPECT_DOUBLE_EQ(uoi::refinement_loss(shifted, a), 2.0);

  // Additivity over pairs: losses 1 and 3.
  const std::vector<Box> refined = {Box(1, 0, 11, 10), Box(3, 0, 13, 10)};
  const std::vector<Box> gts = {Box(0, 0, 10, 10), Box(0, 0, 10, 10)};
  EXPECT_DOUBLE_EQ(uoi::refinement_loss(refined, gts), 1.0 + 3.0);

  const std::vector<Box> mismatched = {Box(0, 0, 1, 1)};
  EXPECT_THROW(uoi::refinement_loss(mismatched, gts), std::invalid_argument);
}

TEST(TotalLoss, LinearInRefinementTerm) {
  LossSpec spec;  // lambda defaults to 0.5
  EXPECT_DOUBLE_EQ(uoi::total_loss(2.0, 4.0, spec), 4.0);
  EXPECT_DOUBLE_EQ(uoi::total_loss(3.25, 0.0, spec), 3.25);
  spec.lambda = 1.0;
  EXPECT_DOUBLE_EQ(uoi::total_loss(0.0, 7.5, spec), 7.5);

  spec.lambda = 0.5;
  uoi::RngStream rng(3);
  for (int i = 0; i < 100; ++i) {
    const double l_int = rng.uniform(0.0, 10.0);
    const double a = rng.uniform(0.0, 10.0);
    const double b = rng.uniform(0.0, 10.0);
    const double slope = (uoi::total_loss(l_int, b, spec) -
                          uoi::total_loss(l_int, a, spec)) /
                         (b - a);
    EXPECT_NEAR(slope, spec.lambda, 1e-9);
  }
}

TEST(QuadrantPartition, ExactTiling) {
  const auto quadrants = uoi::quadrant_partition(Box(0, 0, 10, 10));
  EXPECT_EQ(quadrants[0], Box(0, 0, 5, 5));    // top-left
  EXPECT_EQ(quadrants[1], Box(5, 0, 10, 5));   // top-right
  EXPECT_EQ(quadrants[2], Box(0, 5, 5, 10));   // bottom-left
  EXPECT_EQ(quadrants[3], Box(5, 5, 10, 10));  // bottom-right

  uoi::RngStream rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const Box gt = random_box(rng, 100.0);
    const auto parts = uoi::quadrant_partition(gt);
    const Box merged =
        uoi::union_bounds(std::vector<Box>(parts.begin(), parts.end()));
    EXPECT_EQ(merged, gt);
    double area_sum = 0.0;
    for (const Box& part : parts) {
      EXPECT_NEAR(part.area(), gt.area() / 4.0, 1e-9 * gt.area());
      area_sum += part.area();
    }
    EXPECT_NEAR(area_sum, gt.area(), 1e-9 * gt.area());
    for (std::size_t i = 0; i < parts.size(); ++i) {
      for (std::size_t j = i + 1; j < parts.size(); ++j) {
        EXPECT_FALSE(intersect(parts[i], parts[j]).has_value());
      }
    }
  }

  EXPECT_THROW(uoi::quadrant_partition(Box(0, 0, 0, 10)),
               std::invalid_argument);
}

TEST(AssignToPart, MaxIouWithLowIndexTieBreak) {
  const auto parts = uoi::quadrant_partition(Box(0, 0, 10, 10));
  const std::vector<Box> part_list(parts.begin(), parts.end());

  EXPECT_EQ(uoi::assign_to_part(Box(0.5, 0.5, 4.5, 4.5), part_list), 0u);
  EXPECT_EQ(uoi::assign_to_part(part_list[2], part_list), 2u);
  // Symmetric straddle of quadrants 0 and 1: equal IoU, lowest index wins.
  EXPECT_EQ(uoi::assign_to_part(Box(2.5, 0, 7.5, 5), part_list), 0u);
  // Zero overlap with everything still produces the lowest index.
  EXPECT_EQ(uoi::assign_to_part(Box(50, 50, 60, 60), part_list), 0u);

  EXPECT_THROW(uoi::assign_to_part(Box(0, 0, 1, 1), std::vector<Box>{}),
               std::invalid_argument);
}

TEST(QuadrantTarget, FiltersByMinimumOverlap) {
  const Box gt(0, 0, 10, 10);
  const auto hit = uoi::quadrant_target(Box(0, 0, 5, 5), gt);
  ASSERT_TRUE(hit.has_value());
  EXPECT_EQ(hit->mode, TargetMode::kQuadrantPart);
  EXPECT_EQ(hit->target_box, Box(0, 0, 5, 5));

  EXPECT_FALSE(uoi::quadrant_target(Box(40, 40, 50, 50), gt).has_value());
  // The default cutoff is 0.1; a sliver overlap stays unassigned.
  EXPECT_FALSE(uoi::quadrant_target(Box(4.9, 4.9, 30, 30), gt).has_value());
  // A tighter cutoff rejects what the default accepts.
  EXPECT_TRUE(uoi::quadrant_target(Box(0, 0, 6, 6), gt, 0.1).has_value());
  EXPECT_FALSE(uoi::quadrant_target(Box(0, 0, 6, 6), gt, 0.9).has_value());
}

TEST(IouRegressionLoss, ZeroAtIdentityAndVariantRanges) {
  const Box a(0, 0, 10, 10);
  for (const IouVariant variant :
       {IouVariant::kIoU, IouVariant::kGIoU, IouVariant::kDIoU,
        IouVariant::kAlphaIoU}) {
    EXPECT_DOUBLE_EQ(uoi::iou_regression_loss(a, a, variant), 0.0);
  }
  const Box far_box(100, 100, 110, 110);
  EXPECT_DOUBLE_EQ(uoi::iou_regression_loss(a, far_box, IouVariant::kIoU), 1.0);
  const double g = uoi::iou_regression_loss(a, far_box, IouVariant::kGIoU);
  EXPECT_GT(g, 1.0);
  EXPECT_LT(g, 2.0);
  EXPECT_THROW(uoi::iou_regression_loss(a, a, IouVariant::kNone),
               std::invalid_argument);
}

// The intersection target never asks the regressor to move past a matched
// edge: per coordinate its residual is bounded by the full-box residual,
// strictly when the object extends beyond the proposal on that side.
TEST(IntersectionTarget, ResidualDominatedByFullBoxResidual) {
  uoi::RngStream rng(23);
  int checked = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    const Box proposal = random_box(rng, 50.0);
    const Box gt = random_box(rng, 50.0);
    const auto target = uoi::intersection_target(proposal, gt);
    if (!target) continue;
    ++checked;
    const Box& inter = target->target_box;
    const double pred[4] = {proposal.x1, proposal.y1, proposal.x2, proposal.y2};
    const double ic[4] = {inter.x1, inter.y1, inter.x2, inter.y2};
    const double gc[4] = {gt.x1, gt.y1, gt.x2, gt.y2};
    const bool extends[4] = {gt.x1 < proposal.x1, gt.y1 < proposal.y1,
                             gt.x2 > proposal.x2, gt.y2 > proposal.y2};
    for (int c = 0; c < 4; ++c) {
      const double err_int = std::abs(pred[c] - ic[c]);
      const double err_full = std::abs(pred[c] - gc[c]);
      ASSERT_LE(err_int, err_full);
      if (extends[c]) {
        ASSERT_LT(err_int, err_full);
      }
    }
  }
  ASSERT_GT(checked, 1000);
}

}  // namespace
